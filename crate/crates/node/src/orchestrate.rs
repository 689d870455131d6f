use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context as _};
use lisps_core::clock::{Clock, SystemClock};
use lisps_core::config::Config;
use lisps_core::fog::AlertRef;
use lisps_core::ledger::{Actions, Call, Genesis, Keypair};
use lisps_core::security::{features_resource, Account, LedgerView};
use lisps_core::sim::{evaluate, gen_frames, replay_edge, scenario_from_config, Labels, Metrics};

use crate::client::HttpLedger;
use crate::fog::{count_logged_frames, ALERTS_FILE, EVENTS_FILE, SCORES_FILE};

/// Expiry of the grants issued by the orchestrator (2100-01-01). Fixed so that the contract
/// state, and hence its digest, does not depend on when the run started.
pub const SIM_GRANT_EXPIRY_MS: u64 = 4_102_444_800_000;

pub const METRICS_FILE: &str = "metrics.txt";
/// Canonical alert file: the fog's alert lines sorted by time, then camera.
pub const CANONICAL_ALERTS_FILE: &str = "alerts.log";

pub fn miner_key_name(i: usize) -> String {
    format!("lisps-sim-miner-{i}")
}

pub const ADMIN_KEY_NAME: &str = "lisps-sim-admin";
pub const FOG_KEY_NAME: &str = "lisps-sim-fog";

pub fn edge_key_name(camera: &str) -> String {
    format!("lisps-sim-edge-{camera}")
}

/// The `lisps` binary: `$LISPS_EXE`, the running executable if it is `lisps`, or a `lisps`
/// next to it (or one directory up, for test binaries under `deps/`).
pub fn lisps_exe() -> anyhow::Result<PathBuf> {
    if let Some(p) = std::env::var_os("LISPS_EXE") {
        return Ok(PathBuf::from(p));
    }
    let me = std::env::current_exe()?;
    if me.file_stem().is_some_and(|s| s == "lisps") {
        return Ok(me);
    }
    let name = format!("lisps{}", std::env::consts::EXE_SUFFIX);
    let dir = me.parent().ok_or_else(|| anyhow!("no parent dir"))?;
    for d in [Some(dir), dir.parent()].into_iter().flatten() {
        let p = d.join(&name);
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("cannot find the lisps binary; set LISPS_EXE")
}

pub struct SimOptions {
    pub config: Config,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub exe: PathBuf,
    /// Limit for the whole run after the ledger is up.
    pub timeout: Duration,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: Metrics,
    /// Canonical (sorted) alert lines.
    pub alerts: Vec<String>,
    pub digest: String,
    pub out_dir: PathBuf,
    /// `SUMMARY` line of every edge.
    pub edge_summaries: Vec<String>,
}

/// Child processes killed and reaped on drop.
struct Children(Vec<(String, Child)>);

impl Children {
    fn spawn(&mut self, name: &str, exe: &Path, args: &[String], log_dir: &Path) -> anyhow::Result<()> {
        let log = File::create(log_dir.join(format!("{name}.log")))?;
        let child = Command::new(exe)
            .args(args)
            .stdin(Stdio::null())
            .stdout(log.try_clone()?)
            .stderr(log)
            .env("RUST_LOG", std::env::var("RUST_LOG").unwrap_or_else(|_| "info".into()))
            .spawn()
            .with_context(|| format!("spawn {name}"))?;
        self.0.push((name.to_string(), child));
        Ok(())
    }

    /// Waits for the named children to exit; errors on timeout or a failed exit.
    fn wait_for(&mut self, names: &[String], deadline: Instant) -> anyhow::Result<()> {
        for name in names {
            let (_, child) = self
                .0
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| anyhow!("no child {name}"))?;
            let status: ExitStatus = loop {
                if let Some(s) = child.try_wait()? {
                    break s;
                }
                if Instant::now() >= deadline {
                    bail!("{name} did not finish in time");
                }
                std::thread::sleep(Duration::from_millis(50));
            };
            if !status.success() {
                bail!("{name} exited with {status}");
            }
        }
        Ok(())
    }

    fn exited(&mut self) -> Option<String> {
        self.0
            .iter_mut()
            .find_map(|(n, c)| matches!(c.try_wait(), Ok(Some(_))).then(|| n.clone()))
    }
}

impl Drop for Children {
    fn drop(&mut self) {
        for (_, c) in &mut self.0 {
            let _ = c.kill();
        }
        for (_, c) in &mut self.0 {
            let _ = c.wait();
        }
    }
}

fn wait_addr(path: &Path, children: &mut Children, timeout: Duration) -> anyhow::Result<String> {
    let start = Instant::now();
    loop {
        if let Ok(text) = std::fs::read_to_string(path) {
            let addr = text.trim();
            if !addr.is_empty() {
                return Ok(addr.to_string());
            }
        }
        if let Some(n) = children.exited() {
            bail!("{n} exited during startup; see its log");
        }
        if start.elapsed() >= timeout {
            bail!("{} not written in time", path.display());
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn s(v: impl ToString) -> String {
    v.to_string()
}

/// Runs a scenario as separate processes: the miners, one edge per camera and the fog
/// node, on loopback. Writes the canonical alert file and the metrics into `out_dir`.
pub fn run_scenario(opts: &SimOptions) -> anyhow::Result<SimOutcome> {
    let out = std::path::absolute(&opts.out_dir)?;
    std::fs::create_dir_all(&out)?;
    let logs = out.join("logs");
    std::fs::create_dir_all(&logs)?;
    let data = out.join("data");
    if data.exists() {
        std::fs::remove_dir_all(&data)?;
    }
    for stale in std::fs::read_dir(&out)?.filter_map(|e| e.ok()).map(|e| e.path()) {
        if stale.extension().is_some_and(|e| e == "addr") {
            std::fs::remove_file(stale)?;
        }
    }

    let mut config = opts.config.clone();
    config.fog.storage_root = data.clone();
    let cfg_path = out.join("run.cfg");
    std::fs::write(&cfg_path, config.to_ini())?;

    let n = config.ledger.miners;
    let admin = Keypair::from_name(ADMIN_KEY_NAME);
    let genesis = Genesis {
        timestamp_ms: SystemClock.now_ms(),
        block_interval_ms: config.ledger.block_interval_ms,
        miners: (0..n).map(|i| Keypair::from_name(&miner_key_name(i)).address()).collect(),
        admins: vec![admin.address()],
    };
    let genesis_path = out.join("genesis.txt");
    std::fs::write(&genesis_path, genesis.to_string())?;
    let peers_path = out.join("peers.txt");
    std::fs::write(&peers_path, "")?;

    let mut children = Children(Vec::new());
    let startup = Duration::from_secs(20);
    let mut miners = Vec::new();
    for i in 0..n {
        let addr_file = out.join(format!("miner-{i}.addr"));
        children.spawn(
            &format!("miner-{i}"),
            &opts.exe,
            &[
                s("miner"),
                s("--genesis"),
                genesis_path.display().to_string(),
                s("--key"),
                miner_key_name(i),
                s("--listen"),
                s("127.0.0.1:0"),
                s("--addr-file"),
                addr_file.display().to_string(),
                s("--peers-file"),
                peers_path.display().to_string(),
            ],
            &logs,
        )?;
        miners.push(addr_file);
    }
    let miner_addrs: Vec<String> = miners
        .iter()
        .map(|p| wait_addr(p, &mut children, startup))
        .collect::<anyhow::Result<_>>()?;
    std::fs::write(&peers_path, miner_addrs.join("\n") + "\n")?;
    let ledger_arg = miner_addrs.join(",");
    let ledger = HttpLedger::connect_within(&miner_addrs, startup)?;

    enroll(&ledger, &admin, &config)?;

    let deadline = Instant::now() + opts.timeout;
    let mut edge_names = Vec::new();
    let mut edge_addrs = Vec::new();
    for cam in &config.sim.cameras {
        let name = format!("edge-{cam}");
        let addr_file = out.join(format!("{name}.addr"));
        children.spawn(
            &name,
            &opts.exe,
            &[
                s("edge"),
                s("--config"),
                cfg_path.display().to_string(),
                s("--seed"),
                s(opts.seed),
                s("--camera"),
                cam.clone(),
                s("--listen"),
                s("127.0.0.1:0"),
                s("--addr-file"),
                addr_file.display().to_string(),
                s("--ledger"),
                ledger_arg.clone(),
                s("--key"),
                edge_key_name(cam),
                s("--out"),
                out.display().to_string(),
                s("--wait-subscriber"),
                s("60"),
            ],
            &logs,
        )?;
        edge_addrs.push(wait_addr(&addr_file, &mut children, startup)?);
        edge_names.push(name);
    }
    let mut fog_args = vec![
        s("fog"),
        s("--config"),
        cfg_path.display().to_string(),
        s("--seed"),
        s(opts.seed),
        s("--key"),
        s(FOG_KEY_NAME),
        s("--out"),
        out.display().to_string(),
    ];
    for a in &edge_addrs {
        fog_args.push(s("--edge"));
        fog_args.push(a.clone());
    }
    children.spawn("fog", &opts.exe, &fog_args, &logs)?;

    let mut finished = edge_names.clone();
    finished.push(s("fog"));
    children.wait_for(&finished, deadline)?;

    let digest = converged_digest(&miner_addrs, Duration::from_millis(config.ledger.block_interval_ms * (n as u64 + 5)))?;
    drop(children);

    let outcome = collect(&config, opts.seed, &out, digest)?;
    Ok(outcome)
}

/// Registers the edge and fog keys and grants them their capabilities, all in one batch.
fn enroll(ledger: &HttpLedger, admin: &Keypair, config: &Config) -> anyhow::Result<()> {
    let admin = Account::new(admin.clone());
    let fog = Keypair::from_name(FOG_KEY_NAME);
    let mut calls = vec![Call::Register { address: fog.address() }];
    for cam in &config.sim.cameras {
        let edge = Keypair::from_name(&edge_key_name(cam));
        calls.push(Call::Register { address: edge.address() });
        calls.push(Call::Grant {
            subject: edge.vid(),
            resource: format!("camera/{cam}"),
            actions: Actions::MANAGE,
            expiry_ms: SIM_GRANT_EXPIRY_MS,
        });
        calls.push(Call::Grant {
            subject: fog.vid(),
            resource: features_resource(cam),
            actions: Actions::READ,
            expiry_ms: SIM_GRANT_EXPIRY_MS,
        });
    }
    let mut ids = Vec::new();
    for call in &calls {
        let tx = admin.sign(ledger, call)?;
        ids.push(ledger.submit(&tx)?);
    }
    let timeout = Duration::from_millis(config.ledger.block_interval_ms * (config.ledger.miners as u64 + 5));
    for id in ids {
        let r = ledger.wait_receipt(&id, timeout)?;
        if let Err(reason) = r.outcome {
            bail!("enrollment transaction failed: {reason}");
        }
    }
    Ok(())
}

/// Waits until every miner reports the same head and state digest with an empty pool.
fn converged_digest(miners: &[String], timeout: Duration) -> anyhow::Result<String> {
    let views: Vec<HttpLedger> = miners
        .iter()
        .map(|m| HttpLedger::connect(std::slice::from_ref(m)))
        .collect::<Result<_, _>>()?;
    let start = Instant::now();
    loop {
        let heads: Vec<_> = views.iter().map(|v| v.head()).collect::<Result<_, _>>()?;
        let digests: Vec<String> = views.iter().map(|v| v.digest()).collect::<Result<_, _>>()?;
        let same_head = heads.windows(2).all(|w| w[0].hash == w[1].hash);
        let idle = heads.iter().all(|h| h.pending == 0);
        if same_head && idle && digests.windows(2).all(|w| w[0] == w[1]) {
            return Ok(digests[0].clone());
        }
        if start.elapsed() >= timeout {
            bail!("miners did not converge: heads {heads:?}, digests {digests:?}");
        }
        std::thread::sleep(Duration::from_millis(100));
    }
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)
        .with_context(|| path.display().to_string())?
        .lines()
        .map(String::from)
        .collect())
}

/// Builds the metrics from the event logs of a finished run.
fn collect(config: &Config, seed: u64, out: &Path, digest: String) -> anyhow::Result<SimOutcome> {
    let scenario = scenario_from_config(seed, config);
    let mut edge_cfg = config.edge.pipeline.clone();
    edge_cfg.frame_rate = scenario.frame_rate;
    let mut labels = Labels::new();
    for stream in gen_frames(&scenario)? {
        let r = replay_edge(&stream, &edge_cfg, scenario.epoch_ms)?;
        labels.extend(r.labels.into_iter().map(|(o, a)| ((stream.camera.clone(), o), a)));
    }

    let mut metrics = Metrics::default();
    let mut captured: BTreeMap<(String, u64), u64> = BTreeMap::new();
    let mut summaries = Vec::new();
    for cam in &config.sim.cameras {
        for line in read_lines(&out.join(format!("edge-{cam}.events")))? {
            let parts: Vec<&str> = line.split(' ').collect();
            match parts.as_slice() {
                ["CAPTURE", frame, wall] => {
                    captured.insert((cam.clone(), frame.parse()?), wall.parse()?);
                }
                ["SUMMARY", ..] => {
                    for p in &parts[1..] {
                        match p.split_once('=') {
                            Some(("frames", v)) => {
                                metrics.frames_sent.insert(cam.clone(), v.parse()?);
                            }
                            Some(("fps", v)) => {
                                metrics.edge_fps.insert(cam.clone(), v.parse()?);
                            }
                            _ => {}
                        }
                    }
                    summaries.push(line.clone());
                }
                _ => {}
            }
        }
        metrics
            .frames_logged
            .insert(cam.clone(), count_logged_frames(&config.fog.storage_root.join(cam))?);
    }
    for line in read_lines(&out.join(EVENTS_FILE))? {
        let parts: Vec<&str> = line.split(' ').collect();
        match parts.as_slice() {
            ["PROC", _, _, ms] => metrics.fog_frame_ms.push(ms.parse()?),
            ["ALERTED", cam, frame, _, wall] => {
                let at: u64 = wall.parse()?;
                if let Some(c) = captured.get(&(cam.to_string(), frame.parse()?)) {
                    metrics.alert_latency_ms.push(at.saturating_sub(*c) as f64);
                }
            }
            _ => {}
        }
    }
    let mut scores = Vec::new();
    for line in read_lines(&out.join(SCORES_FILE))? {
        if let ["SCORE", cam, _, obj, score] = line.split(' ').collect::<Vec<_>>().as_slice() {
            scores.push((cam.to_string(), obj.parse()?, score.parse::<f64>()?));
        }
    }
    let mut alerts = read_lines(&out.join(ALERTS_FILE))?;
    alerts.sort();
    let refs: Vec<AlertRef> = alerts.iter().filter_map(|l| AlertRef::parse(l)).collect();
    let (actors, confusion) = evaluate(&scenario, &labels, scores.iter().map(|(c, o, s)| (c.as_str(), *o, *s)), &refs);
    metrics.alerts = alerts.len();
    metrics.actors = actors;
    metrics.confusion = confusion;
    metrics.state_digest = Some(digest.clone());

    let mut canonical = alerts.join("\n");
    if !canonical.is_empty() {
        canonical.push('\n');
    }
    std::fs::write(out.join(CANONICAL_ALERTS_FILE), canonical)?;
    std::fs::write(out.join(METRICS_FILE), metrics.to_text())?;
    Ok(SimOutcome {
        metrics,
        alerts,
        digest,
        out_dir: out.to_path_buf(),
        edge_summaries: summaries,
    })
}
