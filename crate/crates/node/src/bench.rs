use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use lisps_core::clock::{Clock, SystemClock};
use lisps_core::config::Config;
use lisps_core::ledger::{Actions, Keypair};
use lisps_core::security::{grant_access, register_entity, Account, LocalLedger};
use lisps_core::sim::percentile;

use crate::edge::{run_edge, EdgeOptions, EdgeReport};
use crate::orchestrate::{edge_key_name, run_scenario, SimOptions, SimOutcome};

const WAIT: Duration = Duration::from_secs(5);

/// Edge throughput against an in-process single-miner ledger. `paced` holds the configured
/// frame rate and counts missed deadlines; unpaced measures the maximum rate.
pub fn edge_throughput(config: &Config, seed: u64, paced: bool) -> anyhow::Result<EdgeReport> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let admin = Keypair::from_name("lisps-bench-admin");
    let ledger = Arc::new(LocalLedger::single(
        Keypair::from_name("lisps-bench-miner"),
        &admin,
        clock.clone(),
        config.ledger.block_interval_ms,
    ));
    let admin = Account::new(admin);
    let camera = config.sim.cameras.first().cloned().unwrap_or_else(|| "cam-01".into());
    let key = Keypair::from_name(&edge_key_name(&camera));
    register_entity(&*ledger, &admin, key.address(), WAIT)?;
    grant_access(
        &*ledger,
        &admin,
        &key.vid(),
        &format!("camera/{camera}"),
        Actions::MANAGE,
        3_600_000,
        clock.now_ms(),
        WAIT,
    )?;
    run_edge(EdgeOptions {
        config: config.clone(),
        seed,
        camera,
        listen: "127.0.0.1:0".into(),
        ledger,
        key,
        clock,
        out_dir: None,
        addr_file: None,
        wait_subscriber: None,
        paced,
    })
}

/// Scenario with `walkers + loiterers` objects on one camera and no alert cooldown, so every
/// frame of a suspicious object is a latency sample.
pub fn capacity_config(base: &Config, walkers: usize, loiterers: usize, frames: u64) -> Config {
    let mut c = base.clone();
    c.sim.walkers = walkers;
    c.sim.loiterers = loiterers;
    c.sim.wanderers = 0;
    c.sim.duration_frames = frames;
    c.sim.cameras.truncate(1);
    if c.sim.cameras.is_empty() {
        c.sim.cameras.push("cam-01".into());
    }
    c.fog.dispatch.cooldown_ms = 0;
    c
}

pub fn capacity(base: &Config, seed: u64, objects: (usize, usize), frames: u64, out: &Path, exe: PathBuf) -> anyhow::Result<SimOutcome> {
    run_scenario(&SimOptions {
        config: capacity_config(base, objects.0, objects.1, frames),
        seed,
        out_dir: out.to_path_buf(),
        exe,
        timeout: Duration::from_secs(frames / 2 + 120),
    })
}

pub fn latency_line(label: &str, o: &SimOutcome) -> String {
    let m = &o.metrics;
    let p = |v: &[f64], q| percentile(v, q).map_or_else(|| "n/a".to_string(), |x| format!("{x:.1}"));
    let sent: u64 = m.frames_sent.values().sum();
    let logged: u64 = m.frames_logged.values().sum();
    format!(
        "{label} alerts={} latency_median_ms={} latency_p95_ms={} fog_frame_median_ms={} frames_sent={sent} frames_logged={logged}",
        m.alert_latency_ms.len(),
        p(&m.alert_latency_ms, 50.0),
        p(&m.alert_latency_ms, 95.0),
        p(&m.fog_frame_ms, 50.0),
    )
}

/// Edge throughput, maximum rate and fog capacity at 5 and 10 objects. `quick` shortens
/// every run.
pub fn run_bench(config: &Config, seed: u64, out: &Path, exe: PathBuf, quick: bool) -> anyhow::Result<String> {
    let mut report = String::new();
    let fps = config.edge.pipeline.frame_rate;
    let secs = if quick { 6 } else { 30 };

    let mut paced = config.clone();
    paced.sim.duration_frames = (fps * secs as f64).round() as u64;
    let r = edge_throughput(&paced, seed, true)?;
    let _ = writeln!(
        report,
        "edge_paced frames={} target_fps={fps} fps={:.2} missed={} hia_recorded={} hia_failed={}",
        r.frames, r.fps, r.missed_deadlines, r.hia_recorded, r.hia_failed
    );

    let mut max = config.clone();
    max.sim.duration_frames = if quick { 500 } else { 3_000 };
    max.edge.hash_every = 0;
    let r = edge_throughput(&max, seed, false)?;
    let _ = writeln!(report, "edge_max_rate frames={} fps={:.1}", r.frames, r.fps);

    // loiterers need about 15 s of dwell before they alert
    let frames = (fps * if quick { 30.0 } else { 60.0 }).round() as u64;
    let runs: Vec<_> = [("fog_5_objects", (3, 2)), ("fog_10_objects", (6, 4))]
        .into_iter()
        .map(|(label, objects)| {
            let (config, out, exe) = (config.clone(), out.join(label), exe.clone());
            (label, std::thread::spawn(move || capacity(&config, seed, objects, frames, &out, exe)))
        })
        .collect();
    for (label, run) in runs {
        let o = run.join().map_err(|_| anyhow::anyhow!("{label} panicked"))??;
        let _ = writeln!(report, "{}", latency_line(label, &o));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("bench.txt"), &report)?;
    Ok(report)
}
