//! One line per acceptance criterion. Runs the multi-process scenarios in parallel, then
//! the in-process checks. Exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use lisps_core::clock::{Clock, ManualClock};
use lisps_core::config::Config;
use lisps_core::edge::{FeatureRecord, FrameFeatureSet, QuantizedBox};
use lisps_core::fog::{defuzzify_centroid, Aggregate, ContextualInputs, FuzzyVariable, SuspicionModel};
use lisps_core::ledger::{sha256, Actions, Block, Call, Chain, Keypair, Sig};
use lisps_core::security::{
    features_resource, grant_access, hia_key, register_entity, verify_hashed_index, AccessScreen, Account,
    AuthToken, HiaVerdict, LocalLedger, TOKEN_HEADER,
};
use lisps_core::sim::percentile;
use lisps_core::wire::{decode_frame, encode_frame, Decoded, FeatureHub, FrameDecoder};
use lisps_core::Fixed3;
use lisps_node::bench::{capacity_config, edge_throughput};
use lisps_node::client::agent;
use lisps_node::edge::EdgeServer;
use lisps_node::orchestrate::{run_scenario, SimOptions, SimOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn sim(config: Config, seed: u64, out: PathBuf) -> anyhow::Result<SimOutcome> {
    run_scenario(&SimOptions {
        config,
        seed,
        out_dir: out,
        exe: common::lisps().to_path_buf(),
        timeout: Duration::from_secs(300),
    })
}

fn latency(o: &SimOutcome) -> (usize, f64, f64) {
    let v = &o.metrics.alert_latency_ms;
    (v.len(), percentile(v, 50.0).unwrap_or(f64::INFINITY), percentile(v, 95.0).unwrap_or(f64::INFINITY))
}

fn frames_complete(o: &SimOutcome) -> (u64, u64) {
    (o.metrics.frames_sent.values().sum(), o.metrics.frames_logged.values().sum())
}

fn c1(o: &anyhow::Result<SimOutcome>) -> Verdict {
    match o {
        Ok(o) => {
            let (n, med, p95) = latency(o);
            verdict(
                n > 0 && med < 500.0 && p95 < 750.0,
                format!("5 objects, 5 fps, 3 miners, 60 s: alerts={n} median={med:.1}ms p95={p95:.1}ms"),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e:#}")),
    }
}

fn c2(five: &anyhow::Result<SimOutcome>, ten: &anyhow::Result<SimOutcome>) -> Verdict {
    match (five, ten) {
        (Ok(a), Ok(b)) => {
            let (n, med, p95) = latency(a);
            let (sent, logged) = frames_complete(b);
            let (n10, med10, _) = latency(b);
            verdict(
                n > 0 && med < 500.0 && p95 < 750.0 && sent > 0 && sent == logged,
                format!(
                    "5 objects median={med:.1}ms p95={p95:.1}ms; 10 objects frames sent={sent} logged={logged} alerts={n10} median={med10:.1}ms"
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("run failed: {e:#}")),
    }
}

fn c3(paced: &anyhow::Result<lisps_node::edge::EdgeReport>, max: &anyhow::Result<lisps_node::edge::EdgeReport>) -> Verdict {
    match (paced, max) {
        (Ok(p), Ok(m)) => verdict(
            p.frames == 150 && p.missed_deadlines == 0,
            format!(
                "paced {} frames at 5 fps: achieved {:.2} fps, missed={}; max rate {:.0} fps over {} frames (tracked)",
                p.frames, p.fps, p.missed_deadlines, m.fps, m.frames
            ),
        ),
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("edge failed: {e:#}")),
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> FrameFeatureSet {
    let ts = Fixed3::from_millis(rng.gen_range(0..4_000_000_000_000));
    let mut f = FrameFeatureSet::empty(rng.gen_range(0..1_000_000), "cam-01", ts);
    for _ in 0..rng.gen_range(0..10) {
        let x0 = rng.gen_range(0..640_000);
        let y0 = rng.gen_range(0..480_000);
        f.insert(FeatureRecord {
            object_id: Fixed3::from_millis(rng.gen_range(0..4_000_000_000_000)),
            speed: Fixed3::from_millis(rng.gen_range(0..100_000)),
            direction_changes: rng.gen(),
            dwell: Fixed3::from_millis(rng.gen_range(0..10_000_000)),
            bbox: QuantizedBox {
                x_min: Fixed3::from_millis(x0),
                y_min: Fixed3::from_millis(y0),
                x_max: Fixed3::from_millis(x0 + rng.gen_range(1..200_000)),
                y_max: Fixed3::from_millis(y0 + rng.gen_range(1..200_000)),
            },
        });
    }
    f
}

fn c4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let frames: Vec<FrameFeatureSet> = (0..1000).map(|_| random_frame(&mut rng)).collect();
    let mut exact = 0;
    let mut stream = Vec::new();
    for f in &frames {
        let bytes = encode_frame(f);
        if decode_frame(&bytes) == Ok(Decoded::Complete(f.clone(), bytes.len())) {
            exact += 1;
        }
        stream.extend_from_slice(&bytes);
    }
    let mut partitions_ok = 0;
    for _ in 0..10 {
        let mut d = FrameDecoder::new();
        let mut got = Vec::new();
        let mut rest = &stream[..];
        while !rest.is_empty() {
            let (chunk, tail) = rest.split_at(rng.gen_range(1..=64).min(rest.len()));
            d.push(chunk);
            got.extend(d.by_ref().filter_map(Result::ok).map(|x| x.frame));
            rest = tail;
        }
        if got == frames && d.pending() == 0 {
            partitions_ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        exact == 1000 && partitions_ok == 10 && secs < 10.0,
        format!("{exact}/1000 exact round trips, {partitions_ok}/10 chunk partitions identical, {secs:.2}s"),
    )
}

fn c5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let n = rng.gen_range(2..=5);
        let mut apexes: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        apexes.sort_by(f64::total_cmp);
        apexes.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let names = ["a", "b", "c", "d", "e"];
        let labels: Vec<(&str, f64)> = apexes.iter().enumerate().map(|(i, &a)| (names[i], a)).collect();
        let out = FuzzyVariable::new("out", 0.0, 1.0, &labels).unwrap();
        let heights: Vec<f64> = labels.iter().map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..=1.0) }).collect();
        if heights.iter().all(|&h| h == 0.0) {
            continue;
        }
        let agg = Aggregate::new(&out, heights);
        let exact = defuzzify_centroid(&agg).unwrap();
        let (mut mass, mut moment) = (0.0, 0.0);
        for k in 0..100_001usize {
            let x = k as f64 / 100_000.0;
            let w = if k == 0 || k == 100_000 { 0.5 } else { 1.0 };
            let y = agg.membership(x);
            mass += w * y;
            moment += w * x * y;
        }
        worst = worst.max((exact - moment / mass).abs() / (moment / mass).abs().max(1e-12));
        checked += 1;
    }

    let model = SuspicionModel::with_defaults(0.2);
    let rules = model.rules();
    let axis = |name: &str| {
        let (lo, hi) = rules.inputs()[rules.input_index(name).unwrap()].domain();
        (0..21).map(|k| lo + (hi - lo) * k as f64 / 20.0).collect::<Vec<f64>>()
    };
    let (sp, rt, dw, cw) = (axis("speed"), axis("dir_change_rate"), axis("dwell"), axis("context_weight"));
    let score = |s: usize, r: usize, d: usize, c: usize| {
        model
            .score_inputs(&ContextualInputs {
                speed: sp[s],
                dir_change_rate: rt[r],
                dwell: dw[d],
                context_weight: cw[c],
            })
            .unwrap()
    };
    let mut grid = vec![0.0; 21usize.pow(4)];
    let idx = |s: usize, r: usize, d: usize, c: usize| ((s * 21 + r) * 21 + d) * 21 + c;
    for s in 0..21 {
        for r in 0..21 {
            for d in 0..21 {
                for c in 0..21 {
                    grid[idx(s, r, d, c)] = score(s, r, d, c);
                }
            }
        }
    }
    let mut violations = 0;
    for s in 0..21 {
        for r in 0..21 {
            for d in 0..21 {
                for c in 0..21 {
                    let v = grid[idx(s, r, d, c)];
                    if d < 20 && grid[idx(s, r, d + 1, c)] < v - 1e-12 {
                        violations += 1;
                    }
                    if c < 20 && grid[idx(s, r, d, c + 1)] < v - 1e-12 {
                        violations += 1;
                    }
                }
            }
        }
    }
    verdict(
        worst < 1e-6 && violations == 0,
        format!("100 aggregates worst relative error {worst:.2e}; 21^4 grid monotonicity violations={violations}"),
    )
}

fn c6(run: &anyhow::Result<SimOutcome>) -> Verdict {
    let o = match run {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("run failed: {e:#}")),
    };
    let peaks = |suspicious: bool| -> Vec<f64> {
        o.metrics
            .actors
            .iter()
            .filter(|a| a.kind.is_suspicious() == suspicious)
            .map(|a| a.peak_score)
            .collect()
    };
    let (loiter, walk) = (peaks(true), peaks(false));
    let min_loiter = loiter.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_walk = walk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c = &o.metrics.confusion;
    verdict(
        !loiter.is_empty() && !walk.is_empty() && min_loiter > max_walk && c.precision() == 1.0 && c.recall() == 1.0,
        format!(
            "{} walkers, {} loiterers: min loiterer peak {min_loiter:.3} > max walker peak {max_walk:.3}; precision={:.3} recall={:.3}",
            walk.len(),
            loiter.len(),
            c.precision(),
            c.recall()
        ),
    )
}

fn c7() -> Verdict {
    let clock = ManualClock::new(1_600_000_000_000);
    let admin = Keypair::from_name("acc-admin");
    let ledger = LocalLedger::single(Keypair::from_name("acc-miner"), &admin, Arc::new(clock.clone()), 2_000);
    let admin = Account::new(admin);
    let edge = Account::new(Keypair::from_name("acc-edge"));
    let wait = Duration::from_secs(1);
    register_entity(&ledger, &admin, edge.key().address(), wait).unwrap();
    grant_access(&ledger, &admin, &edge.vid(), "camera/cam-01", Actions::MANAGE, u64::MAX / 4, clock.now_ms(), wait).unwrap();
    let mut frames = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    while ledger.with_node(|n| n.chain().height()) < 10 {
        clock.advance(2_000);
        let i = frames.len() as u64;
        let mut f = random_frame(&mut rng);
        f.frame_index = i;
        let bytes = encode_frame(&f);
        edge.execute(&ledger, &Call::Record { key: hia_key("cam-01", i), hash: sha256(&bytes) }, wait).unwrap();
        frames.push(bytes);
    }
    let (genesis, blocks) = ledger.with_node(|n| (n.chain().genesis().clone(), n.chain().blocks().to_vec()));
    let encoded: Vec<Vec<u8>> = blocks.iter().map(Block::encode).collect();
    let valid = Chain::validate_from_genesis(genesis.clone(), &encoded).is_ok();
    let prefixes: Vec<Chain> = (0..encoded.len())
        .map(|h| Chain::replay(genesis.clone(), &blocks[1..h.max(1)]).unwrap())
        .collect();
    let (mut flips, mut caught) = (0u64, 0u64);
    for (h, bytes) in encoded.iter().enumerate() {
        for pos in 0..bytes.len() {
            for bit in 0..8 {
                let mut m = bytes.clone();
                m[pos] ^= 1 << bit;
                let detected = if h == 0 {
                    let mut all = encoded.clone();
                    all[0] = m;
                    Chain::validate_from_genesis(genesis.clone(), &all).is_err()
                } else {
                    match Block::decode(&m) {
                        Err(_) => true,
                        Ok(b) => prefixes[h].clone().append(b).is_err(),
                    }
                };
                flips += 1;
                caught += u64::from(detected);
            }
        }
    }
    let (mut mutations, mut flagged) = (0u64, 0u64);
    for (i, bytes) in frames.iter().enumerate() {
        let key = hia_key("cam-01", i as u64);
        for pos in 0..bytes.len() {
            let mut m = bytes.clone();
            m[pos] = m[pos].wrapping_add(rng.gen_range(1..=255));
            mutations += 1;
            flagged += u64::from(verify_hashed_index(&ledger, &key, &m) == Ok(HiaVerdict::Tampered));
        }
    }
    let authentic = frames
        .iter()
        .enumerate()
        .all(|(i, b)| verify_hashed_index(&ledger, &hia_key("cam-01", i as u64), b) == Ok(HiaVerdict::Authentic));
    verdict(
        valid && authentic && caught == flips && flagged == mutations,
        format!(
            "{}-block chain: {caught}/{flips} bit flips detected; HIA: {flagged}/{mutations} byte mutations over {} frames flagged",
            encoded.len() - 1,
            frames.len()
        ),
    )
}

fn c8() -> Verdict {
    const INTERVAL: u64 = 500;
    let t0 = 1_600_000_000_000;
    let clock = ManualClock::new(t0);
    let admin = Keypair::from_name("acc8-admin");
    let ledger = Arc::new(LocalLedger::single(Keypair::from_name("acc8-miner"), &admin, Arc::new(clock.clone()), INTERVAL));
    let admin = Account::new(admin);
    let wait = Duration::from_secs(1);
    let fog = Keypair::from_name("acc8-fog");
    register_entity(&*ledger, &admin, fog.address(), wait).unwrap();
    let bystander = Keypair::from_name("acc8-bystander");
    register_entity(&*ledger, &admin, bystander.address(), wait).unwrap();
    grant_access(&*ledger, &admin, &bystander.vid(), &features_resource("cam-02"), Actions::READ, 3_600_000, t0, wait).unwrap();

    let hub = FeatureHub::new(64);
    let screen = Arc::new(AccessScreen::new(ledger.clone(), Arc::new(clock.clone()), 30_000));
    let server = EdgeServer::start("127.0.0.1:0", BTreeMap::from([("cam-01".to_string(), hub.clone())]), screen).unwrap();
    let url = format!("{}/stream/features?camera=cam-01", server.url());

    let stop = Arc::new(AtomicBool::new(false));
    let publisher = {
        let (hub, stop) = (hub.clone(), stop.clone());
        thread::spawn(move || {
            let mut i = 0;
            while !stop.load(Ordering::SeqCst) {
                hub.publish(&FrameFeatureSet::empty(i, "cam-01", Fixed3::from_millis(i * 200)));
                i += 1;
                thread::sleep(Duration::from_millis(10));
            }
        })
    };

    let http = agent(Some(Duration::from_secs(5)));
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let stranger = Keypair::from_name("acc8-stranger");
    let mut admitted = 0;
    for n in 0..10_000u32 {
        let now = clock.now_ms();
        let token: Option<String> = match n % 8 {
            0 => None,
            1 => Some((0..rng.gen_range(0..80)).map(|_| rng.gen_range(0x21u8..0x7f) as char).collect()),
            2 => Some(AuthToken::issue(&stranger, now).to_string()),
            3 => Some(AuthToken::issue(&fog, now).to_string()),
            4 => Some(AuthToken::issue(&bystander, now).to_string()),
            5 => Some(AuthToken::issue(&fog, now - 31_000 - rng.gen_range(0..100_000)).to_string()),
            6 => {
                let mut t = AuthToken::issue(&bystander, now);
                t.vid = fog.vid();
                Some(t.to_string())
            }
            _ => {
                let mut t = AuthToken::issue(&fog, now);
                let mut sig = [0u8; 64];
                rng.fill(&mut sig[..]);
                t.signature = Sig(sig);
                Some(t.to_string())
            }
        };
        let mut req = http.get(&url);
        if let Some(t) = &token {
            req = req.header(TOKEN_HEADER, t);
        }
        if let Ok(resp) = req.call() {
            if resp.status().as_u16() == 200 {
                admitted += 1;
            }
        }
    }
    let leaked = server.served_bytes();

    let expiry_ttl = 60_000;
    grant_access(&*ledger, &admin, &fog.vid(), &features_resource("cam-01"), Actions::READ, expiry_ttl, clock.now_ms(), wait).unwrap();
    let expiry = clock.now_ms() + expiry_ttl;
    clock.advance(INTERVAL);
    let streamed = {
        let resp = http
            .get(&url)
            .header(TOKEN_HEADER, &AuthToken::issue(&fog, clock.now_ms()).to_string())
            .call();
        match resp {
            Ok(r) if r.status().as_u16() == 200 => {
                let (tx, rx) = std::sync::mpsc::channel();
                thread::spawn(move || {
                    let mut body = r.into_body().into_reader();
                    let mut d = FrameDecoder::new();
                    let mut buf = [0u8; 4096];
                    let mut frames = 0u64;
                    loop {
                        match body.read(&mut buf) {
                            Ok(0) | Err(_) => break,
                            Ok(n) => {
                                d.push(&buf[..n]);
                                for f in d.by_ref().flatten() {
                                    frames += 1;
                                    let _ = tx.send((frames, f.frame.frame_index));
                                }
                            }
                        }
                    }
                });
                Some(rx)
            }
            _ => None,
        }
    };
    let Some(rx) = streamed else {
        stop.store(true, Ordering::SeqCst);
        let _ = publisher.join();
        return verdict(false, format!("granted client refused; {admitted} fuzzed admitted, {leaked} bytes leaked"));
    };
    let first = rx.recv_timeout(Duration::from_secs(5)).is_ok();

    // logical clock jumps past the expiry; the open stream and new requests are refused
    clock.set(expiry - 1);
    let before = http
        .get(&url)
        .header(TOKEN_HEADER, &AuthToken::issue(&fog, clock.now_ms()).to_string())
        .call()
        .map(|r| r.status().as_u16())
        .unwrap_or(0);
    clock.set(expiry + INTERVAL);
    let after = http
        .get(&url)
        .header(TOKEN_HEADER, &AuthToken::issue(&fog, clock.now_ms()).to_string())
        .call()
        .map(|r| r.status().as_u16())
        .unwrap_or(0);
    let cut_at = Instant::now();
    let mut closed = false;
    while cut_at.elapsed() < Duration::from_millis(3 * INTERVAL) {
        match rx.recv_timeout(Duration::from_millis(50)) {
            Err(std::sync::mpsc::RecvTimeoutError::Disconnected) => {
                closed = true;
                break;
            }
            _ => {}
        }
    }
    let cut_ms = cut_at.elapsed().as_millis();
    stop.store(true, Ordering::SeqCst);
    let _ = publisher.join();
    hub.close();
    verdict(
        admitted == 0 && leaked == 0 && first && before == 200 && after == 403 && closed,
        format!(
            "10000 fuzzed requests: admitted={admitted} feature bytes served={leaked}; granted client streamed={first}; \
             before expiry {before}, one interval after expiry {after}; open stream cut after {cut_ms}ms (interval {INTERVAL}ms)"
        ),
    )
}

fn c9(a: &anyhow::Result<SimOutcome>, b: &anyhow::Result<SimOutcome>) -> Verdict {
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let same_file = std::fs::read(a.out_dir.join("alerts.log")).ok() == std::fs::read(b.out_dir.join("alerts.log")).ok();
            verdict(
                a.alerts == b.alerts && same_file && a.digest == b.digest && !a.alerts.is_empty(),
                format!(
                    "alerts {} vs {} lines, identical={}; state digests {}..{} identical={}",
                    a.alerts.len(),
                    b.alerts.len(),
                    a.alerts == b.alerts && same_file,
                    &a.digest[..12.min(a.digest.len())],
                    &b.digest[..12.min(b.digest.len())],
                    a.digest == b.digest
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("run failed: {e:#}")),
    }
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let base = Config::default();
    let frames_60s = (base.edge.pipeline.frame_rate * 60.0).round() as u64;

    let dir = |name: &str| root.path().join(name);
    let five = {
        let (cfg, out) = (capacity_config(&base, 3, 2, frames_60s), dir("five"));
        thread::spawn(move || sim(cfg, 42, out))
    };
    let ten = {
        let (cfg, out) = (capacity_config(&base, 6, 4, frames_60s), dir("ten"));
        thread::spawn(move || sim(cfg, 42, out))
    };
    let det_a = {
        let out = dir("det-a");
        let cfg = base.clone();
        thread::spawn(move || sim(cfg, 42, out))
    };
    let det_b = {
        let out = dir("det-b");
        let cfg = base.clone();
        thread::spawn(move || sim(cfg, 42, out))
    };
    let paced = {
        let mut cfg = base.clone();
        cfg.sim.duration_frames = 150;
        thread::spawn(move || edge_throughput(&cfg, 42, true))
    };

    let r4 = c4();
    let r5 = c5();
    let r7 = c7();
    let r8 = c8();

    let paced = paced.join().unwrap();
    let max = {
        let mut cfg = base.clone();
        cfg.sim.duration_frames = 2_000;
        cfg.edge.hash_every = 0;
        edge_throughput(&cfg, 42, false)
    };
    let five = five.join().unwrap();
    let ten = ten.join().unwrap();
    let det_a = det_a.join().unwrap();
    let det_b = det_b.join().unwrap();

    let results = [
        ("end-to-end alert latency", c1(&five)),
        ("object capacity", c2(&five, &ten)),
        ("edge throughput", c3(&paced, &max)),
        ("wire round trip", r4),
        ("fuzzy correctness", r5),
        ("decision separation", c6(&det_a)),
        ("tamper evidence", r7),
        ("fail-closed screening", r8),
        ("determinism", c9(&det_a, &det_b)),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("criterion {} {name}: {} ({})", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
