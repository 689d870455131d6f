use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context as _};
use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use lisps_core::clock::Clock;
use lisps_core::config::Config;
use lisps_core::edge::{Detector, EdgePipeline, FrameMeta};
use lisps_core::ledger::{Actions, Call, Hash32, Keypair};
use lisps_core::security::{
    features_resource, hia_key, AccessScreen, Account, AuthToken, Decision, LedgerView, TOKEN_HEADER,
};
use lisps_core::sim::{gen_frames, scenario_from_config};
use lisps_core::wire::{FeatureHub, Next, SessionRegistry};
use lisps_core::Fixed3;

use crate::server::{serve, write_addr_file, ServerHandle};

/// Accepted token age, either direction, relative to the edge clock.
pub const TOKEN_FRESHNESS_MS: u64 = 30_000;

pub const VIDEO_PLACEHOLDER: &str = "LISPS live video is not exported by this edge node\n";

struct EdgeService {
    hubs: BTreeMap<String, Arc<FeatureHub>>,
    screen: Arc<AccessScreen>,
    sessions: SessionRegistry,
    served_bytes: AtomicU64,
    recheck_ms: u64,
}

/// The HTTP face of an edge node: camera listing, the video stub and screened feature streams.
pub struct EdgeServer {
    svc: Arc<EdgeService>,
    server: ServerHandle,
}

impl EdgeServer {
    pub fn start(listen: &str, hubs: BTreeMap<String, Arc<FeatureHub>>, screen: Arc<AccessScreen>) -> anyhow::Result<Self> {
        let recheck_ms = screen.view().block_interval_ms().max(1);
        let svc = Arc::new(EdgeService {
            hubs,
            screen,
            sessions: SessionRegistry::new(),
            served_bytes: AtomicU64::new(0),
            recheck_ms,
        });
        let router = Router::new()
            .route("/cameras", get(cameras))
            .route("/video", get(video))
            .route("/stream/features", get(stream_features))
            .with_state(svc.clone());
        let server = serve(listen, router, 4)?;
        Ok(EdgeServer { svc, server })
    }

    pub fn url(&self) -> String {
        self.server.url()
    }

    pub fn addr(&self) -> std::net::SocketAddr {
        self.server.addr()
    }

    /// Feature bytes handed to the transport across all sessions.
    pub fn served_bytes(&self) -> u64 {
        self.svc.served_bytes.load(Ordering::SeqCst)
    }

    pub fn streaming(&self) -> usize {
        self.svc.sessions.streaming_count()
    }

    /// Waits until at least `n` sessions stream, or `timeout` passes.
    pub fn wait_streaming(&self, n: usize, timeout: Duration) -> bool {
        wait_until(timeout, || self.streaming() >= n)
    }

    /// Waits until no session streams, or `timeout` passes.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        wait_until(timeout, || self.streaming() == 0)
    }

    pub fn shutdown(&mut self) {
        self.server.shutdown();
    }
}

fn wait_until(timeout: Duration, mut ok: impl FnMut() -> bool) -> bool {
    let start = Instant::now();
    while !ok() {
        if start.elapsed() >= timeout {
            return false;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    true
}

type St = State<Arc<EdgeService>>;

async fn cameras(State(svc): St) -> Response {
    let body: String = svc.hubs.keys().map(|c| format!("{c}\n")).collect();
    (StatusCode::OK, body).into_response()
}

async fn video() -> Response {
    (StatusCode::OK, VIDEO_PLACEHOLDER).into_response()
}

/// `GET /stream/features?camera=<id>`; the camera may be omitted when the node has one.
async fn stream_features(State(svc): St, Query(q): Query<HashMap<String, String>>, headers: HeaderMap) -> Response {
    let camera = match q.get("camera") {
        Some(c) => c.clone(),
        None if svc.hubs.len() == 1 => svc.hubs.keys().next().cloned().unwrap_or_default(),
        None => return (StatusCode::BAD_REQUEST, "camera parameter required\n").into_response(),
    };
    let Some(hub) = svc.hubs.get(&camera).cloned() else {
        return (StatusCode::NOT_FOUND, "unknown camera\n").into_response();
    };
    let token = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let resource = features_resource(&camera);
    let (decision, vid) = {
        let screen = svc.screen.clone();
        let resource = resource.clone();
        tokio::task::spawn_blocking(move || {
            let d = screen.check(token.as_deref(), &resource, Actions::READ);
            let vid = token.and_then(|t| t.parse::<AuthToken>().ok()).map(|t| t.vid);
            (d, vid)
        })
        .await
        .unwrap_or((Decision::Deny(lisps_core::security::DenyReason::LedgerUnavailable), None))
    };
    let (Decision::Allow, Some(vid)) = (decision, vid) else {
        let reason = match decision {
            Decision::Deny(r) => r.as_str(),
            Decision::Allow => "malformed-token",
        };
        return (StatusCode::FORBIDDEN, format!("deny {reason}\n")).into_response();
    };

    let sid = svc.sessions.open(&vid, &camera);
    let _ = svc.sessions.start(sid);
    let sub = hub.subscribe();
    let (tx, rx) = tokio::sync::mpsc::channel::<Result<Bytes, io::Error>>(32);
    let pump_svc = svc.clone();
    tokio::task::spawn_blocking(move || {
        let mut sub = sub;
        let mut last_check = Instant::now();
        loop {
            match sub.next_timeout(Duration::from_millis(200)) {
                Next::Frame(f) => {
                    let n = f.bytes.len() as u64;
                    if tx.blocking_send(Ok(Bytes::copy_from_slice(&f.bytes))).is_err() {
                        break;
                    }
                    pump_svc.served_bytes.fetch_add(n, Ordering::SeqCst);
                    let _ = pump_svc.sessions.delivered(sid, f.frame_index);
                }
                Next::Timeout => {
                    if tx.is_closed() {
                        break;
                    }
                }
                Next::Closed => break,
                Next::Lagged { missed } => {
                    log::warn!("session {sid} on {camera} lagged by {missed} frames; closing");
                    let _ = tx.blocking_send(Err(io::Error::other(format!("reader lagged by {missed} frames"))));
                    break;
                }
            }
            if last_check.elapsed() >= Duration::from_millis(pump_svc.recheck_ms) {
                last_check = Instant::now();
                if let Decision::Deny(r) = pump_svc.screen.recheck(&vid, &resource, Actions::READ) {
                    log::info!("session {sid} on {camera} revoked: {}", r.as_str());
                    let _ = tx.blocking_send(Err(io::Error::other(format!("access revoked: {}", r.as_str()))));
                    break;
                }
            }
        }
        let _ = pump_svc.sessions.stop(sid);
        pump_svc.sessions.prune();
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|item| (item, rx)) });
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, "text/plain; charset=utf-8")
        .body(Body::from_stream(stream))
        .unwrap_or_else(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response())
}

/// Submits hashed-index records from a background thread and collects their receipts.
pub struct HiaRecorder {
    tx: Option<mpsc::Sender<(String, Vec<u8>)>>,
    thread: Option<JoinHandle<(u64, u64)>>,
}

impl HiaRecorder {
    pub fn start(view: Arc<dyn LedgerView>, key: Keypair, timeout: Duration) -> Self {
        let (tx, rx) = mpsc::channel::<(String, Vec<u8>)>();
        let thread = std::thread::spawn(move || {
            let account = Account::new(key);
            let mut submitted: Vec<(String, Hash32)> = Vec::new();
            let mut failed = 0u64;
            for (key, bytes) in rx {
                let call = Call::Record {
                    key: key.clone(),
                    hash: lisps_core::ledger::sha256(&bytes),
                };
                let attempt = || account.sign(&*view, &call).and_then(|t| view.submit(&t));
                match attempt().or_else(|_| {
                    account.resync();
                    attempt()
                }) {
                    Ok(id) => submitted.push((key, id)),
                    Err(e) => {
                        account.resync();
                        log::warn!("hia record {key}: {e}");
                        failed += 1;
                    }
                }
            }
            let deadline = Instant::now() + timeout;
            let mut ok = 0u64;
            for (key, id) in submitted {
                let left = deadline.saturating_duration_since(Instant::now());
                match view.wait_receipt(&id, left) {
                    Ok(r) if r.is_ok() => ok += 1,
                    Ok(r) => {
                        log::warn!("hia record {key} failed on chain: {:?}", r.outcome);
                        failed += 1;
                    }
                    Err(e) => {
                        log::warn!("hia record {key}: {e}");
                        failed += 1;
                    }
                }
            }
            (ok, failed)
        });
        HiaRecorder {
            tx: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn record(&self, key: String, bytes: Vec<u8>) {
        if let Some(tx) = &self.tx {
            let _ = tx.send((key, bytes));
        }
    }

    /// Waits for every submitted record; returns (recorded, failed).
    pub fn finish(mut self) -> (u64, u64) {
        self.tx.take();
        self.thread.take().and_then(|t| t.join().ok()).unwrap_or((0, 0))
    }
}

pub struct EdgeOptions {
    pub config: Config,
    pub seed: u64,
    pub camera: String,
    pub listen: String,
    pub ledger: Arc<dyn LedgerView>,
    pub key: Keypair,
    pub clock: Arc<dyn Clock>,
    /// Receives `stream-<cam>.wire` and `edge-<cam>.events`.
    pub out_dir: Option<PathBuf>,
    pub addr_file: Option<PathBuf>,
    /// Hold capture until a fog session streams.
    pub wait_subscriber: Option<Duration>,
    /// Run at the configured frame rate; otherwise as fast as possible.
    pub paced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReport {
    pub camera: String,
    pub frames: u64,
    pub missed_deadlines: u64,
    pub fps: f64,
    pub hia_recorded: u64,
    pub hia_failed: u64,
}

impl EdgeReport {
    pub fn summary_line(&self) -> String {
        format!(
            "SUMMARY cam={} frames={} missed={} fps={} hia_recorded={} hia_failed={}",
            self.camera,
            self.frames,
            self.missed_deadlines,
            Fixed3::from_f64(self.fps),
            self.hia_recorded,
            self.hia_failed
        )
    }
}

/// Runs one camera: scripted detector, tracking pipeline, hub publication, optional hash
/// recording, and the HTTP server, until the scenario's frames are exhausted and every
/// subscriber has drained.
pub fn run_edge(opts: EdgeOptions) -> anyhow::Result<EdgeReport> {
    let scenario = scenario_from_config(opts.seed, &opts.config);
    let stream = gen_frames(&scenario)?
        .into_iter()
        .find(|s| s.camera == opts.camera)
        .ok_or_else(|| anyhow!("camera {} is not part of the scenario", opts.camera))?;
    let mut detector = stream.detector();
    let mut edge_cfg = opts.config.edge.pipeline.clone();
    edge_cfg.frame_rate = scenario.frame_rate;
    let mut pipeline = EdgePipeline::new(edge_cfg.clone())?;
    let hub = FeatureHub::new(opts.config.edge.hub_window);
    let screen = Arc::new(AccessScreen::new(opts.ledger.clone(), opts.clock.clone(), TOKEN_FRESHNESS_MS));
    let mut server = EdgeServer::start(&opts.listen, BTreeMap::from([(opts.camera.clone(), hub.clone())]), screen)?;
    if let Some(p) = &opts.addr_file {
        write_addr_file(p, server.addr())?;
    }
    log::info!("edge {} serving on {}", opts.camera, server.url());

    let mut wire_out = None;
    let mut events = None;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        let open = |name: String| -> anyhow::Result<BufWriter<File>> {
            let p = dir.join(name);
            Ok(BufWriter::new(File::create(&p).with_context(|| p.display().to_string())?))
        };
        wire_out = Some(open(format!("stream-{}.wire", opts.camera))?);
        events = Some(open(format!("edge-{}.events", opts.camera))?);
    }

    if let Some(t) = opts.wait_subscriber {
        if !server.wait_streaming(1, t) {
            return Err(anyhow!("no subscriber within {t:?}"));
        }
    }

    let hash_every = opts.config.edge.hash_every;
    let interval = opts.ledger.block_interval_ms();
    let recorder = (hash_every > 0).then(|| {
        HiaRecorder::start(
            opts.ledger.clone(),
            opts.key.clone(),
            Duration::from_millis(interval * (opts.config.ledger.miners as u64 + 5)),
        )
    });
    let epoch = Fixed3::from_millis(scenario.epoch_ms);
    let period = Duration::from_secs_f64(1.0 / scenario.frame_rate);
    let start = Instant::now();
    let mut missed = 0u64;
    let frames = scenario.duration_frames;
    for i in 0..frames {
        if opts.paced {
            let due = start + period * i as u32;
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let captured_ms = opts.clock.now_ms();
        let meta = FrameMeta {
            frame_index: i,
            timestamp: edge_cfg.frame_timestamp(epoch, i),
            camera_id: opts.camera.clone(),
        };
        let out = pipeline.process_frame(&detector.detect(i), &meta)?;
        let encoded = hub.publish(&out.features);
        if let Some(r) = &recorder {
            if i % hash_every == 0 {
                r.record(hia_key(&opts.camera, i), encoded.bytes.to_vec());
            }
        }
        if let Some(w) = &mut wire_out {
            w.write_all(&encoded.bytes)?;
        }
        if let Some(e) = &mut events {
            writeln!(e, "CAPTURE {} {captured_ms}", i)?;
        }
        if opts.paced && Instant::now() > start + period * (i as u32 + 1) {
            missed += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    hub.close();
    if !server.wait_idle(Duration::from_secs(30)) {
        log::warn!("subscribers still attached after close");
    }
    let (hia_recorded, hia_failed) = recorder.map(HiaRecorder::finish).unwrap_or((0, 0));
    let report = EdgeReport {
        camera: opts.camera.clone(),
        frames,
        missed_deadlines: missed,
        fps: if elapsed > 0.0 { frames as f64 / elapsed } else { 0.0 },
        hia_recorded,
        hia_failed,
    };
    if let Some(mut w) = wire_out {
        w.flush()?;
    }
    if let Some(mut e) = events {
        writeln!(e, "{}", report.summary_line())?;
        e.flush()?;
    }
    server.shutdown();
    Ok(report)
}
