use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context as _};
use chrono::FixedOffset;
use lisps_core::clock::Clock;
use lisps_core::config::Config;
use lisps_core::edge::{FeatureRecord, FrameFeatureSet, ObjectId};
use lisps_core::fog::{
    score_frame, Alert, AlertSink, ContextPolicy, DailyLog, Dispatcher, FileOpener, FileSink, Receivers, ReferenceStore,
    SinkError, SuspicionModel, SuspicionScore,
};
use lisps_core::ledger::Keypair;
use lisps_core::security::{AuthToken, TOKEN_HEADER};
use lisps_core::sim::{build_model, context_policy};
use lisps_core::wire::FrameDecoder;
use lisps_core::Fixed3;

use crate::client::{agent, base_url};

/// Live alert file written by the fog node, in dispatch order.
pub const ALERTS_FILE: &str = "fog-alerts.log";
pub const SCORES_FILE: &str = "scores.log";
pub const EVENTS_FILE: &str = "fog.events";

pub struct FogOptions {
    pub config: Config,
    /// Edge node addresses; every camera each one lists is consumed.
    pub edges: Vec<String>,
    pub key: Keypair,
    pub clock: Arc<dyn Clock>,
    pub out_dir: PathBuf,
    /// How long to keep retrying unreachable edges and refused streams.
    pub connect_timeout: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FogReport {
    pub frames: BTreeMap<String, u64>,
    pub alerts: usize,
    pub decode_errors: u64,
    /// Streams that ended abnormally and were re-requested.
    pub reconnects: u64,
}

/// Shared line writer for the fog event log.
#[derive(Clone)]
struct Events(Arc<Mutex<BufWriter<File>>>);

impl Events {
    fn line(&self, line: String) {
        let mut w = self.0.lock().expect("events lock");
        let _ = writeln!(w, "{line}");
    }

    fn flush(&self) {
        let _ = self.0.lock().expect("events lock").flush();
    }
}

struct Job {
    camera: usize,
    seq: u64,
    frame: FrameFeatureSet,
}

struct Scored {
    camera: usize,
    seq: u64,
    frame_index: u64,
    time_ms: u64,
    scores: Vec<(SuspicionScore, FeatureRecord)>,
    proc_ms: f64,
}

/// Alert file plus optional webhook. A line is written to the file once even when the
/// webhook fails and the alert is retried.
struct FogSink {
    file: FileSink,
    hook: Option<(ureq::Agent, String)>,
    filed: HashSet<(String, ObjectId, u64)>,
    clock: Arc<dyn Clock>,
    appended: Vec<(String, u64, ObjectId, u64)>,
}

impl AlertSink for FogSink {
    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
        let key = (alert.camera_id.clone(), alert.object_id, alert.frame_index);
        if !self.filed.contains(&key) {
            self.file.deliver(alert)?;
            self.appended
                .push((alert.camera_id.clone(), alert.frame_index, alert.object_id, self.clock.now_ms()));
            self.filed.insert(key);
        }
        if let Some((agent, url)) = &self.hook {
            let resp = agent
                .post(url.as_str())
                .header("Content-Type", "text/plain")
                .send(alert.to_line().as_bytes())
                .map_err(|e| SinkError::Unavailable(e.to_string()))?;
            if !resp.status().is_success() {
                return Err(SinkError::Unavailable(format!("webhook status {}", resp.status())));
            }
        }
        Ok(())
    }
}

fn list_cameras(edge: &str, timeout: Duration) -> anyhow::Result<Vec<String>> {
    let agent = agent(Some(Duration::from_secs(5)));
    let start = Instant::now();
    loop {
        match agent.get(format!("{edge}/cameras")).call() {
            Ok(mut r) if r.status() == 200 => {
                let body = r.body_mut().read_to_string()?;
                return Ok(body.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect());
            }
            Ok(r) => log::debug!("{edge}/cameras: status {}", r.status()),
            Err(e) => log::debug!("{edge}/cameras: {e}"),
        }
        if start.elapsed() >= timeout {
            return Err(anyhow!("edge {edge} unreachable"));
        }
        std::thread::sleep(Duration::from_millis(100));
    }
}

struct Reader {
    index: usize,
    edge: String,
    camera: String,
    key: Keypair,
    clock: Arc<dyn Clock>,
    timeout: Duration,
    jobs: mpsc::SyncSender<Job>,
    persist: mpsc::Sender<(usize, Vec<u8>, FrameFeatureSet)>,
    events: Events,
    decode_errors: Arc<AtomicU64>,
    reconnects: Arc<AtomicU64>,
}

impl Reader {
    /// Requests the stream until it ends cleanly; refused or broken requests are retried
    /// with a fresh token until `timeout` passes without progress.
    fn run(self) -> anyhow::Result<u64> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(5)))
            .build()
            .into();
        let url = format!("{}/stream/features?camera={}", self.edge, self.camera);
        let mut seq = 0u64;
        let mut last_progress = Instant::now();
        loop {
            if last_progress.elapsed() >= self.timeout {
                return Err(anyhow!("stream {url}: no progress within {:?}", self.timeout));
            }
            let token = AuthToken::issue(&self.key, self.clock.now_ms()).to_string();
            let resp = match agent.get(&url).header(TOKEN_HEADER, &token).call() {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("{url}: {e}");
                    std::thread::sleep(Duration::from_millis(200));
                    continue;
                }
            };
            if resp.status() != 200 {
                let status = resp.status();
                let body = resp.into_body().read_to_string().unwrap_or_default();
                log::info!("{url}: {status} {}", body.trim());
                std::thread::sleep(Duration::from_millis(200));
                continue;
            }
            let mut reader = resp.into_body().into_reader();
            let mut decoder = FrameDecoder::new();
            let mut buf = vec![0u8; 16 * 1024];
            let clean = loop {
                match reader.read(&mut buf) {
                    Ok(0) => break true,
                    Ok(n) => {
                        decoder.push(&buf[..n]);
                        while let Some(item) = decoder.next_frame() {
                            match item {
                                Ok(df) => {
                                    let wall = self.clock.now_ms();
                                    self.events
                                        .line(format!("RECV {} {} {wall}", self.camera, df.frame.frame_index));
                                    let _ = self.persist.send((self.index, df.raw, df.frame.clone()));
                                    self.jobs
                                        .send(Job {
                                            camera: self.index,
                                            seq,
                                            frame: df.frame,
                                        })
                                        .map_err(|_| anyhow!("scoring pool stopped"))?;
                                    seq += 1;
                                    last_progress = Instant::now();
                                }
                                Err(e) => {
                                    log::warn!("{url}: {e}");
                                    self.decode_errors.fetch_add(1, Ordering::Relaxed);
                                }
                            }
                        }
                    }
                    Err(e) => {
                        log::warn!("{url}: stream broken: {e}");
                        break false;
                    }
                }
            };
            if clean && decoder.pending() == 0 {
                return Ok(seq);
            }
            if clean {
                log::warn!("{url}: stream ended inside a frame ({} bytes dropped)", decoder.pending());
            }
            self.reconnects.fetch_add(1, Ordering::Relaxed);
            self.events.line(format!("GAP {} {seq}", self.camera));
        }
    }
}

fn persist_loop(
    cameras: Vec<String>,
    root: PathBuf,
    offset: FixedOffset,
    rx: mpsc::Receiver<(usize, Vec<u8>, FrameFeatureSet)>,
) -> anyhow::Result<()> {
    let mut logs: Vec<DailyLog<FileOpener>> = Vec::new();
    for cam in &cameras {
        let dir = root.join(cam);
        std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
        logs.push(DailyLog::new(FileOpener::new(dir), offset));
    }
    let mut refs = ReferenceStore::open(root.join("refs"))?;
    for (cam, raw, frame) in rx {
        let at = frame.timestamp.millis();
        if let Err(e) = logs[cam].append(&raw, at) {
            log::warn!("feature log for {}: {e}", cameras[cam]);
        }
        for rec in frame.objects.values() {
            if let Err(e) = refs.append(&cameras[cam], frame.frame_index, frame.timestamp, rec) {
                log::warn!("reference store: {e}");
            }
        }
    }
    for (cam, log) in logs.iter_mut().enumerate() {
        if let Err(e) = log.close() {
            log::warn!("closing feature log for {}: {e}", cameras[cam]);
        }
    }
    Ok(())
}

fn score_loop(
    model: Arc<SuspicionModel>,
    policy: Arc<ContextPolicy>,
    jobs: Arc<Mutex<mpsc::Receiver<Job>>>,
    out: mpsc::Sender<Scored>,
) {
    loop {
        let job = match jobs.lock().expect("job lock").recv() {
            Ok(j) => j,
            Err(_) => return,
        };
        let t0 = Instant::now();
        let scores = match score_frame(&model, &policy, &job.frame) {
            Ok(s) => s,
            Err(e) => {
                log::error!("scoring frame {}: {e}", job.frame.frame_index);
                Vec::new()
            }
        };
        let proc_ms = t0.elapsed().as_secs_f64() * 1000.0;
        let _ = out.send(Scored {
            camera: job.camera,
            seq: job.seq,
            frame_index: job.frame.frame_index,
            time_ms: job.frame.timestamp.millis(),
            scores,
            proc_ms,
        });
    }
}

/// Consumes every camera of every edge until all streams end, scoring frames on a worker
/// pool and dispatching alerts per camera in frame order.
pub fn run_fog(opts: FogOptions) -> anyhow::Result<FogReport> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let fog = &opts.config.fog;
    let frame_rate = opts.config.edge.pipeline.frame_rate;
    let model = Arc::new(build_model(fog, frame_rate)?);
    let policy = Arc::new(context_policy(fog));

    let mut streams: Vec<(String, String)> = Vec::new();
    for edge in &opts.edges {
        let edge = base_url(edge);
        for cam in list_cameras(&edge, opts.connect_timeout)? {
            streams.push((edge.clone(), cam));
        }
    }
    if streams.is_empty() {
        return Err(anyhow!("no cameras to consume"));
    }
    let cameras: Vec<String> = streams.iter().map(|(_, c)| c.clone()).collect();

    let events = Events(Arc::new(Mutex::new(BufWriter::new(
        File::create(opts.out_dir.join(EVENTS_FILE)).context("fog events file")?,
    ))));
    let mut scores_out = BufWriter::new(File::create(opts.out_dir.join(SCORES_FILE))?);
    let hook = fog.webhook.as_ref().map(|u| (agent(Some(Duration::from_secs(2))), u.clone()));
    let sink = FogSink {
        file: FileSink::open(&opts.out_dir.join(ALERTS_FILE))?,
        hook,
        filed: HashSet::new(),
        clock: opts.clock.clone(),
        appended: Vec::new(),
    };
    let mut dispatcher = Dispatcher::new(fog.dispatch.clone(), Receivers::single(fog.receiver.clone()), sink);

    let offset = FixedOffset::east_opt(fog.utc_offset_s).ok_or_else(|| anyhow!("bad utc_offset_s"))?;
    let (persist_tx, persist_rx) = mpsc::channel();
    let persist = {
        let (cams, root) = (cameras.clone(), fog.storage_root.clone());
        std::thread::spawn(move || persist_loop(cams, root, offset, persist_rx))
    };

    let workers = fog.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get().saturating_sub(1))
            .unwrap_or(1)
            .max(1)
    });
    let (job_tx, job_rx) = mpsc::sync_channel::<Job>(256);
    let job_rx = Arc::new(Mutex::new(job_rx));
    let (res_tx, res_rx) = mpsc::channel::<Scored>();
    let pool: Vec<_> = (0..workers)
        .map(|_| {
            let (m, p, j, o) = (model.clone(), policy.clone(), job_rx.clone(), res_tx.clone());
            std::thread::spawn(move || score_loop(m, p, j, o))
        })
        .collect();
    drop(res_tx);

    let decode_errors = Arc::new(AtomicU64::new(0));
    let reconnects = Arc::new(AtomicU64::new(0));
    let readers: Vec<_> = streams
        .iter()
        .enumerate()
        .map(|(index, (edge, camera))| {
            let r = Reader {
                index,
                edge: edge.clone(),
                camera: camera.clone(),
                key: opts.key.clone(),
                clock: opts.clock.clone(),
                timeout: opts.connect_timeout,
                jobs: job_tx.clone(),
                persist: persist_tx.clone(),
                events: events.clone(),
                decode_errors: decode_errors.clone(),
                reconnects: reconnects.clone(),
            };
            std::thread::spawn(move || r.run())
        })
        .collect();
    drop(job_tx);
    drop(persist_tx);

    let mut pending: Vec<BTreeMap<u64, Scored>> = (0..cameras.len()).map(|_| BTreeMap::new()).collect();
    let mut next: Vec<u64> = vec![0; cameras.len()];
    for scored in res_rx {
        let cam = scored.camera;
        pending[cam].insert(scored.seq, scored);
        while let Some(s) = pending[cam].remove(&next[cam]) {
            next[cam] += 1;
            let name = &cameras[cam];
            events.line(format!("PROC {name} {} {:.3}", s.frame_index, s.proc_ms));
            for (score, rec) in &s.scores {
                writeln!(scores_out, "SCORE {name} {} {} {}", s.frame_index, score.object_id, Fixed3::from_f64(score.score))?;
                dispatcher.dispatch(score, rec, s.time_ms);
            }
            for (c, frame, obj, wall) in dispatcher.sink_mut().appended.drain(..) {
                events.line(format!("ALERTED {c} {frame} {obj} {wall}"));
            }
        }
    }
    for _ in 0..5 {
        if dispatcher.pending() == 0 {
            break;
        }
        dispatcher.retry_pending();
        std::thread::sleep(Duration::from_millis(200));
    }
    if dispatcher.pending() > 0 {
        log::warn!("{} alerts undelivered to the webhook", dispatcher.pending());
    }
    scores_out.flush()?;

    let mut report = FogReport::default();
    let mut failure = None;
    for (r, cam) in readers.into_iter().zip(&cameras) {
        match r.join().map_err(|_| anyhow!("reader panicked")).and_then(|x| x) {
            Ok(n) => {
                report.frames.insert(cam.clone(), n);
            }
            Err(e) => failure = Some(e),
        }
    }
    for w in pool {
        let _ = w.join();
    }
    persist.join().map_err(|_| anyhow!("persist thread panicked"))??;
    events.flush();
    report.alerts = dispatcher.sink().filed.len();
    report.decode_errors = decode_errors.load(Ordering::Relaxed);
    report.reconnects = reconnects.load(Ordering::Relaxed);
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Frames stored in the daily feature logs of one camera directory.
pub fn count_logged_frames(dir: &Path) -> std::io::Result<u64> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("features-") && n.ends_with(".log"))
        })
        .collect();
    files.sort();
    let mut n = 0;
    for f in files {
        let mut d = FrameDecoder::new();
        d.push(&std::fs::read(f)?);
        n += d.filter(|r| r.is_ok()).count() as u64;
    }
    Ok(n)
}
