use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use chrono::DateTime;
use thiserror::Error;

use super::SuspicionScore;
use crate::edge::{FeatureRecord, ObjectId};
use crate::Fixed3;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("alert sink i/o: {0}")]
    Io(#[from] io::Error),
    #[error("alert sink unavailable: {0}")]
    Unavailable(String),
}

/// `YYYY-MM-DDTHH:MM:SS.mmmZ` for a Unix time in milliseconds.
pub fn format_iso8601(ms: u64) -> String {
    DateTime::from_timestamp_millis(ms as i64)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string())
        .unwrap_or_else(|| "invalid-time".to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub camera_id: String,
    pub object_id: ObjectId,
    pub frame_index: u64,
    pub score: f64,
    pub record: FeatureRecord,
    /// Capture time of the triggering frame, Unix milliseconds.
    pub time_ms: u64,
    pub receiver: String,
}

impl Alert {
    /// The canonical one-line form written to alert files and webhook bodies (no LF).
    pub fn to_line(&self) -> String {
        format!(
            "ALERT {} cam={} obj={} frame={} score={} speed={} dirch={} dwell={}",
            format_iso8601(self.time_ms),
            self.camera_id,
            self.object_id,
            self.frame_index,
            Fixed3::from_f64(self.score),
            self.record.speed,
            self.record.direction_changes,
            self.record.dwell
        )
    }
}

/// Fields identifying an alert, read back from its line form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertRef {
    pub camera_id: String,
    pub object_id: ObjectId,
    pub frame_index: u64,
    pub score: Fixed3,
}

impl AlertRef {
    pub fn parse(line: &str) -> Option<AlertRef> {
        let mut parts = line.trim_end().split(' ');
        if parts.next()? != "ALERT" {
            return None;
        }
        parts.next()?;
        let mut field = |name: &str| parts.next()?.strip_prefix(name)?.strip_prefix('=').map(str::to_string);
        Some(AlertRef {
            camera_id: field("cam")?,
            object_id: field("obj")?.parse().ok()?,
            frame_index: field("frame")?.parse().ok()?,
            score: field("score")?.parse().ok()?,
        })
    }
}

pub trait AlertSink {
    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError>;
}

impl<S: AlertSink + ?Sized> AlertSink for Box<S> {
    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
        (**self).deliver(alert)
    }
}

/// Append-only alert file, one line per alert.
#[derive(Debug)]
pub struct FileSink {
    file: File,
}

impl FileSink {
    pub fn open(path: &Path) -> io::Result<Self> {
        Ok(FileSink {
            file: OpenOptions::new().create(true).append(true).open(path)?,
        })
    }
}

impl AlertSink for FileSink {
    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
        let mut line = alert.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub delivered: Vec<Alert>,
}

impl AlertSink for MemorySink {
    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
        self.delivered.push(alert.clone());
        Ok(())
    }
}

/// Exactly one designated receiver per camera; cameras without an entry use the default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receivers {
    pub default: String,
    pub by_camera: HashMap<String, String>,
}

impl Receivers {
    pub fn single(receiver: impl Into<String>) -> Self {
        Receivers {
            default: receiver.into(),
            by_camera: HashMap::new(),
        }
    }

    pub fn for_camera(&self, camera_id: &str) -> &str {
        self.by_camera.get(camera_id).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchConfig {
    /// Alerts fire strictly above this score.
    pub threshold: f64,
    pub cooldown_ms: u64,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            threshold: 0.6,
            cooldown_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suppressed {
    BelowThreshold,
    Cooldown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispatchOutcome {
    Delivered(Alert),
    /// The sink failed; the alert waits in the retry queue.
    Queued(Alert),
    Suppressed(Suppressed),
}

/// Threshold + per-object cooldown in front of a sink. Alerts the sink refuses are kept in
/// order and retried before any newer alert.
pub struct Dispatcher<S: AlertSink> {
    config: DispatchConfig,
    receivers: Receivers,
    sink: S,
    last_alert: HashMap<(String, ObjectId), u64>,
    pending: VecDeque<Alert>,
}

impl<S: AlertSink> Dispatcher<S> {
    pub fn new(config: DispatchConfig, receivers: Receivers, sink: S) -> Self {
        assert!(
            config.threshold > 0.0 && config.threshold < 1.0,
            "threshold must be in (0, 1)"
        );
        Dispatcher {
            config,
            receivers,
            sink,
            last_alert: HashMap::new(),
            pending: VecDeque::new(),
        }
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Delivers queued alerts in order; stops at the first failure.
    pub fn retry_pending(&mut self) -> usize {
        let mut sent = 0;
        while let Some(front) = self.pending.front() {
            match self.sink.deliver(front) {
                Ok(()) => {
                    self.pending.pop_front();
                    sent += 1;
                }
                Err(e) => {
                    log::warn!("alert retry failed: {e}");
                    break;
                }
            }
        }
        sent
    }

    /// `time_ms` is the capture time of the scored frame; cooldown runs on that clock.
    pub fn dispatch(&mut self, score: &SuspicionScore, record: &FeatureRecord, time_ms: u64) -> DispatchOutcome {
        if !(score.score > self.config.threshold) {
            return DispatchOutcome::Suppressed(Suppressed::BelowThreshold);
        }
        let key = (score.camera_id.clone(), score.object_id);
        if let Some(&last) = self.last_alert.get(&key) {
            if time_ms < last.saturating_add(self.config.cooldown_ms) {
                return DispatchOutcome::Suppressed(Suppressed::Cooldown);
            }
        }
        self.last_alert.insert(key, time_ms);
        let alert = Alert {
            camera_id: score.camera_id.clone(),
            object_id: score.object_id,
            frame_index: score.frame_index,
            score: score.score,
            record: *record,
            time_ms,
            receiver: self.receivers.for_camera(&score.camera_id).to_string(),
        };
        self.retry_pending();
        if !self.pending.is_empty() {
            self.pending.push_back(alert.clone());
            return DispatchOutcome::Queued(alert);
        }
        match self.sink.deliver(&alert) {
            Ok(()) => DispatchOutcome::Delivered(alert),
            Err(e) => {
                log::warn!("alert delivery failed, queued: {e}");
                self.pending.push_back(alert.clone());
                DispatchOutcome::Queued(alert)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::QuantizedBox;

    fn record() -> FeatureRecord {
        FeatureRecord {
            object_id: Fixed3::from_millis(90_200),
            speed: Fixed3::from_millis(300),
            direction_changes: 2,
            dwell: Fixed3::from_millis(31_000),
            bbox: QuantizedBox {
                x_min: Fixed3::ZERO,
                y_min: Fixed3::ZERO,
                x_max: Fixed3::from_millis(40_000),
                y_max: Fixed3::from_millis(100_000),
            },
        }
    }

    fn score(v: f64, frame: u64) -> SuspicionScore {
        SuspicionScore {
            object_id: Fixed3::from_millis(90_200),
            camera_id: "cam-01".into(),
            frame_index: frame,
            score: v,
        }
    }

    fn dispatcher() -> Dispatcher<MemorySink> {
        Dispatcher::new(DispatchConfig::default(), Receivers::single("ops"), MemorySink::default())
    }

    #[test]
    fn below_threshold_suppressed() {
        let mut d = dispatcher();
        assert_eq!(
            d.dispatch(&score(0.4, 1), &record(), 0),
            DispatchOutcome::Suppressed(Suppressed::BelowThreshold)
        );
        // strict comparison
        assert_eq!(
            d.dispatch(&score(0.6, 1), &record(), 0),
            DispatchOutcome::Suppressed(Suppressed::BelowThreshold)
        );
    }

    #[test]
    fn above_threshold_carries_metadata() {
        let mut d = dispatcher();
        let DispatchOutcome::Delivered(a) = d.dispatch(&score(0.7, 12), &record(), 1_600_000_000_200) else {
            panic!("expected delivery");
        };
        assert_eq!(a.receiver, "ops");
        assert_eq!(
            a.to_line(),
            "ALERT 2020-09-13T12:26:40.200Z cam=cam-01 obj=90.200 frame=12 score=0.700 speed=0.300 dirch=2 dwell=31.000"
        );
        assert_eq!(
            AlertRef::parse(&a.to_line()).unwrap(),
            AlertRef {
                camera_id: "cam-01".into(),
                object_id: Fixed3::from_millis(90_200),
                frame_index: 12,
                score: Fixed3::from_millis(700),
            }
        );
        assert_eq!(AlertRef::parse("ALERT x cam=c"), None);
    }

    #[test]
    fn cooldown_collapses_repeats() {
        let mut d = dispatcher();
        for i in 0..10u64 {
            d.dispatch(&score(0.8, i), &record(), 1_000 + i * 200);
        }
        assert_eq!(d.sink().delivered.len(), 1);
        d.dispatch(&score(0.8, 200), &record(), 1_000 + 30_000);
        assert_eq!(d.sink().delivered.len(), 2);
    }

    struct Flaky {
        fail: bool,
        got: Vec<u64>,
    }

    impl AlertSink for Flaky {
        fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
            if self.fail {
                return Err(SinkError::Unavailable("down".into()));
            }
            self.got.push(alert.frame_index);
            Ok(())
        }
    }

    #[test]
    fn failures_are_queued_and_retried_in_order() {
        let cfg = DispatchConfig {
            cooldown_ms: 0,
            ..DispatchConfig::default()
        };
        let mut d = Dispatcher::new(cfg, Receivers::single("ops"), Flaky { fail: true, got: vec![] });
        assert!(matches!(d.dispatch(&score(0.9, 1), &record(), 0), DispatchOutcome::Queued(_)));
        assert!(matches!(d.dispatch(&score(0.9, 2), &record(), 1), DispatchOutcome::Queued(_)));
        assert_eq!(d.pending(), 2);
        d.sink_mut().fail = false;
        assert!(matches!(d.dispatch(&score(0.9, 3), &record(), 2), DispatchOutcome::Delivered(_)));
        assert_eq!(d.sink().got, vec![1, 2, 3]);
        assert_eq!(d.pending(), 0);
    }
}
