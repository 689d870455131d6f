//! Line-oriented `key = value` configuration with `[edge]`, `[fog]`, `[ledger]` and `[sim]`
//! sections. `#` and `;` start comments. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::edge::EdgeConfig;
use crate::fog::{BuildingSecurity, DispatchConfig, FactorTable, LocationSensitivity, TimeClass};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("[{section}] {key}: {reason}")]
    Value { section: String, key: String, reason: String },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("cannot read {0}: {1}")]
    Io(String, String),
}

const SECTIONS: [&str; 4] = ["edge", "fog", "ledger", "sim"];

/// Raw sections; a repeated key keeps its last value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IniFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl FromStr for IniFile {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut ini = IniFile::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    reason: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        reason: format!("unknown section [{name}]"),
                    });
                }
                ini.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                reason: "expected key = value".into(),
            })?;
            let section = current.as_ref().ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                reason: "key outside of a section".into(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    reason: "empty key".into(),
                });
            }
            ini.sections
                .get_mut(section)
                .expect("section inserted at header")
                .insert(key.to_string(), value.trim().to_string());
        }
        Ok(ini)
    }
}

impl IniFile {
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn keys(&self, section: &str) -> impl Iterator<Item = &str> {
        self.sections.get(section).into_iter().flat_map(|m| m.keys().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorKind {
    /// Scripted boxes reported exactly.
    GroundTruth,
    /// Scripted boxes with seeded Gaussian corner jitter (pixels) and occasional misses.
    Noisy { sigma: f64, miss_rate: f64 },
}

impl FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ground_truth" => Ok(DetectorKind::GroundTruth),
            "noisy" => Ok(DetectorKind::Noisy {
                sigma: 1.0,
                miss_rate: 0.0,
            }),
            _ => Err(format!("unknown detector {s:?} (ground_truth | noisy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSettings {
    pub pipeline: EdgeConfig,
    pub detector: DetectorKind,
    /// Record every n-th frame hash on the ledger; 0 disables recording.
    pub hash_every: u64,
    /// Frames kept for slow subscribers before they lag.
    pub hub_window: usize,
    /// Wall time of frame 0 in sim runs (unix ms).
    pub epoch_ms: u64,
}

impl Default for EdgeSettings {
    fn default() -> Self {
        EdgeSettings {
            pipeline: EdgeConfig::default(),
            detector: DetectorKind::GroundTruth,
            hash_every: 1,
            hub_window: 256,
            epoch_ms: 1_600_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FogSettings {
    pub dispatch: DispatchConfig,
    pub factors: FactorTable,
    pub rulebase: Option<PathBuf>,
    pub storage_root: PathBuf,
    pub location: LocationSensitivity,
    pub security: BuildingSecurity,
    /// Fixed time class; derived from the frame's local hour when absent.
    pub time_class: Option<TimeClass>,
    pub utc_offset_s: i32,
    /// Worker threads; defaults to one less than the hardware threads.
    pub workers: Option<usize>,
    pub receiver: String,
    pub webhook: Option<String>,
}

impl Default for FogSettings {
    fn default() -> Self {
        FogSettings {
            dispatch: DispatchConfig::default(),
            factors: FactorTable::default(),
            rulebase: None,
            storage_root: PathBuf::from("lisps-data"),
            location: LocationSensitivity::Public,
            security: BuildingSecurity::Low,
            time_class: None,
            utc_offset_s: 0,
            workers: None,
            receiver: "security-office".into(),
            webhook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerSettings {
    pub block_interval_ms: u64,
    pub miners: usize,
}

impl Default for LedgerSettings {
    fn default() -> Self {
        LedgerSettings {
            block_interval_ms: 2_000,
            miners: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub duration_frames: u64,
    pub cameras: Vec<String>,
    pub walkers: usize,
    pub loiterers: usize,
    pub wanderers: usize,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            duration_frames: 150,
            cameras: vec!["cam-01".into()],
            walkers: 2,
            loiterers: 1,
            wanderers: 0,
            frame_width: 640.0,
            frame_height: 480.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub edge: EdgeSettings,
    pub fog: FogSettings,
    pub ledger: LedgerSettings,
    pub sim: SimSettings,
}

fn value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::Value {
        section: section.into(),
        key: key.into(),
        reason: e.to_string(),
    })
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        Config::from_ini(&text.parse()?)
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e.to_string()))?;
        text.parse()
    }

    pub fn from_ini(ini: &IniFile) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        let mut noisy_sigma = None;
        let mut noisy_miss = None;

        for key in ini.keys("edge") {
            let raw = ini.get("edge", key).unwrap_or_default();
            let e = &mut c.edge;
            match key {
                "iou_threshold" => e.pipeline.iou_threshold = value("edge", key, raw)?,
                "heading_threshold_deg" => e.pipeline.heading_threshold_deg = value("edge", key, raw)?,
                "motion_epsilon" => e.pipeline.motion_epsilon = value("edge", key, raw)?,
                "frame_rate" => e.pipeline.frame_rate = value("edge", key, raw)?,
                "speed_window" => e.pipeline.speed_window = value("edge", key, raw)?,
                "detector" => e.detector = value("edge", key, raw)?,
                "noise_sigma" => noisy_sigma = Some(value("edge", key, raw)?),
                "miss_rate" => noisy_miss = Some(value("edge", key, raw)?),
                "hash_every" => e.hash_every = value("edge", key, raw)?,
                "hub_window" => e.hub_window = value("edge", key, raw)?,
                "epoch_ms" => e.epoch_ms = value("edge", key, raw)?,
                _ => return Err(unknown("edge", key)),
            }
        }
        if let DetectorKind::Noisy { sigma, miss_rate } = &mut c.edge.detector {
            *sigma = noisy_sigma.unwrap_or(*sigma);
            *miss_rate = noisy_miss.unwrap_or(*miss_rate);
        }
        c.edge.pipeline.validate().map_err(|e| ConfigError::Value {
            section: "edge".into(),
            key: "*".into(),
            reason: e.to_string(),
        })?;

        for key in ini.keys("fog") {
            let raw = ini.get("fog", key).unwrap_or_default();
            let f = &mut c.fog;
            match key {
                "threshold" => f.dispatch.threshold = value("fog", key, raw)?,
                "cooldown_s" => {
                    let s: f64 = value("fog", key, raw)?;
                    if !(s >= 0.0) {
                        return Err(bad("fog", key, "must be >= 0"));
                    }
                    f.dispatch.cooldown_ms = (s * 1000.0).round() as u64;
                }
                "rulebase" => f.rulebase = Some(PathBuf::from(raw)),
                "storage_root" => f.storage_root = PathBuf::from(raw),
                "location" => f.location = value("fog", key, raw)?,
                "security" => f.security = value("fog", key, raw)?,
                "time_class" => {
                    f.time_class = if raw == "auto" {
                        None
                    } else {
                        Some(value("fog", key, raw)?)
                    }
                }
                "utc_offset_s" => f.utc_offset_s = value("fog", key, raw)?,
                "workers" => f.workers = Some(value("fog", key, raw)?),
                "receiver" => f.receiver = raw.to_string(),
                "webhook" => f.webhook = Some(raw.to_string()),
                "factor_day" => f.factors.day = value("fog", key, raw)?,
                "factor_evening" => f.factors.evening = value("fog", key, raw)?,
                "factor_night" => f.factors.night = value("fog", key, raw)?,
                "factor_public" => f.factors.public = value("fog", key, raw)?,
                "factor_restricted" => f.factors.restricted = value("fog", key, raw)?,
                "factor_low" => f.factors.low = value("fog", key, raw)?,
                "factor_medium" => f.factors.medium = value("fog", key, raw)?,
                "factor_high" => f.factors.high = value("fog", key, raw)?,
                _ => return Err(unknown("fog", key)),
            }
        }
        if !(c.fog.dispatch.threshold > 0.0 && c.fog.dispatch.threshold < 1.0) {
            return Err(bad("fog", "threshold", "must be in (0, 1)"));
        }
        if c.fog.workers == Some(0) {
            return Err(bad("fog", "workers", "must be >= 1"));
        }

        for key in ini.keys("ledger") {
            let raw = ini.get("ledger", key).unwrap_or_default();
            match key {
                "block_interval_ms" => c.ledger.block_interval_ms = value("ledger", key, raw)?,
                "miners" => c.ledger.miners = value("ledger", key, raw)?,
                _ => return Err(unknown("ledger", key)),
            }
        }
        if c.ledger.block_interval_ms == 0 || c.ledger.miners == 0 {
            return Err(bad("ledger", "*", "block_interval_ms and miners must be >= 1"));
        }

        for key in ini.keys("sim") {
            let raw = ini.get("sim", key).unwrap_or_default();
            let s = &mut c.sim;
            match key {
                "duration_frames" => s.duration_frames = value("sim", key, raw)?,
                "cameras" => {
                    s.cameras = raw.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect()
                }
                "walkers" => s.walkers = value("sim", key, raw)?,
                "loiterers" => s.loiterers = value("sim", key, raw)?,
                "wanderers" => s.wanderers = value("sim", key, raw)?,
                "frame_width" => s.frame_width = value("sim", key, raw)?,
                "frame_height" => s.frame_height = value("sim", key, raw)?,
                _ => return Err(unknown("sim", key)),
            }
        }
        if c.sim.cameras.is_empty() {
            return Err(bad("sim", "cameras", "at least one camera required"));
        }
        if let Some(cam) = c.sim.cameras.iter().find(|c| !crate::wire::is_valid_camera_id(c)) {
            return Err(bad("sim", "cameras", &format!("invalid camera id {cam:?}")));
        }
        Ok(c)
    }

    /// Renders every setting back into the text form accepted by [`Config::from_str`].
    pub fn to_ini(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let e = &self.edge;
        let p = &e.pipeline;
        let _ = writeln!(out, "[edge]");
        let _ = writeln!(out, "iou_threshold = {}", p.iou_threshold);
        let _ = writeln!(out, "heading_threshold_deg = {}", p.heading_threshold_deg);
        let _ = writeln!(out, "motion_epsilon = {}", p.motion_epsilon);
        let _ = writeln!(out, "frame_rate = {}", p.frame_rate);
        let _ = writeln!(out, "speed_window = {}", p.speed_window);
        match e.detector {
            DetectorKind::GroundTruth => {
                let _ = writeln!(out, "detector = ground_truth");
            }
            DetectorKind::Noisy { sigma, miss_rate } => {
                let _ = writeln!(out, "detector = noisy\nnoise_sigma = {sigma}\nmiss_rate = {miss_rate}");
            }
        }
        let _ = writeln!(out, "hash_every = {}", e.hash_every);
        let _ = writeln!(out, "hub_window = {}", e.hub_window);
        let _ = writeln!(out, "epoch_ms = {}", e.epoch_ms);

        let f = &self.fog;
        let _ = writeln!(out, "\n[fog]");
        let _ = writeln!(out, "threshold = {}", f.dispatch.threshold);
        let _ = writeln!(out, "cooldown_s = {}", f.dispatch.cooldown_ms as f64 / 1000.0);
        if let Some(r) = &f.rulebase {
            let _ = writeln!(out, "rulebase = {}", r.display());
        }
        let _ = writeln!(out, "storage_root = {}", f.storage_root.display());
        let location = match f.location {
            LocationSensitivity::Public => "public",
            LocationSensitivity::Restricted => "restricted",
        };
        let security = match f.security {
            BuildingSecurity::Low => "low",
            BuildingSecurity::Medium => "medium",
            BuildingSecurity::High => "high",
        };
        let time_class = match f.time_class {
            None => "auto",
            Some(TimeClass::Day) => "day",
            Some(TimeClass::Evening) => "evening",
            Some(TimeClass::Night) => "night",
        };
        let _ = writeln!(out, "location = {location}\nsecurity = {security}\ntime_class = {time_class}");
        let _ = writeln!(out, "utc_offset_s = {}", f.utc_offset_s);
        if let Some(w) = f.workers {
            let _ = writeln!(out, "workers = {w}");
        }
        let _ = writeln!(out, "receiver = {}", f.receiver);
        if let Some(w) = &f.webhook {
            let _ = writeln!(out, "webhook = {w}");
        }
        let t = &f.factors;
        for (name, v) in [
            ("day", t.day),
            ("evening", t.evening),
            ("night", t.night),
            ("public", t.public),
            ("restricted", t.restricted),
            ("low", t.low),
            ("medium", t.medium),
            ("high", t.high),
        ] {
            let _ = writeln!(out, "factor_{name} = {v}");
        }

        let _ = writeln!(out, "\n[ledger]");
        let _ = writeln!(out, "block_interval_ms = {}", self.ledger.block_interval_ms);
        let _ = writeln!(out, "miners = {}", self.ledger.miners);

        let s = &self.sim;
        let _ = writeln!(out, "\n[sim]");
        let _ = writeln!(out, "duration_frames = {}", s.duration_frames);
        let _ = writeln!(out, "cameras = {}", s.cameras.join(","));
        let _ = writeln!(out, "walkers = {}\nloiterers = {}\nwanderers = {}", s.walkers, s.loiterers, s.wanderers);
        let _ = writeln!(out, "frame_width = {}\nframe_height = {}", s.frame_width, s.frame_height);
        out
    }
}

fn unknown(section: &str, key: &str) -> ConfigError {
    ConfigError::UnknownKey {
        section: section.into(),
        key: key.into(),
    }
}

fn bad(section: &str, key: &str, reason: &str) -> ConfigError {
    ConfigError::Value {
        section: section.into(),
        key: key.into(),
        reason: reason.into(),
    }
}
