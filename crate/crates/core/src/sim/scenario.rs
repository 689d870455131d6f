use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{DetectorKind, SimSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorKind {
    /// Near-constant velocity crossing.
    Walker,
    /// Stays inside a small region with sub-threshold jitter.
    Loiterer,
    /// Moderate speed with frequent heading reversals.
    Wanderer,
}

impl ActorKind {
    /// Ground-truth label: should this actor raise an alert?
    pub fn is_suspicious(self) -> bool {
        !matches!(self, ActorKind::Walker)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActorKind::Walker => "walker",
            ActorKind::Loiterer => "loiterer",
            ActorKind::Wanderer => "wanderer",
        }
    }
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "walker" => Ok(ActorKind::Walker),
            "loiterer" => Ok(ActorKind::Loiterer),
            "wanderer" => Ok(ActorKind::Wanderer),
            _ => Err(format!("unknown actor kind {s:?}")),
        }
    }
}

/// Motion parameters; all lengths in pixels, speeds in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Box centre at entry.
    pub start: (f64, f64),
    /// Signed horizontal speed for walkers and wanderers.
    pub speed: f64,
    /// Loiterer: maximum per-frame step.
    pub jitter: f64,
    /// Wanderer: frames between reversals, inclusive range.
    pub reversal_frames: (u64, u64),
    /// Loiterer: maximum distance from `start`.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorScript {
    pub id: u32,
    pub kind: ActorKind,
    pub camera: String,
    pub entry_frame: u64,
    /// Exclusive; `None` means until the end of the scenario.
    pub exit_frame: Option<u64>,
    pub path: PathParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration_frames: u64,
    pub frame_rate: f64,
    pub cameras: Vec<String>,
    pub actors: Vec<ActorScript>,
    pub frame_size: (f64, f64),
    pub box_size: (f64, f64),
    pub detector: DetectorKind,
    /// Capture time of frame 0 (unix ms); the local hour of each frame's timestamp
    /// selects the time-of-day context.
    pub epoch_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("actor id {0} used more than once")]
    DuplicateActor(u32),
    #[error("actor {0} refers to unknown camera {1:?}")]
    UnknownCamera(u32, String),
    #[error("actor {0}: {1}")]
    Path(u32, String),
    #[error("{0}")]
    Invalid(String),
}

pub const BOX_SIZE: (f64, f64) = (40.0, 100.0);

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.cameras.is_empty() {
            return Err(ScenarioError::Invalid("no cameras".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(ScenarioError::Invalid("frame rate must be positive".into()));
        }
        let (w, h) = self.frame_size;
        let (bw, bh) = self.box_size;
        if !(w > bw && h > bh && bw > 0.0 && bh > 0.0) {
            return Err(ScenarioError::Invalid("frame must be larger than the boxes".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.actors {
            if !seen.insert(a.id) {
                return Err(ScenarioError::DuplicateActor(a.id));
            }
            if !self.cameras.contains(&a.camera) {
                return Err(ScenarioError::UnknownCamera(a.id, a.camera.clone()));
            }
            let (x, y) = a.path.start;
            if !(x.is_finite() && y.is_finite() && a.path.speed.is_finite()) {
                return Err(ScenarioError::Path(a.id, "non-finite parameters".into()));
            }
            if a.exit_frame.is_some_and(|e| e <= a.entry_frame) {
                return Err(ScenarioError::Path(a.id, "exit before entry".into()));
            }
            if a.kind == ActorKind::Wanderer && (a.path.reversal_frames.0 == 0 || a.path.reversal_frames.0 > a.path.reversal_frames.1) {
                return Err(ScenarioError::Path(a.id, "bad reversal interval".into()));
            }
        }
        Ok(())
    }

    /// Seeded scenario with the actor counts of `settings`. Actors are spread over the
    /// cameras round-robin and given separate horizontal lanes per camera.
    pub fn generate(seed: u64, settings: &SimSettings, frame_rate: f64, detector: DetectorKind, epoch_ms: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (settings.frame_width, settings.frame_height);
        let kinds = std::iter::repeat(ActorKind::Walker)
            .take(settings.walkers)
            .chain(std::iter::repeat(ActorKind::Loiterer).take(settings.loiterers))
            .chain(std::iter::repeat(ActorKind::Wanderer).take(settings.wanderers));
        let n_cams = settings.cameras.len().max(1);
        let total = settings.walkers + settings.loiterers + settings.wanderers;
        let per_cam = total.div_ceil(n_cams).max(1);
        let lane_top = BOX_SIZE.1 / 2.0 + 10.0;
        let lane_span = (h - BOX_SIZE.1 - 20.0).max(0.0);
        let mut actors = Vec::new();
        for (i, kind) in kinds.enumerate() {
            let camera = settings.cameras.get(i % n_cams).cloned().unwrap_or_default();
            let lane = i / n_cams;
            let cy = if per_cam == 1 {
                h / 2.0
            } else {
                lane_top + lane_span * lane as f64 / (per_cam - 1) as f64
            };
            let half = BOX_SIZE.0 / 2.0;
            let path = match kind {
                ActorKind::Walker => {
                    let v: f64 = rng.gen_range(4.0..=6.0);
                    let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    PathParams {
                        start: (rng.gen_range(half..w - half), cy),
                        speed: v * dir,
                        jitter: 0.0,
                        reversal_frames: (1, 1),
                        radius: 0.0,
                    }
                }
                ActorKind::Loiterer => PathParams {
                    start: (rng.gen_range(w * 0.2..w * 0.8), cy),
                    speed: 0.0,
                    jitter: 0.4,
                    reversal_frames: (1, 1),
                    radius: 12.0,
                },
                ActorKind::Wanderer => PathParams {
                    start: (rng.gen_range(w * 0.25..w * 0.75), cy),
                    speed: if rng.gen_bool(0.5) { 3.0 } else { -3.0 },
                    jitter: 0.0,
                    reversal_frames: (5, 15),
                    radius: 0.0,
                },
            };
            actors.push(ActorScript {
                id: i as u32 + 1,
                kind,
                camera,
                entry_frame: 0,
                exit_frame: None,
                path,
            });
        }
        Scenario {
            seed,
            duration_frames: settings.duration_frames,
            frame_rate,
            cameras: settings.cameras.clone(),
            actors,
            frame_size: (w, h),
            box_size: BOX_SIZE,
            detector,
            epoch_ms,
        }
    }

    pub fn actor(&self, id: u32) -> Option<&ActorScript> {
        self.actors.iter().find(|a| a.id == id)
    }
}
