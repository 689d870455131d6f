//! Deterministic labeled scenarios, synthetic detectors, and run metrics.

mod generate;
mod local;
mod metrics;
mod scenario;

pub use generate::{gen_frames, replay_edge, CameraStream, EdgeReplay, LabeledDetection, ScriptedDetector};
pub use local::{build_model, context_policy, run_local, LocalRun, SimError};
pub use metrics::{evaluate, percentile, ActorOutcome, Confusion, Labels, Metrics};
pub use scenario::{ActorKind, ActorScript, PathParams, Scenario, ScenarioError, BOX_SIZE};

use crate::config::Config;

/// Scenario for `seed` as described by `config`.
pub fn scenario_from_config(seed: u64, config: &Config) -> Scenario {
    Scenario::generate(
        seed,
        &config.sim,
        config.edge.pipeline.frame_rate,
        config.edge.detector,
        config.edge.epoch_ms,
    )
}
