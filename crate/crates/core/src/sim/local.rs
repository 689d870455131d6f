use std::collections::BTreeMap;

use super::generate::{gen_frames, replay_edge};
use super::metrics::{evaluate, ActorOutcome, Confusion, Labels};
use super::scenario::{Scenario, ScenarioError};
use crate::config::{Config, FogSettings};
use crate::edge::EdgeError;
use crate::fog::{score_frame, AlertRef, ContextPolicy, Dispatcher, FuzzyError, MemorySink, Receivers, RuleBase, SuspicionModel};
use crate::wire::{decode_frame, encode_frame, Decoded};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error("{0}")]
    Other(String),
}

/// Fog model for `fog` settings: the configured rule base file or the default one.
pub fn build_model(fog: &FogSettings, frame_rate: f64) -> Result<SuspicionModel, SimError> {
    let rules = match &fog.rulebase {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SimError::Other(format!("rulebase {}: {e}", path.display())))?;
            RuleBase::parse(&text)?
        }
        None => RuleBase::default_rules(),
    };
    Ok(SuspicionModel::new(rules, fog.factors.clone(), 1.0 / frame_rate)?)
}

pub fn context_policy(fog: &FogSettings) -> ContextPolicy {
    ContextPolicy {
        location: fog.location,
        security: fog.security,
        time_class: fog.time_class,
        utc_offset_s: fog.utc_offset_s,
    }
}

/// Result of running a scenario through edge, wire and fog inside one process.
#[derive(Debug, Clone)]
pub struct LocalRun {
    /// Alert lines in dispatch order.
    pub alerts: Vec<String>,
    pub labels: Labels,
    pub actors: Vec<ActorOutcome>,
    pub confusion: Confusion,
    /// Encoded frames per camera, in frame order.
    pub wire: BTreeMap<String, Vec<Vec<u8>>>,
}

pub fn run_local(scenario: &Scenario, config: &Config) -> Result<LocalRun, SimError> {
    let streams = gen_frames(scenario)?;
    let model = build_model(&config.fog, scenario.frame_rate)?;
    let policy = context_policy(&config.fog);
    let mut dispatcher = Dispatcher::new(
        config.fog.dispatch.clone(),
        Receivers::single(config.fog.receiver.clone()),
        MemorySink::default(),
    );
    let mut edge_cfg = config.edge.pipeline.clone();
    edge_cfg.frame_rate = scenario.frame_rate;
    let mut labels = Labels::new();
    let mut replays = Vec::new();
    for s in &streams {
        let r = replay_edge(s, &edge_cfg, scenario.epoch_ms)?;
        labels.extend(r.labels.iter().map(|(o, a)| ((s.camera.clone(), *o), *a)));
        replays.push((s.camera.clone(), r.frames));
    }
    let mut scores = Vec::new();
    let mut wire: BTreeMap<String, Vec<Vec<u8>>> = BTreeMap::new();
    for f in 0..scenario.duration_frames as usize {
        for (cam, frames) in &replays {
            let bytes = encode_frame(&frames[f]);
            let frame = match decode_frame(&bytes).map_err(|e| SimError::Other(e.to_string()))? {
                Decoded::Complete(frame, _) => frame,
                Decoded::Incomplete => return Err(SimError::Other("incomplete frame".into())),
            };
            wire.entry(cam.clone()).or_default().push(bytes);
            for (score, rec) in score_frame(&model, &policy, &frame)? {
                dispatcher.dispatch(&score, &rec, frame.timestamp.millis());
                scores.push((cam.clone(), score.object_id, score.score));
            }
        }
    }
    let alerts: Vec<String> = dispatcher.sink().delivered.iter().map(|a| a.to_line()).collect();
    let refs: Vec<AlertRef> = alerts.iter().filter_map(|l| AlertRef::parse(l)).collect();
    let (actors, confusion) = evaluate(
        scenario,
        &labels,
        scores.iter().map(|(c, o, s)| (c.as_str(), *o, *s)),
        &refs,
    );
    Ok(LocalRun {
        alerts,
        labels,
        actors,
        confusion,
        wire,
    })
}
