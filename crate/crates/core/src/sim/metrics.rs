use std::collections::BTreeMap;
use std::fmt::Write;

use super::scenario::{ActorKind, Scenario};
use crate::edge::ObjectId;
use crate::fog::AlertRef;
use crate::Fixed3;

/// Alert outcome per labeled actor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutcome {
    pub actor: u32,
    pub kind: ActorKind,
    pub camera: String,
    pub objects: Vec<ObjectId>,
    pub peak_score: f64,
    pub alerted: bool,
}

/// Object id -> actor id, per camera.
pub type Labels = BTreeMap<(String, ObjectId), u32>;

/// Attributes scores and alerts to actors. Every actor is counted exactly once.
pub fn evaluate<'a>(
    scenario: &Scenario,
    labels: &Labels,
    scores: impl IntoIterator<Item = (&'a str, ObjectId, f64)>,
    alerts: &[AlertRef],
) -> (Vec<ActorOutcome>, Confusion) {
    let mut out: BTreeMap<u32, ActorOutcome> = scenario
        .actors
        .iter()
        .map(|a| {
            (
                a.id,
                ActorOutcome {
                    actor: a.id,
                    kind: a.kind,
                    camera: a.camera.clone(),
                    objects: vec![],
                    peak_score: 0.0,
                    alerted: false,
                },
            )
        })
        .collect();
    for ((cam, obj), actor) in labels {
        if let Some(o) = out.get_mut(actor) {
            if &o.camera == cam {
                o.objects.push(*obj);
            }
        }
    }
    for (cam, obj, score) in scores {
        if let Some(o) = labels.get(&(cam.to_string(), obj)).and_then(|a| out.get_mut(a)) {
            o.peak_score = o.peak_score.max(score);
        }
    }
    for a in alerts {
        if let Some(o) = labels.get(&(a.camera_id.clone(), a.object_id)).and_then(|id| out.get_mut(id)) {
            o.alerted = true;
        }
    }
    let mut c = Confusion::default();
    for o in out.values() {
        match (o.kind.is_suspicious(), o.alerted) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    (out.into_values().collect(), c)
}

/// Nearest-rank percentile (`q` in `[0, 100]`); `None` for no samples.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub edge_fps: BTreeMap<String, f64>,
    pub frames_sent: BTreeMap<String, u64>,
    pub frames_logged: BTreeMap<String, u64>,
    /// Fog processing time per frame.
    pub fog_frame_ms: Vec<f64>,
    /// Frame capture to alert-sink append.
    pub alert_latency_ms: Vec<f64>,
    pub alerts: usize,
    pub confusion: Confusion,
    pub actors: Vec<ActorOutcome>,
    pub state_digest: Option<String>,
}

fn r3(v: f64) -> Fixed3 {
    Fixed3::from_f64(v)
}

impl Metrics {
    /// One line per metric. Timing lines (`edge_fps`, `fog_frame_ms`, `alert_latency_ms`)
    /// depend on the machine; all other lines are a function of seed and config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (cam, fps) in &self.edge_fps {
            let _ = writeln!(s, "edge_fps {cam} {}", r3(*fps));
        }
        for (cam, n) in &self.frames_sent {
            let _ = writeln!(s, "frames_sent {cam} {n}");
        }
        for (cam, n) in &self.frames_logged {
            let _ = writeln!(s, "frames_logged {cam} {n}");
        }
        for (name, v) in [("fog_frame_ms", &self.fog_frame_ms), ("alert_latency_ms", &self.alert_latency_ms)] {
            let p = |q| percentile(v, q).map(r3).unwrap_or(Fixed3::ZERO);
            let _ = writeln!(s, "{name} count={} median={} p95={} max={}", v.len(), p(50.0), p(95.0), p(100.0));
        }
        let _ = writeln!(s, "alerts {}", self.alerts);
        let c = &self.confusion;
        let _ = writeln!(
            s,
            "confusion tp={} fp={} fn={} tn={} precision={} recall={}",
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            r3(c.precision()),
            r3(c.recall())
        );
        for a in &self.actors {
            let _ = writeln!(
                s,
                "actor {} {} cam={} objects={} peak={} alerted={}",
                a.actor,
                a.kind,
                a.camera,
                a.objects.len(),
                r3(a.peak_score),
                u8::from(a.alerted)
            );
        }
        if let Some(d) = &self.state_digest {
            let _ = writeln!(s, "state_digest {d}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 100.0), Some(5.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
