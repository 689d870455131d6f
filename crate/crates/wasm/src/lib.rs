//! Browser bindings: the fuzzy score surface, a seeded scenario run, and IoU plus the
//! feature wire format for two boxes. `www/index.html` is the page that drives them.

use std::fmt::Write as _;

use lisps_core::config::Config;
use lisps_core::edge::{iou, BoundingBox, FeatureRecord, FrameFeatureSet, QuantizedBox};
use lisps_core::fog::{ContextualInputs, SuspicionModel};
use lisps_core::sim::{gen_frames, run_local, scenario_from_config};
use lisps_core::wire::{decode_frame, encode_frame, Decoded};
use lisps_core::Fixed3;
use wasm_bindgen::prelude::*;

fn model() -> SuspicionModel {
    SuspicionModel::with_defaults(0.2)
}

fn domain(m: &SuspicionModel, name: &str) -> (f64, f64) {
    let r = m.rules();
    r.input_index(name).map(|i| r.inputs()[i].domain()).unwrap_or((0.0, 1.0))
}

/// `[speed_lo, speed_hi, dwell_lo, dwell_hi]` of the default rule base.
#[wasm_bindgen]
pub fn surface_domain() -> Vec<f64> {
    let m = model();
    let (a, b) = domain(&m, "speed");
    let (c, d) = domain(&m, "dwell");
    vec![a, b, c, d]
}

/// Scores on an `n` x `n` grid, row-major with dwell along rows and speed along columns.
#[wasm_bindgen]
pub fn score_surface(n: usize, dir_change_rate: f64, context_weight: f64) -> Vec<f64> {
    let m = model();
    let n = n.clamp(2, 256);
    let (s0, s1) = domain(&m, "speed");
    let (d0, d1) = domain(&m, "dwell");
    let step = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let inputs = ContextualInputs {
                speed: step(s0, s1, col),
                dir_change_rate,
                dwell: step(d0, d1, row),
                context_weight: context_weight.clamp(1.0, 2.0),
            };
            out.push(m.score_inputs(&inputs).unwrap_or(f64::NAN));
        }
    }
    out
}

/// Runs a one-camera scenario through edge, wire and fog. Lines:
/// `size <w> <h>`, `pt <actor> <frame> <cx> <cy>`, `actor <id> <kind> <peak> <alerted>`,
/// then the alert lines.
#[wasm_bindgen]
pub fn run_demo(seed: u64, walkers: usize, loiterers: usize, wanderers: usize, frames: u64) -> Result<String, JsError> {
    let mut config = Config::default();
    config.sim.walkers = walkers.min(12);
    config.sim.loiterers = loiterers.min(12);
    config.sim.wanderers = wanderers.min(12);
    config.sim.duration_frames = frames.clamp(10, 1_500);
    let scenario = scenario_from_config(seed, &config);
    let mut text = String::new();
    let _ = writeln!(text, "size {} {}", scenario.frame_size.0, scenario.frame_size.1);
    for stream in gen_frames(&scenario).map_err(|e| JsError::new(&e.to_string()))? {
        for (f, dets) in stream.frames.iter().enumerate() {
            for d in dets {
                let (x, y) = d.detection.bbox.centroid();
                let _ = writeln!(text, "pt {} {f} {x:.1} {y:.1}", d.actor);
            }
        }
    }
    let run = run_local(&scenario, &config).map_err(|e| JsError::new(&e.to_string()))?;
    for a in &run.actors {
        let _ = writeln!(text, "actor {} {} {:.3} {}", a.actor, a.kind, a.peak_score, u8::from(a.alerted));
    }
    for line in &run.alerts {
        let _ = writeln!(text, "{line}");
    }
    Ok(text)
}

fn bbox(v: &[f64]) -> Result<BoundingBox, JsError> {
    match v {
        [x0, y0, x1, y1] => BoundingBox::new(*x0, *y0, *x1, *y1).map_err(|e| JsError::new(&e.to_string())),
        _ => Err(JsError::new("a box is [x_min, y_min, x_max, y_max]")),
    }
}

#[wasm_bindgen]
pub fn box_iou(a: &[f64], b: &[f64]) -> Result<f64, JsError> {
    Ok(iou(&bbox(a)?, &bbox(b)?))
}

/// Wire encoding of a frame holding the two boxes as objects 1 and 2.
#[wasm_bindgen]
pub fn wire_frame(a: &[f64], b: &[f64], frame_index: u64) -> Result<String, JsError> {
    let mut frame = FrameFeatureSet::empty(frame_index, "cam-01", Fixed3::from_millis(1_600_000_000_000 + frame_index * 200));
    for (i, v) in [a, b].into_iter().enumerate() {
        let b = bbox(v)?;
        frame.insert(FeatureRecord {
            object_id: Fixed3::from_millis(1_600_000_000_000 + i as u64 + 1),
            speed: Fixed3::ZERO,
            direction_changes: 0,
            dwell: Fixed3::from_millis(frame_index * 200),
            bbox: QuantizedBox::from(&b),
        });
    }
    String::from_utf8(encode_frame(&frame)).map_err(|e| JsError::new(&e.to_string()))
}

/// Decodes edited wire text: `ok <frame> <objects>`, `incomplete`, or `error <reason>`.
#[wasm_bindgen]
pub fn wire_check(text: &str) -> String {
    match decode_frame(text.as_bytes()) {
        Ok(Decoded::Complete(f, used)) if used == text.len() => format!("ok frame {} with {} objects", f.frame_index, f.objects.len()),
        Ok(Decoded::Complete(f, used)) => format!("ok frame {} ({} trailing bytes)", f.frame_index, text.len() - used),
        Ok(Decoded::Incomplete) => "incomplete".into(),
        Err(e) => format!("error {}", e.kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_has_n_squared_probabilities() {
        let s = score_surface(8, 0.0, 1.0);
        assert_eq!(s.len(), 64);
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        // top-left is fast and brief, bottom-left slow and long
        assert!(s[56] > s[7]);
    }

    #[test]
    fn demo_lists_actors_and_points() {
        let t = run_demo(42, 2, 1, 0, 150).unwrap();
        assert_eq!(t.lines().filter(|l| l.starts_with("actor ")).count(), 3);
        assert!(t.lines().any(|l| l.starts_with("pt 3 ")));
        assert!(t.lines().any(|l| l.starts_with("ALERT ")));
    }

    #[test]
    fn wire_round_trip_and_edit_detection() {
        let a = [10.0, 20.0, 50.0, 120.0];
        let b = [30.0, 20.0, 70.0, 120.0];
        assert!((box_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let text = wire_frame(&a, &b, 4).unwrap();
        assert_eq!(wire_check(&text), "ok frame 4 with 2 objects");
        assert!(wire_check(&text.replace("END 4", "END 5")).starts_with("error"));
        assert_eq!(wire_check(&text[..20]), "incomplete");
    }
}
