use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{ActorKind, ActorScript, Scenario, ScenarioError};
use crate::config::DetectorKind;
use crate::edge::{BoundingBox, Detection, Detector, EdgeConfig, EdgeError, EdgePipeline, FrameFeatureSet, FrameMeta, ObjectId};
use crate::Fixed3;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDetection {
    pub actor: u32,
    pub detection: Detection,
}

/// Detections of one camera, indexed by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraStream {
    pub camera: String,
    pub frames: Vec<Vec<LabeledDetection>>,
}

impl CameraStream {
    pub fn detections(&self, frame: u64) -> Vec<Detection> {
        self.frames
            .get(frame as usize)
            .map(|f| f.iter().map(|l| l.detection).collect())
            .unwrap_or_default()
    }

    pub fn detector(&self) -> ScriptedDetector {
        ScriptedDetector {
            frames: (0..self.frames.len() as u64).map(|i| self.detections(i)).collect(),
        }
    }
}

/// Replays precomputed detections.
#[derive(Debug, Clone)]
pub struct ScriptedDetector {
    frames: Vec<Vec<Detection>>,
}

impl Detector for ScriptedDetector {
    fn detect(&mut self, frame_index: u64) -> Vec<Detection> {
        self.frames.get(frame_index as usize).cloned().unwrap_or_default()
    }
}

fn actor_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Box centres of `a` for every frame of the scenario (`None` while absent).
fn trajectory(s: &Scenario, a: &ActorScript) -> Vec<Option<(f64, f64)>> {
    let mut rng = actor_rng(s.seed, u64::from(a.id));
    let (w, _) = s.frame_size;
    let half = s.box_size.0 / 2.0;
    let (lo, hi) = (half, w - half);
    let (mut x, y) = a.path.start;
    let mut y = y;
    let mut speed = a.path.speed;
    let (rmin, rmax) = a.path.reversal_frames;
    let mut countdown = if a.kind == ActorKind::Wanderer { rng.gen_range(rmin..=rmax) } else { 0 };
    let end = a.exit_frame.unwrap_or(s.duration_frames).min(s.duration_frames);
    let mut out = vec![None; s.duration_frames as usize];
    for f in a.entry_frame..end {
        if f > a.entry_frame {
            match a.kind {
                ActorKind::Walker => {
                    x += speed;
                    if x > hi {
                        x = lo;
                    } else if x < lo {
                        x = hi;
                    }
                }
                ActorKind::Loiterer => {
                    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let step: f64 = rng.gen_range(0.1..=a.path.jitter.max(0.1));
                    let (dx, dy) = (x - a.path.start.0, y - a.path.start.1);
                    let dist = (dx * dx + dy * dy).sqrt();
                    if dist + step > a.path.radius && dist > 0.0 {
                        x -= dx / dist * step;
                        y -= dy / dist * step;
                    } else {
                        x += step * angle.cos();
                        y += step * angle.sin();
                    }
                }
                ActorKind::Wanderer => {
                    countdown -= 1;
                    if countdown == 0 || !(lo..=hi).contains(&(x + speed)) {
                        speed = -speed;
                        countdown = rng.gen_range(rmin..=rmax);
                    }
                    x += speed;
                }
            }
        }
        out[f as usize] = Some((x.clamp(lo, hi), y));
    }
    out
}

/// Per-camera labeled detection streams; identical for identical scenarios.
pub fn gen_frames(s: &Scenario) -> Result<Vec<CameraStream>, ScenarioError> {
    s.validate()?;
    let tracks: Vec<(&ActorScript, Vec<Option<(f64, f64)>>)> = s.actors.iter().map(|a| (a, trajectory(s, a))).collect();
    let (bw, bh) = s.box_size;
    let mut streams = Vec::new();
    for (ci, cam) in s.cameras.iter().enumerate() {
        let mut noise = actor_rng(s.seed, 0xC0FFEE + ci as u64);
        let mut frames = Vec::with_capacity(s.duration_frames as usize);
        for f in 0..s.duration_frames {
            let mut dets = Vec::new();
            let mut actors: Vec<_> = tracks.iter().filter(|(a, _)| &a.camera == cam).collect();
            actors.sort_by_key(|(a, _)| a.id);
            for (a, traj) in actors {
                let Some((cx, cy)) = traj[f as usize] else { continue };
                let Ok(mut bbox) = BoundingBox::centered(cx, cy, bw, bh) else { continue };
                let mut confidence = 1.0;
                if let DetectorKind::Noisy { sigma, miss_rate } = s.detector {
                    if miss_rate > 0.0 && noise.gen_bool(miss_rate.clamp(0.0, 1.0)) {
                        continue;
                    }
                    if sigma > 0.0 {
                        let n = Normal::new(0.0, sigma).expect("positive sigma");
                        let mut j = || n.sample(&mut noise);
                        let x0 = (bbox.x_min() + j()).max(0.0);
                        let y0 = (bbox.y_min() + j()).max(0.0);
                        let x1 = (bbox.x_max() + j()).max(x0 + 1.0);
                        let y1 = (bbox.y_max() + j()).max(y0 + 1.0);
                        bbox = BoundingBox::new(x0, y0, x1, y1).expect("ordered corners");
                    }
                    confidence = 0.9;
                }
                dets.push(LabeledDetection {
                    actor: a.id,
                    detection: Detection::new(bbox, confidence, f).expect("confidence in range"),
                });
            }
            frames.push(dets);
        }
        streams.push(CameraStream {
            camera: cam.clone(),
            frames,
        });
    }
    Ok(streams)
}

/// Edge output for a whole stream plus the actor behind every object id, obtained by
/// running the same tracker the edge node runs.
#[derive(Debug, Clone)]
pub struct EdgeReplay {
    pub frames: Vec<FrameFeatureSet>,
    pub labels: BTreeMap<ObjectId, u32>,
}

pub fn replay_edge(stream: &CameraStream, config: &EdgeConfig, epoch_ms: u64) -> Result<EdgeReplay, EdgeError> {
    let mut pipeline = EdgePipeline::new(config.clone())?;
    let epoch = Fixed3::from_millis(epoch_ms);
    let mut frames = Vec::with_capacity(stream.frames.len());
    let mut labels = BTreeMap::new();
    for (i, dets) in stream.frames.iter().enumerate() {
        let meta = FrameMeta {
            frame_index: i as u64,
            timestamp: config.frame_timestamp(epoch, i as u64),
            camera_id: stream.camera.clone(),
        };
        let raw: Vec<Detection> = dets.iter().map(|d| d.detection).collect();
        let out = pipeline.process_frame(&raw, &meta)?;
        for (d, id) in dets.iter().zip(&out.detection_ids) {
            labels.entry(*id).or_insert(d.actor);
        }
        frames.push(out.features);
    }
    Ok(EdgeReplay { frames, labels })
}
