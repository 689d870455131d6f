use thiserror::Error;

use super::associate::associate;
use super::features::{extract_features, FrameFeatureSet, ObjectId};
use super::track::Track;
use super::Detection;
use crate::Fixed3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EdgeError {
    #[error("frame {got} is not after frame {previous}")]
    OutOfOrder { previous: u64, got: u64 },
    #[error("detection for frame {detection} passed with frame {frame}")]
    FrameMismatch { frame: u64, detection: u64 },
    #[error("invalid edge configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConfig {
    pub iou_threshold: f64,
    pub heading_threshold_deg: f64,
    /// Steps slower than this (px/frame) carry no heading.
    pub motion_epsilon: f64,
    pub frame_rate: f64,
    /// Number of trailing steps averaged for speed; 1 is instantaneous.
    pub speed_window: usize,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            iou_threshold: 0.3,
            heading_threshold_deg: 45.0,
            motion_epsilon: 0.5,
            frame_rate: 5.0,
            speed_window: 1,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<(), EdgeError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(EdgeError::Config("iou_threshold must be in (0, 1)".into()));
        }
        if !(self.heading_threshold_deg > 0.0 && self.heading_threshold_deg < 180.0) {
            return Err(EdgeError::Config("heading_threshold_deg must be in (0, 180)".into()));
        }
        if !(self.motion_epsilon >= 0.0) || !(self.frame_rate > 0.0) || self.speed_window == 0 {
            return Err(EdgeError::Config(
                "motion_epsilon >= 0, frame_rate > 0 and speed_window >= 1 required".into(),
            ));
        }
        Ok(())
    }

    /// Capture time of frame `index` relative to `epoch`, rounded to the millisecond.
    pub fn frame_timestamp(&self, epoch: Fixed3, index: u64) -> Fixed3 {
        let offset = (index as f64 * 1000.0 / self.frame_rate).round() as u64;
        epoch.saturating_add(Fixed3::from_millis(offset))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMeta {
    pub frame_index: u64,
    pub timestamp: Fixed3,
    pub camera_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub features: FrameFeatureSet,
    /// Object id assigned to each input detection, by detection index.
    pub detection_ids: Vec<ObjectId>,
    /// Tracks dropped in this frame.
    pub lost: Vec<ObjectId>,
}

/// Single-camera tracker state. Owned by one sequential pipeline.
#[derive(Debug, Clone)]
pub struct EdgePipeline {
    config: EdgeConfig,
    active: Vec<Track>,
    last_frame: Option<u64>,
    last_id: Option<ObjectId>,
}

impl EdgePipeline {
    pub fn new(config: EdgeConfig) -> Result<Self, EdgeError> {
        config.validate()?;
        Ok(EdgePipeline {
            config,
            active: Vec::new(),
            last_frame: None,
            last_id: None,
        })
    }

    pub fn config(&self) -> &EdgeConfig {
        &self.config
    }

    pub fn active_tracks(&self) -> &[Track] {
        &self.active
    }

    /// New ids are the frame timestamp; objects born in the same millisecond are spread
    /// over the following milliseconds so ids stay unique and increasing.
    fn next_id(&mut self, timestamp: Fixed3) -> ObjectId {
        let id = match self.last_id {
            Some(last) if last >= timestamp => last.saturating_add(Fixed3::from_millis(1)),
            _ => timestamp,
        };
        self.last_id = Some(id);
        id
    }

    /// Associates `detections` with the active tracks, drops unmatched tracks, opens new
    /// ones and returns the features of every track alive after this frame.
    pub fn process_frame(&mut self, detections: &[Detection], meta: &FrameMeta) -> Result<FrameOutput, EdgeError> {
        if let Some(previous) = self.last_frame {
            if meta.frame_index <= previous {
                return Err(EdgeError::OutOfOrder {
                    previous,
                    got: meta.frame_index,
                });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index != meta.frame_index) {
            return Err(EdgeError::FrameMismatch {
                frame: meta.frame_index,
                detection: d.frame_index,
            });
        }
        self.last_frame = Some(meta.frame_index);

        let assignment = associate(&self.active, detections, self.config.iou_threshold);
        let mut detection_ids = vec![ObjectId::ZERO; detections.len()];
        for &(ti, di) in &assignment.matches {
            let track = &mut self.active[ti];
            track.push(
                meta.frame_index,
                detections[di].bbox,
                self.config.heading_threshold_deg,
                self.config.motion_epsilon,
            );
            detection_ids[di] = track.id();
        }

        let mut lost = Vec::new();
        let mut keep = vec![true; self.active.len()];
        for &ti in &assignment.unmatched_tracks {
            self.active[ti].mark_lost();
            lost.push(self.active[ti].id());
            keep[ti] = false;
        }
        let mut flags = keep.into_iter();
        self.active.retain(|_| flags.next().unwrap_or(true));

        for &di in &assignment.unmatched_detections {
            let id = self.next_id(meta.timestamp);
            self.active.push(Track::new(id, meta.frame_index, detections[di].bbox));
            detection_ids[di] = id;
        }

        let mut features = FrameFeatureSet::empty(meta.frame_index, meta.camera_id.clone(), meta.timestamp);
        for track in &self.active {
            features.insert(extract_features(track, meta.timestamp, self.config.speed_window));
        }
        Ok(FrameOutput {
            features,
            detection_ids,
            lost,
        })
    }
}
