//! Edge layer: IoU tracking over detector output and per-object movement features.

mod associate;
mod features;
mod geometry;
mod pipeline;
mod track;

pub use associate::{associate, Assignment};
pub use features::{extract_features, FeatureRecord, FrameFeatureSet, ObjectId, QuantizedBox};
pub use geometry::{iou, BoundingBox, GeometryError};
pub use pipeline::{EdgeConfig, EdgeError, EdgePipeline, FrameMeta, FrameOutput};
pub use track::{heading_delta_deg, Track, TrackState};

/// One detector hit. `confidence` is in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub frame_index: u64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64, frame_index: u64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::Confidence(confidence));
        }
        Ok(Detection {
            bbox,
            confidence,
            frame_index,
        })
    }
}

/// Pluggable source of per-frame detections.
pub trait Detector {
    fn detect(&mut self, frame_index: u64) -> Vec<Detection>;
}
