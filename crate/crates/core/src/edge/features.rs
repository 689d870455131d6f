use std::collections::BTreeMap;

use super::geometry::{BoundingBox, GeometryError};
use super::track::Track;
use crate::Fixed3;

/// Object key: first detection time in seconds, at millisecond resolution.
pub type ObjectId = Fixed3;

/// A bounding box rounded to the wire's three decimal places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedBox {
    pub x_min: Fixed3,
    pub y_min: Fixed3,
    pub x_max: Fixed3,
    pub y_max: Fixed3,
}

impl QuantizedBox {
    pub fn to_bbox(&self) -> Result<BoundingBox, GeometryError> {
        BoundingBox::new(
            self.x_min.to_f64(),
            self.y_min.to_f64(),
            self.x_max.to_f64(),
            self.y_max.to_f64(),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }
}

impl From<&BoundingBox> for QuantizedBox {
    fn from(b: &BoundingBox) -> Self {
        QuantizedBox {
            x_min: Fixed3::from_f64(b.x_min()),
            y_min: Fixed3::from_f64(b.y_min()),
            x_max: Fixed3::from_f64(b.x_max()),
            y_max: Fixed3::from_f64(b.y_max()),
        }
    }
}

/// Movement features of one object in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureRecord {
    pub object_id: ObjectId,
    /// Pixels per frame.
    pub speed: Fixed3,
    /// Cumulative count of heading changes above the configured threshold.
    pub direction_changes: u32,
    /// Seconds since first detection.
    pub dwell: Fixed3,
    pub bbox: QuantizedBox,
}

/// Every active object's features for one frame of one camera.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameFeatureSet {
    pub frame_index: u64,
    pub camera_id: String,
    pub timestamp: Fixed3,
    pub objects: BTreeMap<ObjectId, FeatureRecord>,
}

impl FrameFeatureSet {
    pub fn empty(frame_index: u64, camera_id: impl Into<String>, timestamp: Fixed3) -> Self {
        FrameFeatureSet {
            frame_index,
            camera_id: camera_id.into(),
            timestamp,
            objects: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, record: FeatureRecord) {
        self.objects.insert(record.object_id, record);
    }
}

/// Features of `track` as of `frame_timestamp`: instantaneous (or windowed) speed, the
/// running heading-change count and dwell time.
pub fn extract_features(track: &Track, frame_timestamp: Fixed3, speed_window: usize) -> FeatureRecord {
    FeatureRecord {
        object_id: track.id(),
        speed: Fixed3::from_f64(track.speed(speed_window)),
        direction_changes: track.direction_changes(),
        dwell: frame_timestamp.saturating_sub(track.id()),
        bbox: QuantizedBox::from(track.last_bbox()),
    }
}
