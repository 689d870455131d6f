use super::features::ObjectId;
use super::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Lost,
}

/// Absolute heading difference in degrees, folded into `[0, 180]`.
pub fn heading_delta_deg(a_rad: f64, b_rad: f64) -> f64 {
    let mut d = (b_rad - a_rad).to_degrees().abs() % 360.0;
    if d > 180.0 {
        d = 360.0 - d;
    }
    d
}

/// A tracked object. The id is the object's first detection time and never changes.
#[derive(Debug, Clone)]
pub struct Track {
    id: ObjectId,
    history: Vec<(u64, BoundingBox)>,
    state: TrackState,
    // Running motion summary, updated as steps are appended.
    last_heading: Option<f64>,
    direction_changes: u32,
}

impl Track {
    pub fn new(id: ObjectId, frame_index: u64, bbox: BoundingBox) -> Self {
        Track {
            id,
            history: vec![(frame_index, bbox)],
            state: TrackState::Active,
            last_heading: None,
            direction_changes: 0,
        }
    }

    pub fn id(&self) -> ObjectId {
        self.id
    }

    pub fn state(&self) -> TrackState {
        self.state
    }

    pub fn history(&self) -> &[(u64, BoundingBox)] {
        &self.history
    }

    pub fn last_bbox(&self) -> &BoundingBox {
        &self.history.last().expect("track history is never empty").1
    }

    pub fn last_frame(&self) -> u64 {
        self.history.last().expect("track history is never empty").0
    }

    pub fn centroids(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.history.iter().map(|(_, b)| b.centroid())
    }

    pub fn direction_changes(&self) -> u32 {
        self.direction_changes
    }

    /// Appends an observation. Steps slower than `motion_epsilon` px/frame carry no heading
    /// and are skipped when counting heading changes above `heading_threshold_deg`.
    ///
    /// Panics if `frame_index` does not advance; the pipeline rejects such frames first.
    pub fn push(
        &mut self,
        frame_index: u64,
        bbox: BoundingBox,
        heading_threshold_deg: f64,
        motion_epsilon: f64,
    ) {
        assert!(self.state == TrackState::Active, "cannot extend a lost track");
        assert!(frame_index > self.last_frame(), "frame index must increase");
        let (px, py) = self.last_bbox().centroid();
        let (cx, cy) = bbox.centroid();
        let (dx, dy) = (cx - px, cy - py);
        let steps = (frame_index - self.last_frame()) as f64;
        if (dx * dx + dy * dy).sqrt() / steps > motion_epsilon {
            let heading = dy.atan2(dx);
            if let Some(prev) = self.last_heading {
                if heading_delta_deg(prev, heading) > heading_threshold_deg {
                    self.direction_changes += 1;
                }
            }
            self.last_heading = Some(heading);
        }
        self.history.push((frame_index, bbox));
    }

    pub(crate) fn mark_lost(&mut self) {
        self.state = TrackState::Lost;
    }

    /// Mean per-frame centroid displacement over the last `window` steps (0 with one entry).
    pub fn speed(&self, window: usize) -> f64 {
        let n = self.history.len();
        if n < 2 || window == 0 {
            return 0.0;
        }
        let steps = window.min(n - 1);
        let tail = &self.history[n - 1 - steps..];
        let dist: f64 = tail
            .windows(2)
            .map(|w| {
                let (ax, ay) = w[0].1.centroid();
                let (bx, by) = w[1].1.centroid();
                ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt()
            })
            .sum();
        let frames = (tail[steps].0 - tail[0].0) as f64;
        dist / frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Fixed3;

    #[test]
    fn heading_delta_folds() {
        assert!((heading_delta_deg(0.0, std::f64::consts::PI) - 180.0).abs() < 1e-9);
        assert!((heading_delta_deg(170f64.to_radians(), (-170f64).to_radians()) - 20.0).abs() < 1e-9);
    }

    #[test]
    #[should_panic(expected = "frame index must increase")]
    fn push_rejects_stale_frame() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let mut t = Track::new(Fixed3::ZERO, 3, b);
        t.push(3, b, 45.0, 0.5);
    }
}
