use std::cmp::Ordering;

use super::geometry::iou;
use super::track::Track;
use super::Detection;

/// Result of matching active tracks against one frame's detections.
///
/// Indices refer to the slices passed to [`associate`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(track index, detection index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

/// Greedy matching in descending IoU order. Pairs with IoU below `iou_threshold` (or with
/// no overlap at all) are never matched; ties go to the lower track id, then the lower
/// detection index.
pub fn associate(tracks: &[Track], detections: &[Detection], iou_threshold: f64) -> Assignment {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, track) in tracks.iter().enumerate() {
        for (di, det) in detections.iter().enumerate() {
            let score = iou(track.last_bbox(), &det.bbox);
            if score > 0.0 && score >= iou_threshold {
                candidates.push((score, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| tracks[a.1].id().cmp(&tracks[b.1].id()))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut matches = Vec::new();
    for (_, ti, di) in candidates {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            matches.push((ti, di));
        }
    }
    Assignment {
        matches,
        unmatched_detections: (0..detections.len()).filter(|&d| !det_used[d]).collect(),
        unmatched_tracks: (0..tracks.len()).filter(|&t| !track_used[t]).collect(),
    }
}
