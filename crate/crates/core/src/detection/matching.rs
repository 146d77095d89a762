use serde::{Deserialize, Serialize};

use crate::data::{BoundingBox, Detection, GroundTruthObject};

/// Intersection over union of two boxes; `0.0` when they are disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of matching the detections of one image to its ground truths.
///
/// Indices refer to the slices passed to [`greedy_match`]. Difficult ground
/// truths never appear in `unmatched_gts`; detections that only hit a
/// difficult ground truth are listed in `ignored_detections` instead of
/// `unmatched_detections`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// In processing order (descending score).
    pub assignments: Vec<Assignment>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
    pub ignored_detections: Vec<usize>,
}

impl MatchResult {
    pub fn assigned_gt(&self, detection: usize) -> Option<usize> {
        self.assignments
            .iter()
            .find(|a| a.detection == detection)
            .map(|a| a.ground_truth)
    }
}

/// Detection indices ordered by descending score, ties by ascending index.
pub(crate) fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort keeps input order among equal scores.
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// One-to-one greedy matching.
///
/// Detections are visited by descending score. Each takes the still-free,
/// non-difficult ground truth of highest IoU above `thr` (lowest index on IoU
/// ties), restricted to its own class when `class_aware`. A detection left
/// without a partner that overlaps a difficult ground truth above `thr` is
/// ignored rather than counted as a false positive.
pub fn greedy_match(
    gts: &[GroundTruthObject],
    dets: &[Detection],
    thr: f64,
    class_aware: bool,
) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    let mut ignored = Vec::new();
    let mut unmatched = Vec::new();

    for d in score_order(dets) {
        let det = &dets[d];
        let mut best: Option<(usize, f64)> = None;
        let mut hits_difficult = false;
        for (g, gt) in gts.iter().enumerate() {
            if class_aware && gt.class_id != det.class_id {
                continue;
            }
            let overlap = iou(&det.bbox, &gt.bbox);
            if overlap <= thr {
                continue;
            }
            if gt.difficult {
                hits_difficult = true;
                continue;
            }
            if taken[g] {
                continue;
            }
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        match best {
            Some((g, overlap)) => {
                taken[g] = true;
                result.assignments.push(Assignment {
                    detection: d,
                    ground_truth: g,
                    iou: overlap,
                });
            }
            None if hits_difficult => ignored.push(d),
            None => unmatched.push(d),
        }
    }

    ignored.sort_unstable();
    unmatched.sort_unstable();
    result.ignored_detections = ignored;
    result.unmatched_detections = unmatched;
    result.unmatched_gts = gts
        .iter()
        .enumerate()
        .filter(|(g, gt)| !gt.difficult && !taken[*g])
        .map(|(g, _)| g)
        .collect();
    result
}
