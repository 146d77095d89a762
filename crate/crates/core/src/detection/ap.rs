use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the precision-recall curve is summarized into a single number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Exact area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// VOC2007 style: mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Precision-recall points, one per ranked detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    points: Vec<(f64, f64)>,
    n_gt: usize,
}

impl PrCurve {
    pub fn new(points: Vec<(f64, f64)>, n_gt: usize) -> Result<Self> {
        let mut prev = 0.0;
        for &(r, p) in &points {
            if !(0.0..=1.0).contains(&r) || !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "curve point ({r}, {p}) outside the unit square"
                )));
            }
            if r < prev {
                return Err(Error::Validation("recall must be non-decreasing".into()));
            }
            prev = r;
        }
        Ok(Self { points, n_gt })
    }

    /// Builds the curve from detections already sorted by descending score;
    /// `true` marks a true positive.
    pub fn from_ranked(hits: impl IntoIterator<Item = bool>, n_gt: usize) -> Self {
        let mut tp = 0usize;
        let mut points = Vec::new();
        for (rank, hit) in hits.into_iter().enumerate() {
            tp += usize::from(hit);
            let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
            points.push((recall, tp as f64 / (rank + 1) as f64));
        }
        Self { points, n_gt }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn n_gt(&self) -> usize {
        self.n_gt
    }
}

/// All-point interpolated average precision, as a ratio in `[0, 1]`.
pub fn average_precision(curve: &PrCurve) -> Result<f64> {
    average_precision_with(curve, Interpolation::AllPoint)
}

pub fn average_precision_with(curve: &PrCurve, interpolation: Interpolation) -> Result<f64> {
    if curve.n_gt == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one ground truth".into(),
        ));
    }
    let pts = &curve.points;
    let mut envelope = vec![0.0; pts.len()];
    let mut running = 0.0f64;
    for i in (0..pts.len()).rev() {
        running = running.max(pts[i].1);
        envelope[i] = running;
    }

    Ok(match interpolation {
        Interpolation::AllPoint => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (i, &(r, _)) in pts.iter().enumerate() {
                area += (r - prev_recall) * envelope[i];
                prev_recall = r;
            }
            area
        }
        Interpolation::ElevenPoint => {
            let mut sum = 0.0;
            for t in 0..=10 {
                let level = f64::from(t) / 10.0;
                // envelope is non-increasing, so the first qualifying point holds the max
                sum += pts
                    .iter()
                    .position(|&(r, _)| r >= level)
                    .map_or(0.0, |i| envelope[i]);
            }
            sum / 11.0
        }
    })
}
