//! Detection-impact metrics: mAP, class-fused AP (AP_loc) and the
//! classification success ratio (CSR), plus relative-drop arithmetic.
//!
//! All three metrics share one greedy one-to-one matcher. mAP matches per
//! class; AP_loc rewrites every label to a single class before running the
//! same pipeline; CSR matches class-agnostically and then counts the
//! matches whose labels agree.

mod ap;
mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use self::ap::{average_precision, average_precision_with, Interpolation, PrCurve};
pub use self::matching::{greedy_match, iou, Assignment, MatchResult};
use crate::data::{Dataset, DetectionSet};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    /// When false, difficult/crowd flags are dropped and those objects count as positives.
    pub honor_difficult: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            interpolation: Interpolation::AllPoint,
            honor_difficult: true,
        }
    }
}

impl EvalOptions {
    pub fn with_threshold(iou_threshold: f64) -> Self {
        Self {
            iou_threshold,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Validation(format!(
                "IoU threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// Detection metrics of one (attack, model) condition, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub map: f64,
    pub ap_loc: f64,
    pub csr: f64,
    pub per_class_ap: BTreeMap<usize, f64>,
}

fn prepare<'a>(
    dataset: &'a Dataset,
    dets: &DetectionSet,
    opts: &EvalOptions,
) -> Result<std::borrow::Cow<'a, Dataset>> {
    opts.check()?;
    dets.check_against(dataset)?;
    let ds = if opts.honor_difficult {
        std::borrow::Cow::Borrowed(dataset)
    } else {
        std::borrow::Cow::Owned(dataset.without_difficult())
    };
    if ds.positive_count() == 0 {
        return Err(Error::UndefinedMetric(
            "dataset has no non-difficult ground truth".into(),
        ));
    }
    Ok(ds)
}

/// Per-class AP (ratio) for every class that has at least one positive.
fn class_aps(dataset: &Dataset, dets: &DetectionSet, opts: &EvalOptions) -> Result<BTreeMap<usize, f64>> {
    let classes = dataset.class_count();
    let mut positives = vec![0usize; classes];
    // (score, image rank, detection index, true positive)
    let mut ranked: Vec<Vec<(f64, usize, usize, bool)>> = vec![Vec::new(); classes];

    for (rank, img) in dataset.images().iter().enumerate() {
        for obj in img.objects.iter().filter(|o| !o.difficult) {
            positives[obj.class_id] += 1;
        }
        let image_dets = dets.for_image(&img.image_id);
        let m = greedy_match(&img.objects, image_dets, opts.iou_threshold, true);
        let mut status = vec![Some(false); image_dets.len()];
        for a in &m.assignments {
            status[a.detection] = Some(true);
        }
        for &d in &m.ignored_detections {
            status[d] = None;
        }
        for (d, det) in image_dets.iter().enumerate() {
            if let Some(hit) = status[d] {
                ranked[det.class_id].push((det.score, rank, d, hit));
            }
        }
    }

    let mut aps = BTreeMap::new();
    for (class_id, mut list) in ranked.into_iter().enumerate() {
        if positives[class_id] == 0 {
            continue;
        }
        list.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let curve = PrCurve::from_ranked(list.iter().map(|e| e.3), positives[class_id]);
        aps.insert(class_id, average_precision_with(&curve, opts.interpolation)?);
    }
    Ok(aps)
}

fn mean_percent(aps: &BTreeMap<usize, f64>) -> f64 {
    aps.values().sum::<f64>() / aps.len() as f64 * 100.0
}

/// Mean over classes with at least one positive of the per-class AP, in percent.
pub fn evaluate_map(dataset: &Dataset, dets: &DetectionSet, thr: f64) -> Result<f64> {
    evaluate_map_with(dataset, dets, &EvalOptions::with_threshold(thr))
}

pub fn evaluate_map_with(dataset: &Dataset, dets: &DetectionSet, opts: &EvalOptions) -> Result<f64> {
    let ds = prepare(dataset, dets, opts)?;
    Ok(mean_percent(&class_aps(&ds, dets, opts)?))
}

/// AP with every label fused into one class, in percent.
pub fn evaluate_ap_loc(dataset: &Dataset, dets: &DetectionSet, thr: f64) -> Result<f64> {
    evaluate_ap_loc_with(dataset, dets, &EvalOptions::with_threshold(thr))
}

pub fn evaluate_ap_loc_with(dataset: &Dataset, dets: &DetectionSet, opts: &EvalOptions) -> Result<f64> {
    let ds = prepare(dataset, dets, opts)?;
    Ok(mean_percent(&class_aps(&ds.fused(), &dets.fused(), opts)?))
}

/// Share of positives matched (class-agnostically) by a detection with the right label, in percent.
pub fn evaluate_csr(dataset: &Dataset, dets: &DetectionSet, thr: f64) -> Result<f64> {
    evaluate_csr_with(dataset, dets, &EvalOptions::with_threshold(thr))
}

pub fn evaluate_csr_with(dataset: &Dataset, dets: &DetectionSet, opts: &EvalOptions) -> Result<f64> {
    let ds = prepare(dataset, dets, opts)?;
    let mut correct = 0usize;
    for img in ds.images() {
        let image_dets = dets.for_image(&img.image_id);
        let m = greedy_match(&img.objects, image_dets, opts.iou_threshold, false);
        correct += m
            .assignments
            .iter()
            .filter(|a| image_dets[a.detection].class_id == img.objects[a.ground_truth].class_id)
            .count();
    }
    Ok(correct as f64 / ds.positive_count() as f64 * 100.0)
}

/// mAP, AP_loc, CSR and per-class AP in one pass over the inputs.
pub fn evaluate_all(dataset: &Dataset, dets: &DetectionSet, opts: &EvalOptions) -> Result<MetricBundle> {
    let ds = prepare(dataset, dets, opts)?;
    let aps = class_aps(&ds, dets, opts)?;
    Ok(MetricBundle {
        map: mean_percent(&aps),
        ap_loc: evaluate_ap_loc_with(&ds, dets, opts)?,
        csr: evaluate_csr_with(&ds, dets, opts)?,
        per_class_ap: aps.into_iter().map(|(c, ap)| (c, ap * 100.0)).collect(),
    })
}

/// `(benign - attacked) / benign * 100`. Negative when the attack helps.
pub fn relative_drop(benign: f64, attacked: f64) -> Result<f64> {
    if !(benign.is_finite() && benign > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "relative drop needs a positive benign value, got {benign}"
        )));
    }
    Ok((benign - attacked) / benign * 100.0)
}
