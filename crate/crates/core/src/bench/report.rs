use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{adversarial_image, feature_file, Condition, ResizePolicy, RunManifest};
use crate::data::{load_image, parse_detections, resize_bilinear, ImageBuffer};
use crate::detection::{evaluate_all, relative_drop, MetricBundle};
use crate::error::{Error, Result};
use crate::perceptual::{
    aggregate, lp_norms, lpips_distance, psnr, ssim, DistanceStats, LayerWeights, PerceptualFeatureSet,
};

/// Perceptual metrics reported per condition, in table order.
pub const DISTANCE_METRICS: [&str; 6] = ["l1", "l2", "linf", "psnr", "ssim", "lpips"];

/// Relative drops against the benign run of the same model, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drops {
    pub map: f64,
    pub ap_loc: f64,
    pub csr: f64,
}

impl Drops {
    pub fn between(benign: &MetricBundle, attacked: &MetricBundle) -> Result<Self> {
        Ok(Self {
            map: relative_drop(benign.map, attacked.map)?,
            ap_loc: relative_drop(benign.ap_loc, attacked.ap_loc)?,
            csr: relative_drop(benign.csr, attacked.csr)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub attack: String,
    pub model: String,
    pub benign: MetricBundle,
    pub attacked: MetricBundle,
    pub drops: Drops,
    /// Keyed by the names in [`DISTANCE_METRICS`]; empty for metrics-only conditions.
    pub distances: BTreeMap<String, DistanceStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenignRow {
    pub model: String,
    pub metrics: MetricBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub model: String,
    pub attack: String,
    pub metrics: MetricBundle,
    pub drops: Drops,
    pub distances: BTreeMap<String, DistanceStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub attack: String,
    pub model: String,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub iou_threshold: f64,
    /// Sorted by model tag.
    pub benign: Vec<BenignRow>,
    /// Sorted by (model, attack).
    pub rows: Vec<AttackRow>,
    /// LPIPS channel weights: `uniform`, or the PFW file name. Absent when no condition has features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpips_weights: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<Failure>,
}

impl BenchReport {
    /// Attack tags present in the report, sorted.
    pub fn attacks(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = self.rows.iter().map(|r| r.attack.as_str()).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    pub fn row(&self, model: &str, attack: &str) -> Option<&AttackRow> {
        self.rows.iter().find(|r| r.model == model && r.attack == attack)
    }

    /// Recomputes every drop from the stored absolute values.
    pub fn check_consistency(&self, tolerance: f64) -> Result<()> {
        for row in &self.rows {
            let benign = self
                .benign
                .iter()
                .find(|b| b.model == row.model)
                .ok_or_else(|| Error::Integrity(format!("no benign row for model {}", row.model)))?;
            let fresh = Drops::between(&benign.metrics, &row.metrics)?;
            for (name, stored, recomputed) in [
                ("mAP", row.drops.map, fresh.map),
                ("AP_loc", row.drops.ap_loc, fresh.ap_loc),
                ("CSR", row.drops.csr, fresh.csr),
            ] {
                if (stored - recomputed).abs() > tolerance {
                    return Err(Error::Integrity(format!(
                        "{}/{}: stored {name} drop {stored} but recomputed {recomputed}",
                        row.attack, row.model
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-image perceptual values of one clean/adversarial pair.
pub(crate) fn image_distances(clean: &ImageBuffer, adv: &ImageBuffer, policy: ResizePolicy) -> Result<[f64; 5]> {
    let (cw, ch) = clean.dims();
    let adv_at_clean = if adv.dims() == clean.dims() {
        adv.clone()
    } else {
        resize_bilinear(adv, cw, ch)?
    };
    let resized = lp_norms(clean, &adv_at_clean)?;
    let linf = match policy {
        ResizePolicy::AllResized => resized.linf,
        ResizePolicy::NativeLinf if adv.dims() == clean.dims() => resized.linf,
        ResizePolicy::NativeLinf => {
            let (aw, ah) = adv.dims();
            lp_norms(&resize_bilinear(clean, aw, ah)?, adv)?.linf
        }
    };
    Ok([
        resized.l1,
        resized.l2,
        linf,
        psnr(clean, &adv_at_clean)?,
        ssim(clean, &adv_at_clean)?,
    ])
}

fn condition_distances(
    manifest: &RunManifest,
    condition: &Condition,
    weights: Option<&LayerWeights>,
) -> Result<BTreeMap<String, DistanceStats>> {
    let mut out = BTreeMap::new();
    let images = manifest.dataset.images();
    if let Some(adv_root) = &condition.adversarial_root {
        let clean_root = manifest
            .benign_image_root
            .as_ref()
            .ok_or_else(|| Error::Validation("adversarial images given without benign_image_root".into()))?;
        let mut columns: [Vec<f64>; 5] = Default::default();
        for rec in images {
            let clean = load_image(&clean_root.join(&rec.clean_path))?;
            let adv_path = adversarial_image(adv_root, rec)
                .ok_or_else(|| Error::Resolution(vec![adv_root.join(&rec.clean_path)]))?;
            let adv = load_image(&adv_path)?;
            let values = image_distances(&clean, &adv, manifest.options.resize_policy)?;
            for (col, v) in columns.iter_mut().zip(values) {
                col.push(v);
            }
        }
        if !images.is_empty() {
            for (name, col) in DISTANCE_METRICS.iter().zip(&columns) {
                out.insert((*name).to_string(), aggregate(col)?);
            }
        }
    }
    if let Some(roots) = &condition.features {
        let mut values = Vec::with_capacity(images.len());
        for rec in images {
            let fa = PerceptualFeatureSet::read(&feature_file(&roots.clean, rec))?;
            let fb = PerceptualFeatureSet::read(&feature_file(&roots.adversarial, rec))?;
            let w = match weights {
                Some(w) => w.clone(),
                None => LayerWeights::uniform(&fa),
            };
            values.push(lpips_distance(&fa, &fb, &w)?);
        }
        if !values.is_empty() {
            out.insert("lpips".to_string(), aggregate(&values)?);
        }
    }
    Ok(out)
}

fn evaluate_inner(manifest: &RunManifest, condition: &Condition, weights: Option<&LayerWeights>) -> Result<ConditionResult> {
    let opts = manifest.eval_options();
    let benign_dets = parse_detections(&condition.benign_detections, &manifest.dataset)?;
    let attacked_dets = parse_detections(&condition.detections, &manifest.dataset)?;
    let benign = evaluate_all(&manifest.dataset, &benign_dets, &opts)?;
    let attacked = evaluate_all(&manifest.dataset, &attacked_dets, &opts)?;
    let drops = Drops::between(&benign, &attacked)?;
    Ok(ConditionResult {
        attack: condition.attack.clone(),
        model: condition.model.clone(),
        benign,
        attacked,
        drops,
        distances: condition_distances(manifest, condition, weights)?,
    })
}

fn load_weights(manifest: &RunManifest) -> Result<Option<LayerWeights>> {
    manifest.lpips_weights.as_deref().map(LayerWeights::read).transpose()
}

/// Detection metrics, drops and perceptual statistics of one condition.
pub fn evaluate_condition(manifest: &RunManifest, condition: &Condition) -> Result<ConditionResult> {
    let weights = load_weights(manifest)?;
    evaluate_inner(manifest, condition, weights.as_ref()).map_err(|e| e.in_condition(condition.tag()))
}

/// Assembles the report; rows are ordered by (model, attack) regardless of input order.
pub fn build_report(
    iou_threshold: f64,
    results: Vec<ConditionResult>,
    failures: Vec<Failure>,
) -> Result<BenchReport> {
    if results.is_empty() && failures.is_empty() {
        return Err(Error::Argument("no evaluated conditions".into()));
    }
    let mut benign: BTreeMap<String, MetricBundle> = BTreeMap::new();
    let mut rows: BTreeMap<(String, String), AttackRow> = BTreeMap::new();
    for r in results {
        let key = (r.model.clone(), r.attack.clone());
        if rows.contains_key(&key) {
            return Err(Error::Validation(format!("duplicate condition {}/{}", r.attack, r.model)));
        }
        match benign.get(&r.model) {
            Some(b) if *b != r.benign => {
                return Err(Error::Integrity(format!(
                    "model {} has inconsistent benign metrics across conditions",
                    r.model
                )))
            }
            Some(_) => {}
            None => {
                benign.insert(r.model.clone(), r.benign);
            }
        }
        rows.insert(
            key,
            AttackRow {
                model: r.model,
                attack: r.attack,
                metrics: r.attacked,
                drops: r.drops,
                distances: r.distances,
            },
        );
    }
    let mut failures = failures;
    failures.sort_by(|a, b| (&a.model, &a.attack).cmp(&(&b.model, &b.attack)));
    Ok(BenchReport {
        iou_threshold,
        benign: benign
            .into_iter()
            .map(|(model, metrics)| BenignRow { model, metrics })
            .collect(),
        rows: rows.into_values().collect(),
        lpips_weights: None,
        failures,
    })
}

/// Evaluates every condition on a pool of `workers` threads. Failed conditions
/// land in `failures`; output is identical for any worker count.
pub fn run(manifest: &RunManifest, workers: usize) -> Result<BenchReport> {
    let weights = load_weights(manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))?;
    let outcomes: Vec<(&Condition, Result<ConditionResult>)> = pool.install(|| {
        manifest
            .conditions
            .par_iter()
            .map(|c| (c, evaluate_inner(manifest, c, weights.as_ref())))
            .collect()
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (c, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                log::error!("condition {} failed: {e}", c.tag());
                failures.push(Failure {
                    attack: c.attack.clone(),
                    model: c.model.clone(),
                    category: e.category().as_str().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let mut report = build_report(manifest.iou_threshold, results, failures)?;
    if manifest.conditions.iter().any(|c| c.features.is_some()) {
        let name = manifest.lpips_weights.as_ref().map_or_else(
            || "uniform".to_string(),
            |p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()),
        );
        report.lpips_weights = Some(name);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(map: f64, ap_loc: f64, csr: f64) -> MetricBundle {
        MetricBundle {
            map,
            ap_loc,
            csr,
            per_class_ap: BTreeMap::new(),
        }
    }

    fn result(model: &str, attack: &str, attacked: f64) -> ConditionResult {
        let benign = bundle(75.8, 80.0, 70.0);
        let attacked = bundle(attacked, attacked, attacked);
        ConditionResult {
            attack: attack.into(),
            model: model.into(),
            drops: Drops::between(&benign, &attacked).unwrap(),
            benign,
            attacked,
            distances: BTreeMap::new(),
        }
    }

    #[test]
    fn rows_sorted_and_benign_shared() {
        let r = build_report(
            0.5,
            vec![result("yolo", "osfd", 6.6), result("frc", "caa", 3.4), result("yolo", "caa", 10.0)],
            vec![],
        )
        .unwrap();
        assert_eq!(r.benign.len(), 2);
        let order: Vec<_> = r.rows.iter().map(|x| (x.model.as_str(), x.attack.as_str())).collect();
        assert_eq!(order, [("frc", "caa"), ("yolo", "caa"), ("yolo", "osfd")]);
        assert!((r.row("yolo", "osfd").unwrap().drops.map - 91.29).abs() < 0.05);
        r.check_consistency(1e-9).unwrap();
    }

    #[test]
    fn duplicate_pair_rejected() {
        let err = build_report(0.5, vec![result("a", "x", 1.0), result("a", "x", 2.0)], vec![]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn tampered_drop_detected() {
        let mut r = build_report(0.5, vec![result("a", "x", 1.0)], vec![]).unwrap();
        r.rows[0].drops.csr += 1e-6;
        assert!(r.check_consistency(1e-9).is_err());
    }

    #[test]
    fn self_comparison_distances() {
        let img = ImageBuffer::filled(16, 16, [10, 200, 30]).unwrap();
        let d = image_distances(&img, &img, ResizePolicy::NativeLinf).unwrap();
        assert_eq!(&d[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(d[3], f64::INFINITY);
        assert_eq!(d[4], 1.0);
    }

    #[test]
    fn native_linf_uses_adversarial_size() {
        let clean = ImageBuffer::filled(16, 16, [100; 3]).unwrap();
        let adv = ImageBuffer::filled(20, 20, [110; 3]).unwrap();
        for policy in [ResizePolicy::NativeLinf, ResizePolicy::AllResized] {
            let d = image_distances(&clean, &adv, policy).unwrap();
            assert_eq!(d[2], 10.0);
        }
    }
}
