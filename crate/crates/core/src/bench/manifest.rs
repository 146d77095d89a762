use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{parse_ground_truth, AnnotationFormat, Dataset, ImageRecord};
use crate::detection::{EvalOptions, Interpolation, DEFAULT_IOU_THRESHOLD};
use crate::error::{Error, Result};

/// Which resolution each perceptual metric sees when an attack changed the image size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizePolicy {
    /// L_inf at the adversarial image's own size, everything else at the clean size.
    #[default]
    NativeLinf,
    /// Every metric after resizing the adversarial image to the clean size.
    AllResized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub honor_difficult: bool,
    pub resize_policy: ResizePolicy,
    pub interpolation: Interpolation,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            honor_difficult: true,
            resize_policy: ResizePolicy::default(),
            interpolation: Interpolation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRoots {
    pub clean: PathBuf,
    pub adversarial: PathBuf,
}

/// One (attack, target model) cell of the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub attack: String,
    pub model: String,
    /// COCO results file produced by the model on attacked images.
    pub detections: PathBuf,
    /// COCO results file produced by the model on clean images.
    pub benign_detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversarial_root: Option<PathBuf>,
    /// PFEAT roots holding `<image_id>.pfeat` for LPIPS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureRoots>,
}

impl Condition {
    pub fn tag(&self) -> String {
        format!("{}/{}", self.attack, self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub format: AnnotationFormat,
}

fn default_threshold() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    dataset: DatasetRef,
    #[serde(default)]
    benign_image_root: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    iou_threshold: f64,
    #[serde(default)]
    options: RunOptions,
    #[serde(default)]
    lpips_weights: Option<PathBuf>,
    conditions: Vec<Condition>,
}

/// A validated run description with every path resolved against the manifest's directory.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub dataset_ref: DatasetRef,
    pub dataset: Dataset,
    pub benign_image_root: Option<PathBuf>,
    pub iou_threshold: f64,
    pub options: RunOptions,
    pub lpips_weights: Option<PathBuf>,
    pub conditions: Vec<Condition>,
}

impl RunManifest {
    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            iou_threshold: self.iou_threshold,
            interpolation: self.options.interpolation,
            honor_difficult: self.options.honor_difficult,
        }
    }

    pub fn set_iou_threshold(&mut self, thr: f64) -> Result<()> {
        check_threshold(thr)?;
        self.iou_threshold = thr;
        Ok(())
    }
}

fn check_threshold(thr: f64) -> Result<()> {
    if !(thr > 0.0 && thr < 1.0) {
        return Err(Error::Validation(format!("iou_threshold must lie in (0, 1), got {thr}")));
    }
    Ok(())
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// The adversarial counterpart of `record`: the same relative path, or the
/// same stem with any supported image extension.
pub(crate) fn adversarial_image(root: &Path, record: &ImageRecord) -> Option<PathBuf> {
    let direct = root.join(&record.clean_path);
    if direct.is_file() {
        return Some(direct);
    }
    let stem = record.clean_path.file_stem()?;
    let dir = record.clean_path.parent().map_or_else(|| root.to_path_buf(), |p| root.join(p));
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(stem).with_extension(ext))
        .find(|p| p.is_file())
}

pub(crate) fn feature_file(root: &Path, record: &ImageRecord) -> PathBuf {
    root.join(format!("{}.pfeat", record.image_id))
}

fn require(missing: &mut Vec<PathBuf>, p: &Path) {
    if !p.exists() && !missing.iter().any(|m| m == p) {
        missing.push(p.to_path_buf());
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &Path| base.join(p);

    check_threshold(raw.iou_threshold)?;
    if raw.conditions.is_empty() {
        return Err(Error::Validation("manifest lists no conditions".into()));
    }
    let mut benign_by_model: BTreeMap<&str, &Path> = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for c in &raw.conditions {
        if c.attack.trim().is_empty() || c.model.trim().is_empty() {
            return Err(Error::Validation("condition tags must be non-empty".into()));
        }
        if seen.insert((c.attack.as_str(), c.model.as_str()), ()).is_some() {
            return Err(Error::Validation(format!("condition {} listed twice", c.tag())));
        }
        if let Some(prev) = benign_by_model.insert(&c.model, &c.benign_detections) {
            if prev != c.benign_detections {
                return Err(Error::Validation(format!(
                    "model {} uses two benign detection files: {} and {}",
                    c.model,
                    prev.display(),
                    c.benign_detections.display()
                )));
            }
        }
    }

    let dataset_ref = DatasetRef {
        path: resolve(&raw.dataset.path),
        format: raw.dataset.format,
    };
    let conditions: Vec<Condition> = raw
        .conditions
        .into_iter()
        .map(|c| Condition {
            detections: resolve(&c.detections),
            benign_detections: resolve(&c.benign_detections),
            adversarial_root: c.adversarial_root.as_deref().map(resolve),
            features: c.features.map(|f| FeatureRoots {
                clean: resolve(&f.clean),
                adversarial: resolve(&f.adversarial),
            }),
            ..c
        })
        .collect();
    let benign_image_root = raw.benign_image_root.as_deref().map(resolve);
    let lpips_weights = raw.lpips_weights.as_deref().map(resolve);

    let mut missing = Vec::new();
    require(&mut missing, &dataset_ref.path);
    if let Some(w) = &lpips_weights {
        require(&mut missing, w);
    }
    for c in &conditions {
        require(&mut missing, &c.detections);
        require(&mut missing, &c.benign_detections);
        if let Some(root) = &c.adversarial_root {
            require(&mut missing, root);
        }
        if let Some(f) = &c.features {
            require(&mut missing, &f.clean);
            require(&mut missing, &f.adversarial);
        }
    }
    if missing.contains(&dataset_ref.path) {
        return Err(Error::Resolution(missing));
    }

    let dataset = parse_ground_truth(&dataset_ref.path, dataset_ref.format)?;

    // image-level references can only be checked once the dataset is known
    for c in &conditions {
        if let Some(root) = c.adversarial_root.as_ref().filter(|r| r.exists()) {
            let clean_root = benign_image_root.as_ref().ok_or_else(|| {
                Error::Validation(format!(
                    "condition {} has adversarial images but the manifest has no benign_image_root",
                    c.tag()
                ))
            })?;
            for rec in dataset.images() {
                require(&mut missing, &clean_root.join(&rec.clean_path));
                if adversarial_image(root, rec).is_none() {
                    require(&mut missing, &root.join(&rec.clean_path));
                }
            }
        }
        if let Some(f) = &c.features {
            for root in [&f.clean, &f.adversarial].into_iter().filter(|r| r.exists()) {
                for rec in dataset.images() {
                    require(&mut missing, &feature_file(root, rec));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Resolution(missing));
    }

    Ok(RunManifest {
        dataset_ref,
        dataset,
        benign_image_root,
        iou_threshold: raw.iou_threshold,
        options: raw.options,
        lpips_weights,
        conditions,
    })
}
