//! Mixed-attack training sets: every source image is assigned exactly one
//! variant (an attack's output or the benign original) so that no two
//! versions of the same image end up in one training set.
//!
//! Assignment is a seeded Fisher–Yates shuffle (ChaCha8) followed by a
//! contiguous split whose sizes come from largest-remainder rounding.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::write_file;

pub const PROPORTION_TOLERANCE: f64 = 1e-9;
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    /// Attack tag, or `benign`.
    pub tag: String,
    pub root: PathBuf,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    #[serde(default)]
    pub source_ids: Vec<String>,
    /// Directory whose image stems become the source ids when `source_ids` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_root: Option<PathBuf>,
    pub components: Vec<MixtureComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Validation("mixture has no components".into()));
        }
        let mut tags = BTreeSet::new();
        for c in &self.components {
            if c.tag.is_empty() || !tags.insert(c.tag.as_str()) {
                return Err(Error::Validation(format!("component tag {:?} is empty or repeated", c.tag)));
            }
            if !(0.0..=1.0).contains(&c.proportion) {
                return Err(Error::Validation(format!(
                    "component {} has proportion {} outside [0, 1]",
                    c.tag, c.proportion
                )));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.proportion).sum();
        if (total - 1.0).abs() > PROPORTION_TOLERANCE {
            return Err(Error::Validation(format!("proportions sum to {total}, not 1")));
        }
        let mut ids = BTreeSet::new();
        if let Some(dup) = self.source_ids.iter().find(|id| !ids.insert(id.as_str())) {
            return Err(Error::Validation(format!("source id {dup} listed twice")));
        }
        Ok(())
    }
}

fn image_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    stems.dedup();
    Ok(stems)
}

/// Reads a mixture file, resolving roots against its directory and expanding `source_root`.
pub fn load_spec(path: &Path) -> Result<MixtureSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spec: MixtureSpec =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for c in &mut spec.components {
        c.root = base.join(&c.root);
    }
    if let Some(root) = &mut spec.source_root {
        *root = base.join(&*root);
        if spec.source_ids.is_empty() {
            spec.source_ids = image_stems(root)?;
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Integer counts summing to `n`: floors of `p_k n`, with the leftover units
/// going to the largest fractional parts (earlier components win ties).
pub fn largest_remainder(proportions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// In-place Fisher–Yates driven by ChaCha8 seeded with `seed`.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// The variant of `image_id` under `root`, trying each supported extension.
pub fn find_variant(root: &Path, image_id: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| root.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub component: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub seed: u64,
    pub spec: MixtureSpec,
    /// Per component, in spec order.
    pub counts: Vec<(String, usize)>,
    /// In source-id order.
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct Header<'a> {
    seed: u64,
    spec: &'a MixtureSpec,
    counts: BTreeMap<&'a str, usize>,
}

impl MixtureManifest {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Argument(format!("csv: {e}"));
        w.write_record(["image_id", "component", "path"]).map_err(err)?;
        for e in &self.entries {
            w.write_record([e.image_id.as_str(), e.component.as_str(), &e.path.to_string_lossy()])
                .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Argument(format!("csv: {e}")))
    }

    pub fn header_json(&self) -> Result<String> {
        let header = Header {
            seed: self.seed,
            spec: &self.spec,
            counts: self.counts.iter().map(|(t, c)| (t.as_str(), *c)).collect(),
        };
        let mut s = serde_json::to_string_pretty(&header)
            .map_err(|e| Error::Argument(format!("cannot serialize manifest header: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `mixture.csv` and `mixture.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("mixture.csv"), self.to_csv()?)?;
        write_file(&dir.join("mixture.json"), self.header_json()?)
    }

    /// Places every assigned file under `dir/<component>/`, hard-linking when possible.
    pub fn materialize(&self, dir: &Path) -> Result<()> {
        for e in &self.entries {
            let name = e
                .path
                .file_name()
                .ok_or_else(|| Error::Argument(format!("{} has no file name", e.path.display())))?;
            let target_dir = dir.join(&e.component);
            std::fs::create_dir_all(&target_dir).map_err(|err| Error::io(&target_dir, err))?;
            let target = target_dir.join(name);
            if target.exists() {
                std::fs::remove_file(&target).map_err(|err| Error::io(&target, err))?;
            }
            if std::fs::hard_link(&e.path, &target).is_err() {
                std::fs::copy(&e.path, &target).map_err(|err| Error::io(&e.path, err))?;
            }
        }
        Ok(())
    }
}

pub fn compose(spec: &MixtureSpec, seed: u64) -> Result<MixtureManifest> {
    spec.validate()?;
    let mut missing = Vec::new();
    let mut variants: Vec<Vec<Option<PathBuf>>> = Vec::with_capacity(spec.components.len());
    for c in &spec.components {
        let found: Vec<Option<PathBuf>> = spec.source_ids.iter().map(|id| find_variant(&c.root, id)).collect();
        for (id, f) in spec.source_ids.iter().zip(&found) {
            if f.is_none() {
                missing.push(c.root.join(format!("{id}.png")));
            }
        }
        variants.push(found);
    }
    if !missing.is_empty() {
        return Err(Error::Resolution(missing));
    }

    let n = spec.source_ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    seeded_shuffle(&mut order, seed);
    let proportions: Vec<f64> = spec.components.iter().map(|c| c.proportion).collect();
    let counts = largest_remainder(&proportions, n);

    let mut component_of = vec![0usize; n];
    let mut start = 0;
    for (k, &count) in counts.iter().enumerate() {
        for &idx in &order[start..start + count] {
            component_of[idx] = k;
        }
        start += count;
    }

    let entries = spec
        .source_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let k = component_of[i];
            ManifestEntry {
                image_id: id.clone(),
                component: spec.components[k].tag.clone(),
                path: variants[k][i].clone().expect("variant checked above"),
            }
        })
        .collect();
    Ok(MixtureManifest {
        seed,
        spec: MixtureSpec {
            seed: Some(seed),
            ..spec.clone()
        },
        counts: spec.components.iter().map(|c| c.tag.clone()).zip(counts).collect(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Duplicate { image_id: String, times: usize },
    Unassigned { image_id: String },
    UnknownImage { image_id: String },
    UnknownComponent { image_id: String, component: String },
    CountOutOfTolerance { component: String, count: usize, target: f64 },
    MissingFile { image_id: String, path: PathBuf },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Duplicate { image_id, times } => write!(f, "{image_id} assigned {times} times"),
            Violation::Unassigned { image_id } => write!(f, "{image_id} is not assigned"),
            Violation::UnknownImage { image_id } => write!(f, "{image_id} is not a source image"),
            Violation::UnknownComponent { image_id, component } => {
                write!(f, "{image_id} assigned to unknown component {component}")
            }
            Violation::CountOutOfTolerance {
                component,
                count,
                target,
            } => write!(f, "{component} has {count} images, target {target}"),
            Violation::MissingFile { image_id, path } => {
                write!(f, "{image_id}: {} does not exist", path.display())
            }
        }
    }
}

/// Checks exactly-once assignment, per-component counts strictly within one
/// image of `p_k n`, and file existence.
pub fn verify(manifest: &MixtureManifest, spec: &MixtureSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut times: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &manifest.entries {
        *times.entry(e.image_id.as_str()).or_default() += 1;
    }
    let known: BTreeSet<&str> = spec.source_ids.iter().map(String::as_str).collect();
    for (id, &t) in &times {
        if !known.contains(id) {
            out.push(Violation::UnknownImage {
                image_id: id.to_string(),
            });
        } else if t > 1 {
            out.push(Violation::Duplicate {
                image_id: id.to_string(),
                times: t,
            });
        }
    }
    for id in &spec.source_ids {
        if !times.contains_key(id.as_str()) {
            out.push(Violation::Unassigned { image_id: id.clone() });
        }
    }

    let tags: BTreeSet<&str> = spec.components.iter().map(|c| c.tag.as_str()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &manifest.entries {
        if tags.contains(e.component.as_str()) {
            *counts.entry(e.component.as_str()).or_default() += 1;
        } else {
            out.push(Violation::UnknownComponent {
                image_id: e.image_id.clone(),
                component: e.component.clone(),
            });
        }
    }
    let n = spec.source_ids.len() as f64;
    for c in &spec.components {
        let count = counts.get(c.tag.as_str()).copied().unwrap_or(0);
        let target = c.proportion * n;
        if (count as f64 - target).abs() >= 1.0 {
            out.push(Violation::CountOutOfTolerance {
                component: c.tag.clone(),
                count,
                target,
            });
        }
    }

    for e in &manifest.entries {
        if !e.path.is_file() {
            out.push(Violation::MissingFile {
                image_id: e.image_id.clone(),
                path: e.path.clone(),
            });
        }
    }
    out
}
