//! LPIPS distance over externally extracted features.
//!
//! Feature extraction needs a pretrained network and lives outside this
//! crate. It hands over two little-endian containers:
//!
//! ```text
//! PFEAT: "PFT1" u32 layers { u32 layer_id, u32 C, u32 H, u32 W, f32 x C*H*W (channel-major) }*
//! PFW:   "PFW1" u32 layers { u32 C, f32 x C }*
//! ```
//!
//! The distance is `sum_l 1/(H_l W_l) sum_{h,w} || w_l * (a_l[:,h,w] - b_l[:,h,w]) ||^2`.
//! PFW stores `w_l` itself, so a reference implementation whose linear layer
//! multiplies squared differences by `v_l` corresponds to `w_l = sqrt(v_l)`.

use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"PFT1";
pub const WEIGHT_MAGIC: &[u8; 4] = b"PFW1";
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    pub layer_id: u32,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channel-major: index `(c * H + h) * W + w`.
    pub activations: Vec<f32>,
}

impl FeatureLayer {
    fn at(&self, c: usize, h: usize, w: usize) -> f32 {
        self.activations[(c * self.height + h) * self.width + w]
    }
}

/// Unit-normalized activations of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualFeatureSet {
    pub layers: Vec<FeatureLayer>,
}

/// Non-negative per-channel weights, one vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub layers: Vec<Vec<f32>>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            Error::parse(
                self.what,
                format!("truncated at byte {} (need {n} more)", self.pos),
            )
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::parse(self.what, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::parse(
                self.what,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

impl PerceptualFeatureSet {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader {
            buf: bytes,
            pos: 0,
            what: "PFEAT",
        };
        if r.take(4)? != FEATURE_MAGIC {
            return Err(Error::parse("PFEAT", "bad magic"));
        }
        let count = r.u32()?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let layer_id = r.u32()?;
            let channels = r.u32()? as usize;
            let height = r.u32()? as usize;
            let width = r.u32()? as usize;
            let n = channels
                .checked_mul(height)
                .and_then(|v| v.checked_mul(width))
                .ok_or_else(|| Error::parse("PFEAT", "layer size overflow"))?;
            let activations = r.f32s(n)?;
            layers.push(FeatureLayer {
                layer_id,
                channels,
                height,
                width,
                activations,
            });
        }
        r.finish()?;
        Ok(Self { layers })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = FEATURE_MAGIC.to_vec();
        out.extend((self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            for v in [l.layer_id, l.channels as u32, l.height as u32, l.width as u32] {
                out.extend(v.to_le_bytes());
            }
            for a in &l.activations {
                out.extend(a.to_le_bytes());
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    /// Every spatial channel vector must be unit length or exactly zero.
    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            if l.activations.len() != l.channels * l.height * l.width {
                return Err(Error::Shape(format!("layer {} has inconsistent size", l.layer_id)));
            }
            for h in 0..l.height {
                for w in 0..l.width {
                    let mut sq = 0.0f64;
                    let mut all_zero = true;
                    for c in 0..l.channels {
                        let v = f64::from(l.at(c, h, w));
                        if !v.is_finite() {
                            return Err(Error::Validation(format!(
                                "layer {} has a non-finite activation at ({h}, {w})",
                                l.layer_id
                            )));
                        }
                        all_zero &= v == 0.0;
                        sq += v * v;
                    }
                    if !all_zero && (sq.sqrt() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                        return Err(Error::Validation(format!(
                            "layer {} channel vector at ({h}, {w}) has norm {}",
                            l.layer_id,
                            sq.sqrt()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

impl LayerWeights {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader {
            buf: bytes,
            pos: 0,
            what: "PFW",
        };
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(Error::parse("PFW", "bad magic"));
        }
        let count = r.u32()?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let c = r.u32()? as usize;
            layers.push(r.f32s(c)?);
        }
        r.finish()?;
        let weights = Self { layers };
        weights.validate()?;
        Ok(weights)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = WEIGHT_MAGIC.to_vec();
        out.extend((self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend((l.len() as u32).to_le_bytes());
            for v in l {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.layers.iter().flatten().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("layer weight {v} is not a non-negative number")));
        }
        Ok(())
    }

    /// All-ones weights matching the layer structure of `features`.
    pub fn uniform(features: &PerceptualFeatureSet) -> Self {
        Self {
            layers: features.layers.iter().map(|l| vec![1.0; l.channels]).collect(),
        }
    }
}

pub(crate) fn distance(
    fa: &PerceptualFeatureSet,
    fb: &PerceptualFeatureSet,
    weights: &LayerWeights,
) -> Result<f64> {
    if fa.layers.len() != fb.layers.len() || fa.layers.len() != weights.layers.len() {
        return Err(Error::Shape(format!(
            "layer counts differ: {} / {} / {} weights",
            fa.layers.len(),
            fb.layers.len(),
            weights.layers.len()
        )));
    }
    for ((la, lb), w) in fa.layers.iter().zip(&fb.layers).zip(&weights.layers) {
        let shape_a = (la.layer_id, la.channels, la.height, la.width);
        let shape_b = (lb.layer_id, lb.channels, lb.height, lb.width);
        if shape_a != shape_b || w.len() != la.channels {
            return Err(Error::Shape(format!(
                "layer mismatch: {shape_a:?} vs {shape_b:?} with {} weights",
                w.len()
            )));
        }
    }
    fa.validate()?;
    fb.validate()?;
    weights.validate()?;

    let mut total = 0.0;
    for ((la, lb), w) in fa.layers.iter().zip(&fb.layers).zip(&weights.layers) {
        let plane = la.height * la.width;
        if plane == 0 {
            continue;
        }
        let mut acc = vec![0.0f64; plane];
        for (c, wc) in w.iter().enumerate() {
            let wc = f64::from(*wc);
            let base = c * plane;
            for (p, slot) in acc.iter_mut().enumerate() {
                let d = wc * (f64::from(la.activations[base + p]) - f64::from(lb.activations[base + p]));
                *slot += d * d;
            }
        }
        total += acc.iter().sum::<f64>() / plane as f64;
    }
    Ok(total)
}
