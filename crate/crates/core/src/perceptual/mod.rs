//! Perceptibility of a perturbation: L_p norms, PSNR, SSIM, LPIPS, and the
//! mean/std aggregation used in reports.
//!
//! Inputs are 8-bit RGB in `[0, 255]`; all arithmetic is `f64`.

mod lpips;
mod ssim;

use serde::{Deserialize, Serialize};

pub use self::lpips::{
    FeatureLayer, LayerWeights, PerceptualFeatureSet, FEATURE_MAGIC, UNIT_NORM_TOLERANCE,
    WEIGHT_MAGIC,
};
pub use self::ssim::{gaussian_taps, DYNAMIC_RANGE, K1, K2, SIGMA, WINDOW};
use crate::data::ImageBuffer;
use crate::error::{Error, Result};

pub const PSNR_PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBundle {
    pub l0: u64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub(crate) fn same_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Norms of `b - a` over all `width * height * 3` values.
pub fn lp_norms(a: &ImageBuffer, b: &ImageBuffer) -> Result<NormBundle> {
    same_dims(a, b)?;
    let mut l0 = 0u64;
    let mut l1 = 0.0f64;
    let mut sq = 0.0f64;
    let mut linf = 0.0f64;
    for (&p, &q) in a.pixels().iter().zip(b.pixels()) {
        let d = (f64::from(q) - f64::from(p)).abs();
        if d != 0.0 {
            l0 += 1;
        }
        l1 += d;
        sq += d * d;
        linf = linf.max(d);
    }
    Ok(NormBundle {
        l0,
        l1,
        l2: sq.sqrt(),
        linf,
    })
}

/// `10 log10(255^2 / MSE)` in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_dims(a, b)?;
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = f64::from(p) - f64::from(q);
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.pixels().len() as f64;
    Ok(10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10())
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    ssim::ssim(a, b)
}

pub fn lpips_distance(
    fa: &PerceptualFeatureSet,
    fb: &PerceptualFeatureSet,
    weights: &LayerWeights,
) -> Result<f64> {
    lpips::distance(fa, fb, weights)
}

/// Mean and population standard deviation of a per-image metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    #[serde(with = "crate::util::float")]
    pub mean: f64,
    #[serde(with = "crate::util::float")]
    pub std: f64,
    pub n: usize,
}

impl std::fmt::Display for DistanceStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ± {}",
            crate::util::fixed(self.mean, 2),
            crate::util::fixed(self.std, 2)
        )
    }
}

/// Infinite entries (PSNR of unchanged images) make the mean infinite; the
/// spread is then 0 if every entry is infinite and infinite otherwise.
pub fn aggregate(values: &[f64]) -> Result<DistanceStats> {
    if values.is_empty() {
        return Err(Error::Argument("cannot aggregate an empty list".into()));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(Error::Argument(format!("cannot aggregate {v}")));
    }
    let n = values.len();
    let infinite = values.iter().filter(|v| v.is_infinite()).count();
    if infinite > 0 {
        let all_same = values.iter().all(|v| *v == values[0]);
        return Ok(DistanceStats {
            mean: if all_same { values[0] } else { values.iter().sum() },
            std: if all_same { 0.0 } else { f64::INFINITY },
            n,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok(DistanceStats {
        mean,
        std: var.sqrt(),
        n,
    })
}
