//! Structural similarity on 8-bit RGB.
//!
//! Gaussian 11x11 window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 255,
//! evaluated only where the window fits entirely inside the image, computed
//! per channel and averaged over the three channels.

use crate::data::ImageBuffer;
use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let center = (WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - center;
        *t = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

pub(crate) fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    super::same_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < WINDOW || h < WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let total: f64 = (0..3)
        .map(|c| channel_ssim(a.pixels(), b.pixels(), w, h, c, &taps))
        .sum();
    Ok(total / 3.0)
}

fn channel_ssim(a: &[u8], b: &[u8], w: usize, h: usize, c: usize, taps: &[f64; WINDOW]) -> f64 {
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let n = w * h;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x.push(f64::from(a[i * 3 + c]));
        y.push(f64::from(b[i * 3 + c]));
    }
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(&x, w, h, taps);
    let mu_y = filter_valid(&y, w, h, taps);
    let e_xx = filter_valid(&xx, w, h, taps);
    let e_yy = filter_valid(&yy, w, h, taps);
    let e_xy = filter_valid(&xy, w, h, taps);

    let mut sum = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
        sum += num / den;
    }
    sum / mu_x.len() as f64
}

/// Separable valid-mode correlation; output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for yy in 0..h {
        let line = &src[yy * w..(yy + 1) * w];
        for xx in 0..ow {
            rows[yy * ow + xx] = taps.iter().zip(&line[xx..xx + WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for yy in 0..oh {
        for xx in 0..ow {
            out[yy * ow + xx] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(yy + k) * ow + xx])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..WINDOW {
            assert_eq!(t[i], t[WINDOW - 1 - i]);
        }
    }

    #[test]
    fn identical_is_exactly_one() {
        let pixels: Vec<u8> = (0..16 * 12 * 3).map(|i| (i * 37 % 251) as u8).collect();
        let img = ImageBuffer::new(16, 12, pixels).unwrap();
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
    }

    #[test]
    fn constant_fields_closed_form() {
        let a = ImageBuffer::filled(16, 16, [100; 3]).unwrap();
        let b = ImageBuffer::filled(16, 16, [150; 3]).unwrap();
        let c1 = 6.5025;
        let expected = (2.0 * 100.0 * 150.0 + c1) / (100.0f64.powi(2) + 150.0f64.powi(2) + c1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!((got - 0.92309).abs() < 1e-4);
    }

    #[test]
    fn too_small_rejected() {
        let a = ImageBuffer::filled(10, 40, [0; 3]).unwrap();
        assert!(matches!(ssim(&a, &a), Err(Error::Shape(_))));
    }
}
