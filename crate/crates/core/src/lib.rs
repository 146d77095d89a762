//! Benchmark engine for adversarial attacks on object detectors.
//!
//! - [`data`]: annotations, detections, images.
//! - [`detection`]: mAP, class-fused AP (AP_loc), classification success ratio.
//! - [`perceptual`]: L_p norms, PSNR, SSIM, LPIPS over exported features.
//! - [`attack`]: toy affine detector and projected sign-gradient attacks.
//! - [`bench`]: manifest-driven runs and report rendering.
//! - [`mix`]: seeded mixed-attack training-set composition.

pub mod attack;
pub mod bench;
pub mod cli;
pub mod data;
pub mod detection;
pub mod error;
pub mod mix;
pub mod perceptual;
pub mod util;

pub use error::{Category, Error, Result};
