use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box parameters predicted per anchor (x, y, w, h).
pub const BOX_PARAMS: usize = 4;

/// Affine detector: flattened `[0, 1]` image in, per-anchor raw outputs out.
///
/// Each anchor owns `classes + 5` consecutive output rows: class logits,
/// then four box values, then one objectness logit. Input layout matches
/// [`ImageBuffer`](crate::data::ImageBuffer): row-major, RGB interleaved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDetectorModel {
    width: usize,
    height: usize,
    anchors: usize,
    classes: usize,
    /// Row-major `(anchors * (classes + 5)) x (width * height * 3)`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    seed: Option<u64>,
}

impl ToyDetectorModel {
    pub fn from_parts(
        width: usize,
        height: usize,
        anchors: usize,
        classes: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || anchors == 0 || classes == 0 {
            return Err(Error::Argument(format!(
                "model dimensions must be positive: {width}x{height}, {anchors} anchors, {classes} classes"
            )));
        }
        let rows = anchors * (classes + BOX_PARAMS + 1);
        let cols = width * height * 3;
        if weights.len() != rows * cols || bias.len() != rows {
            return Err(Error::Shape(format!(
                "expected {rows}x{cols} weights and {rows} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            anchors,
            classes,
            weights,
            bias,
            seed: None,
        })
    }

    pub fn zeros(width: usize, height: usize, anchors: usize, classes: usize) -> Result<Self> {
        let rows = anchors * (classes + BOX_PARAMS + 1);
        Self::from_parts(
            width,
            height,
            anchors,
            classes,
            vec![0.0; rows * width * height * 3],
            vec![0.0; rows],
        )
    }

    /// Weights uniform in `±2/sqrt(inputs)`, biases uniform in `±1`, drawn from ChaCha8.
    pub fn seeded(width: usize, height: usize, anchors: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(width, height, anchors, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 2.0 / (model.input_len() as f64).sqrt();
        for w in &mut model.weights {
            *w = rng.random_range(-scale..scale);
        }
        for b in &mut model.bias {
            *b = rng.random_range(-1.0..1.0);
        }
        model.seed = Some(seed);
        Ok(model)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn input_len(&self) -> usize {
        self.width * self.height * 3
    }

    pub fn outputs_per_anchor(&self) -> usize {
        self.classes + BOX_PARAMS + 1
    }

    pub fn output_len(&self) -> usize {
        self.anchors * self.outputs_per_anchor()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "model expects {} input values ({}x{}x3), got {}",
                self.input_len(),
                self.width,
                self.height,
                x.len()
            )));
        }
        Ok(())
    }

    /// `W x + b`.
    pub(crate) fn affine(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.input_len();
        self.weights
            .chunks_exact(cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// `W^T g`.
    pub(crate) fn backprop(&self, g: &[f64]) -> Vec<f64> {
        let cols = self.input_len();
        let mut out = vec![0.0; cols];
        for (row, gi) in self.weights.chunks_exact(cols).zip(g) {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gi;
            }
        }
        out
    }
}

/// Per-anchor outputs after the softmax and sigmoid heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub anchors: usize,
    pub classes: usize,
    /// `anchors x classes`, rows sum to one.
    pub class_probs: Vec<f64>,
    /// `anchors x 4`.
    pub boxes: Vec<f64>,
    /// `anchors`, each in `(0, 1)`.
    pub objectness: Vec<f64>,
}

impl Predictions {
    pub fn probs(&self, anchor: usize) -> &[f64] {
        &self.class_probs[anchor * self.classes..(anchor + 1) * self.classes]
    }

    pub fn bbox(&self, anchor: usize) -> &[f64] {
        &self.boxes[anchor * BOX_PARAMS..(anchor + 1) * BOX_PARAMS]
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn heads(model: &ToyDetectorModel, raw: &[f64]) -> Predictions {
    let k = model.outputs_per_anchor();
    let c = model.classes;
    let mut class_probs = Vec::with_capacity(model.anchors * c);
    let mut boxes = Vec::with_capacity(model.anchors * BOX_PARAMS);
    let mut objectness = Vec::with_capacity(model.anchors);
    for out in raw.chunks_exact(k) {
        let logits = &out[..c];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        class_probs.extend(exps.iter().map(|e| e / sum));
        boxes.extend_from_slice(&out[c..c + BOX_PARAMS]);
        objectness.push(sigmoid(out[c + BOX_PARAMS]));
    }
    Predictions {
        anchors: model.anchors,
        classes: c,
        class_probs,
        boxes,
        objectness,
    }
}

pub fn forward(model: &ToyDetectorModel, x: &[f64]) -> Result<Predictions> {
    model.check_input(x)?;
    Ok(heads(model, &model.affine(x)))
}
