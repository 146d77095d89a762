use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{heads, Predictions, ToyDetectorModel, BOX_PARAMS};
use crate::error::{Error, Result};

/// Floor applied inside every logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Class and box of the ground truth an anchor is matched to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTarget {
    pub class_id: usize,
    pub bbox: [f64; BOX_PARAMS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTarget {
    /// `Some` when the anchor is matched to a ground-truth object.
    pub object: Option<ObjectTarget>,
    pub objectness: bool,
}

/// Labels for every anchor of the toy detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAssignment {
    pub anchors: Vec<AnchorTarget>,
}

impl TargetAssignment {
    /// Random labels: each anchor matched with probability one half, objectness
    /// following the match flag, box targets uniform in `[-2, 2]`.
    pub fn random(anchors: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let anchors = (0..anchors)
            .map(|_| {
                let matched = rng.random_bool(0.5);
                let object = matched.then(|| ObjectTarget {
                    class_id: rng.random_range(0..classes),
                    bbox: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
                });
                AnchorTarget {
                    object,
                    objectness: matched,
                }
            })
            .collect();
        Self { anchors }
    }

    /// Same boxes and objectness, every matched class moved to `(c + 1) mod classes`.
    pub fn shifted_classes(&self, classes: usize) -> Self {
        let mut out = self.clone();
        for obj in out.anchors.iter_mut().filter_map(|a| a.object.as_mut()) {
            obj.class_id = (obj.class_id + 1) % classes;
        }
        out
    }

    pub fn matched_count(&self) -> usize {
        self.anchors.iter().filter(|a| a.object.is_some()).count()
    }

    pub(crate) fn check(&self, anchors: usize, classes: usize) -> Result<()> {
        if self.anchors.len() != anchors {
            return Err(Error::Shape(format!(
                "{} anchor targets for {anchors} anchors",
                self.anchors.len()
            )));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if let Some(obj) = &a.object {
                if obj.class_id >= classes {
                    return Err(Error::Shape(format!(
                        "anchor {i} targets class {} of {classes}",
                        obj.class_id
                    )));
                }
                if obj.bbox.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!("anchor {i} has a non-finite box target")));
                }
            }
        }
        Ok(())
    }
}

/// The three terms of the detector loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub loc: f64,
    pub obj: f64,
}

impl LossBreakdown {
    pub fn total(&self, lambda_loc: f64, lambda_obj: f64) -> f64 {
        self.cls + lambda_loc * self.loc + lambda_obj * self.obj
    }
}

pub fn smooth_l1(z: f64) -> f64 {
    if z.abs() < 1.0 {
        0.5 * z * z
    } else {
        z.abs() - 0.5
    }
}

fn smooth_l1_slope(z: f64) -> f64 {
    if z.abs() < 1.0 {
        z
    } else {
        z.signum()
    }
}

fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_CLAMP).ln()
}

/// Cross-entropy over matched anchors, SmoothL1 box loss over matched
/// anchors, binary cross-entropy objectness over all anchors.
pub fn loss_components(preds: &Predictions, targets: &TargetAssignment) -> Result<LossBreakdown> {
    targets.check(preds.anchors, preds.classes)?;
    let mut out = LossBreakdown {
        cls: 0.0,
        loc: 0.0,
        obj: 0.0,
    };
    for (i, t) in targets.anchors.iter().enumerate() {
        if let Some(obj) = &t.object {
            out.cls -= clamped_ln(preds.probs(i)[obj.class_id]);
            out.loc += obj
                .bbox
                .iter()
                .zip(preds.bbox(i))
                .map(|(b, b_hat)| smooth_l1(b - b_hat))
                .sum::<f64>();
        }
        let o = preds.objectness[i];
        out.obj -= if t.objectness {
            clamped_ln(o)
        } else {
            clamped_ln(1.0 - o)
        };
    }
    Ok(out)
}

/// Derivative of `L_cls + lambda_loc L_loc + lambda_obj L_obj` with respect to
/// the raw (pre-softmax, pre-sigmoid) outputs.
pub(crate) fn output_gradient(
    preds: &Predictions,
    targets: &TargetAssignment,
    lambda_loc: f64,
    lambda_obj: f64,
) -> Vec<f64> {
    let c = preds.classes;
    let k = c + BOX_PARAMS + 1;
    let mut g = vec![0.0; preds.anchors * k];
    for (i, t) in targets.anchors.iter().enumerate() {
        let row = &mut g[i * k..(i + 1) * k];
        if let Some(obj) = &t.object {
            let probs = preds.probs(i);
            // inside the log clamp the term is constant
            if probs[obj.class_id] > LOG_CLAMP {
                for (j, p) in probs.iter().enumerate() {
                    row[j] = p - f64::from(u8::from(j == obj.class_id));
                }
            }
            for (j, (b, b_hat)) in obj.bbox.iter().zip(preds.bbox(i)).enumerate() {
                row[c + j] = -lambda_loc * smooth_l1_slope(b - b_hat);
            }
        }
        let o = preds.objectness[i];
        row[c + BOX_PARAMS] = lambda_obj
            * if t.objectness {
                if o > LOG_CLAMP { o - 1.0 } else { 0.0 }
            } else if 1.0 - o > LOG_CLAMP {
                o
            } else {
                0.0
            };
    }
    g
}

/// Loss terms evaluated on the model output for input `x`.
pub fn model_loss(model: &ToyDetectorModel, x: &[f64], targets: &TargetAssignment) -> Result<LossBreakdown> {
    model.check_input(x)?;
    loss_components(&heads(model, &model.affine(x)), targets)
}
