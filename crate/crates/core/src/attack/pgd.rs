use serde::{Deserialize, Serialize};

use super::loss::{model_loss, output_gradient, LossBreakdown, TargetAssignment};
use super::model::{heads, ToyDetectorModel};
use crate::error::{Error, Result};

/// Scalar objective with an analytic gradient, maximized by [`sign_ascent`].
pub trait Differentiable {
    fn value(&self, x: &[f64]) -> Result<(f64, Option<LossBreakdown>)>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "target")]
pub enum Objective {
    /// Maximize the loss against the true labels.
    Untargeted,
    /// Maximize `L(y) - L(y_target)`, pulling predictions toward the target labels.
    Targeted(TargetAssignment),
}

/// The toy detector loss seen as a function of the input image.
#[derive(Debug, Clone)]
pub struct DetectorObjective<'a> {
    pub model: &'a ToyDetectorModel,
    pub targets: &'a TargetAssignment,
    pub objective: &'a Objective,
    pub lambda_loc: f64,
    pub lambda_obj: f64,
}

impl<'a> DetectorObjective<'a> {
    pub fn new(model: &'a ToyDetectorModel, targets: &'a TargetAssignment, objective: &'a Objective) -> Self {
        Self {
            model,
            targets,
            objective,
            lambda_loc: 1.0,
            lambda_obj: 1.0,
        }
    }

    fn check(&self) -> Result<()> {
        self.targets.check(self.model.anchors(), self.model.classes())?;
        if let Objective::Targeted(t) = self.objective {
            t.check(self.model.anchors(), self.model.classes())?;
        }
        Ok(())
    }
}

impl Differentiable for DetectorObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<(f64, Option<LossBreakdown>)> {
        self.check()?;
        let parts = model_loss(self.model, x, self.targets)?;
        let mut j = parts.total(self.lambda_loc, self.lambda_obj);
        if let Objective::Targeted(t) = self.objective {
            j -= model_loss(self.model, x, t)?.total(self.lambda_loc, self.lambda_obj);
        }
        Ok((j, Some(parts)))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check()?;
        self.model.check_input(x)?;
        let preds = heads(self.model, &self.model.affine(x));
        let mut g = output_gradient(&preds, self.targets, self.lambda_loc, self.lambda_obj);
        if let Objective::Targeted(t) = self.objective {
            let gt = output_gradient(&preds, t, self.lambda_loc, self.lambda_obj);
            for (a, b) in g.iter_mut().zip(gt) {
                *a -= b;
            }
        }
        Ok(self.model.backprop(&g))
    }
}

/// Gradient of the detector objective with respect to the input.
pub fn grad_input(
    model: &ToyDetectorModel,
    x: &[f64],
    targets: &TargetAssignment,
    objective: &Objective,
    lambda_loc: f64,
    lambda_obj: f64,
) -> Result<Vec<f64>> {
    DetectorObjective {
        model,
        targets,
        objective,
        lambda_loc,
        lambda_obj,
    }
    .gradient(x)
}

/// Projection onto `{ ||x - x_clean||_inf <= epsilon } ∩ [0, 1]^n`.
pub fn project_linf(x_adv: &[f64], x_clean: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if x_adv.len() != x_clean.len() {
        return Err(Error::Shape(format!(
            "projection of {} values onto a ball around {}",
            x_adv.len(),
            x_clean.len()
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Argument(format!("epsilon must be finite and non-negative, got {epsilon}")));
    }
    Ok(x_adv
        .iter()
        .zip(x_clean)
        .map(|(&v, &c)| v.max((c - epsilon).max(0.0)).min((c + epsilon).min(1.0)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L_inf budget in `[0, 1]` pixel units.
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub objective: Objective,
    pub lambda_loc: f64,
    pub lambda_obj: f64,
}

impl AttackConfig {
    /// `steps` iterations with `step_size = 2.5 * epsilon / steps`.
    pub fn pgd(epsilon: f64, steps: usize) -> Self {
        Self {
            epsilon,
            steps,
            step_size: 2.5 * epsilon / steps.max(1) as f64,
            objective: Objective::Untargeted,
            lambda_loc: 1.0,
            lambda_obj: 1.0,
        }
    }

    /// A single step of size `epsilon`.
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            step_size: epsilon,
            ..Self::pgd(epsilon, 1)
        }
    }

    pub fn targeted(mut self, target: TargetAssignment) -> Self {
        self.objective = Objective::Targeted(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Argument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::Argument("at least one step is required".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Argument(format!("step size must be positive, got {}", self.step_size)));
        }
        for (name, v) in [("lambda_loc", self.lambda_loc), ("lambda_obj", self.lambda_obj)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub parts: Option<LossBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialResult {
    pub x_star: Vec<f64>,
    /// Objective at every iterate, `x_0` through `x_steps`.
    pub loss_trace: Vec<TraceEntry>,
    pub achieved_linf: f64,
}

impl AdversarialResult {
    pub fn final_objective(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |t| t.objective)
    }

    /// `iteration,J,L_cls,L_loc,L_obj`; components are empty when the objective has none.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,J,L_cls,L_loc,L_obj\n");
        for t in &self.loss_trace {
            let parts = t
                .parts
                .map(|p| format!("{},{},{}", p.cls, p.loc, p.obj))
                .unwrap_or_else(|| ",,".into());
            out.push_str(&format!("{},{},{}\n", t.iteration, t.objective, parts));
        }
        out
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn non_finite(iteration: usize, what: &str) -> Error {
    Error::Numeric {
        iteration,
        message: format!("non-finite {what}"),
    }
}

/// Projected sign-gradient ascent from `x_clean`, which must lie in `[0, 1]`.
pub fn sign_ascent(
    objective: &impl Differentiable,
    x_clean: &[f64],
    epsilon: f64,
    steps: usize,
    step_size: f64,
) -> Result<AdversarialResult> {
    if let Some(v) = x_clean.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Argument(format!("clean input value {v} is outside [0, 1]")));
    }
    let mut x = x_clean.to_vec();
    let mut trace = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let (j, parts) = objective.value(&x)?;
        if !j.is_finite() {
            return Err(non_finite(t, "objective"));
        }
        trace.push(TraceEntry {
            iteration: t,
            objective: j,
            parts,
        });
        if t == steps {
            break;
        }
        let g = objective.gradient(&x)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(t, "gradient"));
        }
        let stepped: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v + step_size * sign(*gi)).collect();
        x = project_linf(&stepped, x_clean, epsilon)?;
    }
    let achieved_linf = x
        .iter()
        .zip(x_clean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(AdversarialResult {
        x_star: x,
        loss_trace: trace,
        achieved_linf,
    })
}

pub fn pgd_attack(
    model: &ToyDetectorModel,
    x_clean: &[f64],
    targets: &TargetAssignment,
    config: &AttackConfig,
) -> Result<AdversarialResult> {
    config.validate()?;
    model.check_input(x_clean)?;
    let objective = DetectorObjective {
        model,
        targets,
        objective: &config.objective,
        lambda_loc: config.lambda_loc,
        lambda_obj: config.lambda_obj,
    };
    sign_ascent(&objective, x_clean, config.epsilon, config.steps, config.step_size)
}
