//! White-box attack core: an affine toy detector with softmax, sigmoid and
//! SmoothL1 heads, its analytic input gradient, and projected sign-gradient
//! ascent (PGD; FGSM is the one-step case).

mod loss;
mod model;
mod pgd;

pub use self::loss::{
    loss_components, model_loss, smooth_l1, AnchorTarget, LossBreakdown, ObjectTarget, TargetAssignment,
    LOG_CLAMP,
};
pub use self::model::{forward, Predictions, ToyDetectorModel, BOX_PARAMS};
pub use self::pgd::{
    grad_input, pgd_attack, project_linf, sign_ascent, AdversarialResult, AttackConfig, DetectorObjective,
    Differentiable, Objective, TraceEntry,
};
