//! One-step, iterative, and momentum-iterative gradient attacks.
//!
//! All six methods share one update kernel. Per iteration it asks a
//! [`GradientSource`] for the loss gradient at the current point, turns it
//! into a step direction (raw gradient, or the momentum accumulator for the
//! MI variants), applies a sign step (L∞) or an L2-normalized step, and then
//! clips: to the ε-ball when running with a fixed step size, and to the
//! valid pixel range unless disabled. Non-targeted runs ascend on the loss
//! at the true label; targeted runs descend on the loss at the target label.
//!
//! Budgets are quoted per pixel on the `[0, 255]` scale in [`AttackConfig`]
//! and converted internally: an L∞ budget of `ε` becomes `ε/255`, an L2
//! budget becomes `(ε/255)·√N` for `N` input dimensions (see [`l2_budget`]).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::Model;
use crate::tensor::{cosine_similarity, Tensor};

/// Attack method family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fgsm,
    Fgm,
    IFgsm,
    IFgm,
    MiFgsm,
    MiFgm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Fgsm,
        Method::Fgm,
        Method::IFgsm,
        Method::IFgm,
        Method::MiFgsm,
        Method::MiFgm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Fgm => "fgm",
            Method::IFgsm => "i-fgsm",
            Method::IFgm => "i-fgm",
            Method::MiFgsm => "mi-fgsm",
            Method::MiFgm => "mi-fgm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_lowercase().replace('_', "-").as_str() {
            "fgsm" => Ok(Method::Fgsm),
            "fgm" => Ok(Method::Fgm),
            "i-fgsm" | "ifgsm" => Ok(Method::IFgsm),
            "i-fgm" | "ifgm" => Ok(Method::IFgm),
            "mi-fgsm" | "mifgsm" => Ok(Method::MiFgsm),
            "mi-fgm" | "mifgm" => Ok(Method::MiFgm),
            other => Err(Error::InvalidConfig(format!("unknown attack method '{other}'"))),
        }
    }

    pub fn is_one_step(self) -> bool {
        matches!(self, Method::Fgsm | Method::Fgm)
    }

    pub fn is_momentum(self) -> bool {
        matches!(self, Method::MiFgsm | Method::MiFgm)
    }

    /// The norm bound the method is defined under: sign methods are L∞,
    /// the fast-gradient family is L2.
    pub fn natural_norm(self) -> Norm {
        match self {
            Method::Fgsm | Method::IFgsm | Method::MiFgsm => Norm::LInf,
            Method::Fgm | Method::IFgm | Method::MiFgm => Norm::L2,
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Perturbation norm bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    LInf,
    L2,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::LInf => "linf",
            Norm::L2 => "l2",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_lowercase().as_str() {
            "linf" | "inf" => Ok(Norm::LInf),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidConfig(format!("unknown norm '{other}'"))),
        }
    }

    pub fn distance(self, t: &Tensor) -> f64 {
        match self {
            Norm::LInf => t.linf_norm(),
            Norm::L2 => t.l2_norm(),
        }
    }
}

impl core::fmt::Display for Norm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalization applied to the instantaneous gradient before it enters the
/// momentum accumulator. L1 matches the published update; L2 is exposed as
/// an alternative since any distance works there in principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradNorm {
    L1,
    L2,
}

impl GradNorm {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_lowercase().as_str() {
            "l1" => Ok(GradNorm::L1),
            "l2" => Ok(GradNorm::L2),
            other => Err(Error::InvalidConfig(format!(
                "unknown gradient normalization '{other}'"
            ))),
        }
    }
}

/// Step-size rule for the iterative methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `α = ε / T`; feasibility holds by construction.
    EpsOverT,
    /// Fixed per-iteration step (per pixel, `[0, 255]` scale) with the
    /// iterate clipped back into the ε-ball after every step.
    Fixed { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub method: Method,
    /// Budget per pixel on the `[0, 255]` scale (16 means 16/255 per pixel).
    pub epsilon: f64,
    pub norm: Norm,
    pub iterations: usize,
    /// Momentum decay factor μ; ignored by non-momentum methods.
    pub decay: f64,
    pub step_rule: StepRule,
    /// Target class for targeted attacks; `None` runs non-targeted.
    pub target: Option<usize>,
    /// Clip every iterate to pixel range `[0, 1]` (on unless running
    /// strict-paper mode).
    pub clip_valid_range: bool,
    pub grad_normalization: GradNorm,
    /// Keep the applied per-iteration displacement tensors in the trace.
    pub record_step_directions: bool,
}

impl AttackConfig {
    /// Paper-default hyperparameters: ε = 16 (of 255), T = 10, μ = 1.
    pub fn new(method: Method) -> Self {
        AttackConfig {
            method,
            epsilon: 16.0,
            norm: method.natural_norm(),
            iterations: if method.is_one_step() { 1 } else { 10 },
            decay: 1.0,
            step_rule: StepRule::EpsOverT,
            target: None,
            clip_valid_range: true,
            grad_normalization: GradNorm::L1,
            record_step_directions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.method.is_one_step() && self.iterations != 1 {
            return Err(Error::InvalidConfig(format!(
                "{} is one-step but iterations = {}",
                self.method, self.iterations
            )));
        }
        if !self.decay.is_finite() || self.decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "decay must be finite and >= 0, got {}",
                self.decay
            )));
        }
        if self.norm != self.method.natural_norm() {
            return Err(Error::InvalidConfig(format!(
                "{} is a {} method but norm = {}",
                self.method,
                self.method.natural_norm(),
                self.norm
            )));
        }
        if let StepRule::Fixed { alpha } = self.step_rule {
            if !alpha.is_finite() || alpha <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "fixed step must be finite and > 0, got {alpha}"
                )));
            }
        }
        Ok(())
    }

    /// Ball radius in `[0, 1]` input units for an input of `n` dimensions.
    pub fn epsilon_effective(&self, n: usize) -> f64 {
        scale_budget(self.epsilon, self.norm, n)
    }

    fn alpha_effective(&self, n: usize, eps_effective: f64) -> f64 {
        match self.step_rule {
            StepRule::EpsOverT => eps_effective / self.iterations as f64,
            StepRule::Fixed { alpha } => scale_budget(alpha, self.norm, n),
        }
    }
}

fn scale_budget(per_pixel_255: f64, norm: Norm, n: usize) -> f64 {
    let per_pixel = per_pixel_255 / 255.0;
    match norm {
        Norm::LInf => per_pixel,
        Norm::L2 => l2_budget(per_pixel, n),
    }
}

/// L2 budget equivalent to a per-pixel budget of `eps_per_pixel` over `n`
/// dimensions: `eps_per_pixel · √n`.
pub fn l2_budget(eps_per_pixel: f64, n: usize) -> f64 {
    eps_per_pixel * math::sqrt(n as f64)
}

/// Anything that can supply loss gradients with respect to its input: a
/// single model, or an ensemble with one of the fusion schemes.
pub trait GradientSource: Sync {
    fn input_shape(&self) -> &[usize];
    fn num_classes(&self) -> usize;
    /// Loss and its exact gradient w.r.t. `x`, for class `y`.
    fn loss_and_input_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)>;
    /// Human-readable handle used in result records.
    fn describe(&self) -> String;
}

impl GradientSource for Model {
    fn input_shape(&self) -> &[usize] {
        Model::input_shape(self)
    }

    fn num_classes(&self) -> usize {
        Model::num_classes(self)
    }

    fn loss_and_input_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        self.input_gradient(x, y)
    }

    fn describe(&self) -> String {
        self.label()
    }
}

/// Momentum accumulation: `g' = μ·g + grad / ‖grad‖`, with the chosen
/// normalization. A zero gradient contributes nothing (the velocity simply
/// decays by μ); the returned flag reports that case.
pub fn momentum_step(
    velocity: &Tensor,
    grad: &Tensor,
    mu: f64,
    normalization: GradNorm,
) -> Result<(Tensor, bool)> {
    if velocity.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            expected: velocity.shape().to_vec(),
            found: grad.shape().to_vec(),
        });
    }
    let norm = match normalization {
        GradNorm::L1 => grad.l1_norm(),
        GradNorm::L2 => grad.l2_norm(),
    };
    if norm == 0.0 {
        return Ok((velocity.scale(mu), true));
    }
    let data = velocity
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| mu * v + g / norm)
        .collect();
    Ok((Tensor::from_parts(velocity.shape().to_vec(), data), false))
}

/// Clips `x_star` into the ε-ball around `x`: elementwise clamp for L∞,
/// radial rescaling of the perturbation for L2.
pub fn clip_to_ball(x_star: &Tensor, x: &Tensor, epsilon: f64, norm: Norm) -> Result<Tensor> {
    if x_star.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            found: x_star.shape().to_vec(),
        });
    }
    match norm {
        Norm::LInf => {
            let data = x_star
                .data()
                .iter()
                .zip(x.data())
                .map(|(&s, &o)| s.clamp(o - epsilon, o + epsilon))
                .collect();
            Ok(Tensor::from_parts(x.shape().to_vec(), data))
        }
        Norm::L2 => {
            let delta = x_star.sub(x)?;
            let dist = delta.l2_norm();
            if dist <= epsilon {
                Ok(x_star.clone())
            } else {
                x.add_scaled(&delta, epsilon / dist)
            }
        }
    }
}

/// One record per attack iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Loss at the point the gradient was taken.
    pub loss: f64,
    pub grad_l1: f64,
    pub grad_l2: f64,
    /// Cosine between this iteration's applied displacement and the previous
    /// one; `None` on the first iteration.
    pub step_cosine: Option<f64>,
    /// Set when the cosine was defined as 0 because a step had zero norm.
    pub cosine_degenerate: bool,
    /// ‖x*_t − x‖∞ after this iteration.
    pub dist_linf: f64,
    /// ‖x*_t − x‖2 after this iteration.
    pub dist_l2: f64,
    pub zero_gradient: bool,
    /// The applied displacement, kept only when requested in the config.
    pub step_direction: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct AttackTrace {
    pub records: Vec<IterationRecord>,
}

impl AttackTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Cosines of successive steps, in iteration order (length T − 1).
    pub fn step_cosines(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.step_cosine)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub adversarial: Tensor,
    pub trace: AttackTrace,
    /// Description of the gradient source the example was crafted on.
    pub source: String,
    pub config: AttackConfig,
    /// Ball radius actually enforced, in `[0, 1]` input units.
    pub epsilon_effective: f64,
}

struct Plan {
    momentum: bool,
    decay: f64,
    grad_norm: GradNorm,
    norm: Norm,
    iterations: usize,
    eps: f64,
    alpha: f64,
    clip_ball: bool,
    clip_valid_range: bool,
    y_eff: usize,
    targeted: bool,
    record_steps: bool,
}

/// Runs an attack described by `config` on one example. `label` is the
/// ground-truth class; targeted mode (a `Some` target in the config) instead
/// descends on the loss at the target class.
pub fn run_attack(
    source: &dyn GradientSource,
    x: &Tensor,
    label: usize,
    config: &AttackConfig,
) -> Result<AttackResult> {
    config.validate()?;
    if x.shape() != source.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: source.input_shape().to_vec(),
            found: x.shape().to_vec(),
        });
    }
    if label >= source.num_classes() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: source.num_classes(),
        });
    }
    let (y_eff, targeted) = match config.target {
        Some(t) => {
            if t >= source.num_classes() {
                return Err(Error::LabelOutOfRange {
                    label: t,
                    num_classes: source.num_classes(),
                });
            }
            (t, true)
        }
        None => (label, false),
    };
    let n = x.len();
    let eps = config.epsilon_effective(n);
    let plan = Plan {
        momentum: config.method.is_momentum(),
        decay: config.decay,
        grad_norm: config.grad_normalization,
        norm: config.norm,
        iterations: config.iterations,
        eps,
        alpha: config.alpha_effective(n, eps),
        clip_ball: matches!(config.step_rule, StepRule::Fixed { .. }),
        clip_valid_range: config.clip_valid_range,
        y_eff,
        targeted,
        record_steps: config.record_step_directions,
    };
    let (adversarial, trace) = run_plan(source, x, &plan)?;
    Ok(AttackResult {
        adversarial,
        trace,
        source: source.describe(),
        config: config.clone(),
        epsilon_effective: eps,
    })
}

/// Single-step attack (the sign step for L∞, the normalized-gradient step
/// for L2) at an *effective* budget: `epsilon` is the ball radius in `[0, 1]`
/// input units, with no `[0, 255]` or `√N` conversion applied.
pub fn one_step_attack(
    source: &dyn GradientSource,
    x: &Tensor,
    y: usize,
    epsilon: f64,
    norm: Norm,
    clip_valid_range: bool,
) -> Result<AttackResult> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    if x.shape() != source.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: source.input_shape().to_vec(),
            found: x.shape().to_vec(),
        });
    }
    if y >= source.num_classes() {
        return Err(Error::LabelOutOfRange {
            label: y,
            num_classes: source.num_classes(),
        });
    }
    let method = match norm {
        Norm::LInf => Method::Fgsm,
        Norm::L2 => Method::Fgm,
    };
    let plan = Plan {
        momentum: false,
        decay: 0.0,
        grad_norm: GradNorm::L1,
        norm,
        iterations: 1,
        eps: epsilon,
        alpha: epsilon,
        clip_ball: false,
        clip_valid_range,
        y_eff: y,
        targeted: false,
    record_steps: false,
    };
    let (adversarial, trace) = run_plan(source, x, &plan)?;
    // Config echo with the equivalent [0, 255]-scale budget.
    let epsilon_255 = match norm {
        Norm::LInf => epsilon * 255.0,
        Norm::L2 => epsilon * 255.0 / math::sqrt(x.len() as f64),
    };
    let mut config = AttackConfig::new(method);
    config.epsilon = epsilon_255;
    config.clip_valid_range = clip_valid_range;
    Ok(AttackResult {
        adversarial,
        trace,
        source: source.describe(),
        config,
        epsilon_effective: epsilon,
    })
}

fn run_plan(source: &dyn GradientSource, x: &Tensor, plan: &Plan) -> Result<(Tensor, AttackTrace)> {
    let mut x_star = x.clone();
    let mut velocity = Tensor::zeros(x.shape().to_vec());
    let mut prev_step: Option<Tensor> = None;
    let mut records = Vec::with_capacity(plan.iterations);
    // With μ = 0 the accumulator is just the normalized current gradient;
    // both step forms (sign and L2-normalized) are invariant to that
    // positive scaling, so the plain iterative path is used verbatim. This
    // is what makes MI-*(μ = 0) coincide bitwise with I-*.
    let use_momentum = plan.momentum && plan.decay > 0.0;

    for t in 0..plan.iterations {
        let (loss, grad) = source.loss_and_input_gradient(&x_star, plan.y_eff)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t, loss });
        }
        let grad_l1 = grad.l1_norm();
        let grad_l2 = grad.l2_norm();
        if !grad_l1.is_finite() {
            return Err(Error::InvalidTensor(format!(
                "non-finite gradient at iteration {t}"
            )));
        }
        let zero_gradient = grad_l1 == 0.0;

        let direction: &Tensor = if use_momentum {
            let (next, _was_zero) = momentum_step(&velocity, &grad, plan.decay, plan.grad_norm)?;
            velocity = next;
            if t == 0 {
                // g_1 is the normalized first gradient; the step is scale
                // invariant, so stepping along the raw gradient is the same
                // update and keeps T = 1 bit-identical to the one-step
                // attack.
                &grad
            } else {
                &velocity
            }
        } else {
            &grad
        };

        let nominal = match plan.norm {
            Norm::LInf => direction.sign().scale(plan.alpha),
            Norm::L2 => {
                let n2 = direction.l2_norm();
                if n2 == 0.0 {
                    Tensor::zeros(x.shape().to_vec())
                } else {
                    direction.scale(plan.alpha / n2)
                }
            }
        };

        let before = x_star.clone();
        x_star = if plan.targeted {
            x_star.sub(&nominal)?
        } else {
            x_star.add(&nominal)?
        };
        if plan.clip_ball {
            x_star = clip_to_ball(&x_star, x, plan.eps, plan.norm)?;
        }
        if plan.clip_valid_range {
            x_star = x_star.clamp(0.0, 1.0);
        }

        let applied = x_star.sub(&before)?;
        let (step_cosine, cosine_degenerate) = match &prev_step {
            None => (None, false),
            Some(prev) => {
                let degenerate = prev.l2_norm() == 0.0 || applied.l2_norm() == 0.0;
                (Some(cosine_similarity(prev, &applied)?), degenerate)
            }
        };
        let delta = x_star.sub(x)?;
        records.push(IterationRecord {
            loss,
            grad_l1,
            grad_l2,
            step_cosine,
            cosine_degenerate,
            dist_linf: delta.linf_norm(),
            dist_l2: delta.l2_norm(),
            zero_gradient,
            step_direction: plan.record_steps.then(|| applied.clone()),
        });
        prev_step = Some(applied);
    }

    Ok((x_star, AttackTrace { records }))
}
