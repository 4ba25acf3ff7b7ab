//! Attacking several models at once.
//!
//! Member outputs can be fused at three places: logits (the weighted logit
//! sum feeds one softmax cross-entropy), predictions (softmax outputs are
//! averaged and the loss is −log of the fused true-class probability), or
//! loss (per-member losses are averaged). An [`EnsembleSpec`] implements
//! [`GradientSource`], so the attack loop consumes it exactly like a single
//! model.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::attacks::GradientSource;
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{argmax, softmax, softmax_cross_entropy, Model};
use crate::tensor::Tensor;

/// Where member outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Logits,
    Predictions,
    Loss,
}

impl Fusion {
    pub const ALL: [Fusion; 3] = [Fusion::Logits, Fusion::Predictions, Fusion::Loss];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::Logits => "logits",
            Fusion::Predictions => "predictions",
            Fusion::Loss => "loss",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_lowercase().as_str() {
            "logits" => Ok(Fusion::Logits),
            "predictions" => Ok(Fusion::Predictions),
            "loss" => Ok(Fusion::Loss),
            other => Err(Error::InvalidConfig(format!(
                "unknown fusion scheme '{other}' (expected logits, predictions, or loss)"
            ))),
        }
    }
}

impl core::fmt::Display for Fusion {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A weighted ensemble of models sharing input shape and class count.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    members: Vec<Arc<Model>>,
    weights: Vec<f64>,
    fusion: Fusion,
}

impl EnsembleSpec {
    /// Validates K >= 1, nonnegative weights summing to 1 (within 1e-12; no
    /// silent renormalization), and member shape agreement.
    pub fn new(members: Vec<Arc<Model>>, weights: Vec<f64>, fusion: Fusion) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        if members.len() != weights.len() {
            return Err(Error::LengthMismatch(format!(
                "{} members vs {} weights",
                members.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidConfig("ensemble weights must be >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if math::abs(sum - 1.0) > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "ensemble weights must sum to 1, got {sum}"
            )));
        }
        let first = &members[0];
        for m in &members[1..] {
            if m.input_shape() != first.input_shape() || m.num_classes() != first.num_classes() {
                return Err(Error::InvalidConfig(format!(
                    "member '{}' disagrees on input shape or class count",
                    m.label()
                )));
            }
        }
        Ok(Self {
            members,
            weights,
            fusion,
        })
    }

    /// Equal-weight ensemble, the default in all experiments.
    pub fn equal_weights(members: Vec<Arc<Model>>, fusion: Fusion) -> Result<Self> {
        let k = members.len();
        if k == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        Self::new(members, vec![1.0 / k as f64; k], fusion)
    }

    pub fn members(&self) -> &[Arc<Model>] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn check_label(&self, y: usize) -> Result<()> {
        let classes = self.members[0].num_classes();
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: classes,
            });
        }
        Ok(())
    }

    /// Weighted logit sum `Σ w_k · l_k(x)`.
    pub fn fuse_logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut fused = Tensor::zeros(vec![self.members[0].num_classes()]);
        for (m, &w) in self.members.iter().zip(&self.weights) {
            let logits = m.forward(x)?;
            fused = fused.add_scaled(&logits, w)?;
        }
        Ok(fused)
    }

    /// Convex combination of member softmax outputs.
    pub fn fuse_predictions(&self, x: &Tensor) -> Result<Tensor> {
        let mut fused = Tensor::zeros(vec![self.members[0].num_classes()]);
        for (m, &w) in self.members.iter().zip(&self.weights) {
            let probs = softmax(&m.forward(x)?);
            fused = fused.add_scaled(&probs, w)?;
        }
        Ok(fused)
    }

    /// Weighted sum of member cross-entropy losses.
    pub fn fuse_loss(&self, x: &Tensor, y: usize) -> Result<f64> {
        self.check_label(y)?;
        let mut total = 0.0;
        for (m, &w) in self.members.iter().zip(&self.weights) {
            total += w * softmax_cross_entropy(&m.forward(x)?, y)?;
        }
        Ok(total)
    }

    /// The ensemble's own prediction under its fusion scheme: argmax of the
    /// fused logits or probabilities; for loss fusion, the class minimizing
    /// the fused loss (argmax of `Σ w_k log p_k`).
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        match self.fusion {
            Fusion::Logits => Ok(argmax(self.fuse_logits(x)?.data())),
            Fusion::Predictions => Ok(argmax(self.fuse_predictions(x)?.data())),
            Fusion::Loss => {
                let classes = self.members[0].num_classes();
                let mut score = vec![0.0; classes];
                for (m, &w) in self.members.iter().zip(&self.weights) {
                    let logits = m.forward(x)?;
                    let probs = softmax(&logits);
                    for (s, &p) in score.iter_mut().zip(probs.data()) {
                        *s += w * math::ln(p.max(f64::MIN_POSITIVE));
                    }
                }
                Ok(argmax(&score))
            }
        }
    }

    /// Fused loss and its exact input gradient under the configured scheme.
    pub fn ensemble_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        self.check_label(y)?;
        match self.fusion {
            Fusion::Logits => {
                let fused = self.fuse_logits(x)?;
                let loss = softmax_cross_entropy(&fused, y)?;
                // dJ/dl_k = w_k · (softmax(fused) - onehot(y))
                let mut cot = softmax(&fused);
                cot.data_mut()[y] -= 1.0;
                let mut grad = Tensor::zeros(x.shape().to_vec());
                for (m, &w) in self.members.iter().zip(&self.weights) {
                    let member_grad = m.logits_vjp(x, &cot.scale(w))?;
                    grad = grad.add(&member_grad)?;
                }
                Ok((loss, grad))
            }
            Fusion::Predictions => {
                // J = -log p_y with p = Σ w_k softmax(l_k);
                // dJ/dl_k = (w_k p_{k,y} / p_y) · (p_k - onehot(y)).
                let member_probs: Vec<Tensor> = self
                    .members
                    .iter()
                    .map(|m| Ok(softmax(&m.forward(x)?)))
                    .collect::<Result<_>>()?;
                let mut fused = Tensor::zeros(vec![self.members[0].num_classes()]);
                for (p, &w) in member_probs.iter().zip(&self.weights) {
                    fused = fused.add_scaled(p, w)?;
                }
                let p_y = fused.data()[y].max(f64::MIN_POSITIVE);
                let loss = -math::ln(p_y);
                let mut grad = Tensor::zeros(x.shape().to_vec());
                for ((m, p_k), &w) in self.members.iter().zip(&member_probs).zip(&self.weights) {
                    let scale = w * p_k.data()[y] / p_y;
                    if scale == 0.0 {
                        continue;
                    }
                    let mut cot = p_k.scale(scale);
                    cot.data_mut()[y] -= scale;
                    grad = grad.add(&m.logits_vjp(x, &cot)?)?;
                }
                Ok((loss, grad))
            }
            Fusion::Loss => {
                // Linearity of differentiation: grad = Σ w_k ∇J_k.
                let mut loss = 0.0;
                let mut grad = Tensor::zeros(x.shape().to_vec());
                for (m, &w) in self.members.iter().zip(&self.weights) {
                    let (j_k, g_k) = m.input_gradient(x, y)?;
                    loss += w * j_k;
                    grad = grad.add_scaled(&g_k, w)?;
                }
                Ok((loss, grad))
            }
        }
    }
}

impl GradientSource for EnsembleSpec {
    fn input_shape(&self) -> &[usize] {
        self.members[0].input_shape()
    }

    fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }

    fn loss_and_input_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        self.ensemble_gradient(x, y)
    }

    fn describe(&self) -> String {
        let names: Vec<String> = self.members.iter().map(|m| m.label()).collect();
        format!("ens-{}({})", self.fusion, names.join("+"))
    }
}
