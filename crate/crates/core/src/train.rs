//! Deterministic training of the model zoo.
//!
//! Plain SGD with classical momentum and a fixed learning rate; shuffling
//! and weight initialization are driven by a single seeded stream, so the
//! resulting parameter bytes are a pure function of (config, data).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{
    cross_entropy_logit_gradient, softmax_cross_entropy, zero_grads, Layer, LayerGrad, Model,
    ModelMeta,
};
use crate::tensor::Tensor;

/// The three supported architecture presets. All take `[1, 28, 28]` inputs
/// and emit 10 logits, so they can be mixed freely in one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchPreset {
    /// flatten -> dense 784x128 -> relu -> dense 128x10
    MlpSmall,
    /// flatten -> dense 784x512 -> relu -> dense 512x10
    MlpWide,
    /// conv 8@3x3 -> relu -> pool -> conv 16@3x3 -> relu -> pool -> flatten -> dense 400x10
    CnnSmall,
}

impl ArchPreset {
    pub const ALL: [ArchPreset; 3] = [ArchPreset::MlpSmall, ArchPreset::MlpWide, ArchPreset::CnnSmall];

    pub fn name(self) -> &'static str {
        match self {
            ArchPreset::MlpSmall => "mlp-small",
            ArchPreset::MlpWide => "mlp-wide",
            ArchPreset::CnnSmall => "cnn-small",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mlp-small" => Ok(ArchPreset::MlpSmall),
            "mlp-wide" => Ok(ArchPreset::MlpWide),
            "cnn-small" => Ok(ArchPreset::CnnSmall),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture preset '{other}' (expected mlp-small, mlp-wide, or cnn-small)"
            ))),
        }
    }
}

impl core::fmt::Display for ArchPreset {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Glorot-uniform sample: `uniform(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`.
fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let s = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..n).map(|_| rng.random_range(-s..s)).collect()
}

fn dense(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> Layer {
    Layer::Dense {
        weights: Tensor::from_parts(vec![out, inp], glorot(rng, inp, out, out * inp)),
        bias: Tensor::zeros(vec![out]),
    }
}

fn conv(rng: &mut ChaCha8Rng, oc: usize, ic: usize, k: usize) -> Layer {
    let fan_in = ic * k * k;
    let fan_out = oc * k * k;
    Layer::Conv2d {
        kernels: Tensor::from_parts(vec![oc, ic, k, k], glorot(rng, fan_in, fan_out, oc * ic * k * k)),
        bias: Tensor::zeros(vec![oc]),
    }
}

/// Freshly initialized (untrained) model for a preset, seeded.
pub fn build_preset(arch: ArchPreset, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = match arch {
        ArchPreset::MlpSmall => vec![
            Layer::Flatten,
            dense(&mut rng, 128, 784),
            Layer::Relu,
            dense(&mut rng, 10, 128),
        ],
        ArchPreset::MlpWide => vec![
            Layer::Flatten,
            dense(&mut rng, 512, 784),
            Layer::Relu,
            dense(&mut rng, 10, 512),
        ],
        ArchPreset::CnnSmall => vec![
            conv(&mut rng, 8, 1, 3),
            Layer::Relu,
            Layer::MaxPool2x2,
            conv(&mut rng, 16, 8, 3),
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            dense(&mut rng, 10, 400),
        ],
    };
    Model::new(
        vec![1, 28, 28],
        10,
        layers,
        ModelMeta {
            arch: arch.name().into(),
            seed,
        },
    )
    .expect("preset layer stacks are consistent")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: ArchPreset,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Momentum coefficient for the parameter updates (not the attack decay).
    pub momentum: f64,
    /// Description of the training data, echoed into manifests.
    pub dataset: String,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean training loss per epoch, in order.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Fraction of examples the model classifies correctly.
pub fn accuracy(model: &Model, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut correct = 0usize;
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        if model.predict(img)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn apply_update(model: &mut Model, velocity: &mut [LayerGrad], grads: &[LayerGrad], momentum: f64, lr: f64) {
    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        match (layer, &mut velocity[i], &grads[i]) {
            (
                Layer::Dense { weights, bias },
                LayerGrad::Dense { dw: vw, db: vb },
                LayerGrad::Dense { dw, db },
            ) => {
                step_params(weights.data_mut(), vw, dw, momentum, lr);
                step_params(bias.data_mut(), vb, db, momentum, lr);
            }
            (
                Layer::Conv2d { kernels, bias },
                LayerGrad::Conv2d { dk: vk, db: vb },
                LayerGrad::Conv2d { dk, db },
            ) => {
                step_params(kernels.data_mut(), vk, dk, momentum, lr);
                step_params(bias.data_mut(), vb, db, momentum, lr);
            }
            _ => {}
        }
    }
}

fn step_params(params: &mut [f64], velocity: &mut [f64], grad: &[f64], momentum: f64, lr: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

fn scale_grads(grads: &mut [LayerGrad], c: f64) {
    for g in grads {
        match g {
            LayerGrad::Dense { dw, db } | LayerGrad::Conv2d { dk: dw, db } => {
                dw.iter_mut().for_each(|v| *v *= c);
                db.iter_mut().for_each(|v| *v *= c);
            }
            LayerGrad::None => {}
        }
    }
}

fn reset_grads(grads: &mut [LayerGrad]) {
    for g in grads {
        match g {
            LayerGrad::Dense { dw, db } | LayerGrad::Conv2d { dk: dw, db } => {
                dw.iter_mut().for_each(|v| *v = 0.0);
                db.iter_mut().for_each(|v| *v = 0.0);
            }
            LayerGrad::None => {}
        }
    }
}

/// Trains a preset on `train_set`, optionally reporting accuracy on
/// `test_set`. Deterministic: the same (config, data) produce bit-identical
/// parameters.
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut model = build_preset(config.arch, config.seed);
    if train_set.image_shape() != Some(model.input_shape()) {
        return Err(Error::ShapeMismatch {
            expected: model.input_shape().to_vec(),
            found: train_set.image_shape().unwrap_or(&[]).to_vec(),
        });
    }
    if let Some(&bad) = train_set.labels.iter().find(|&&l| l >= model.num_classes()) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes: model.num_classes(),
        });
    }

    // Initialization consumed ChaCha8(seed) inside build_preset; shuffling
    // gets its own stream so the two can never interleave.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = zero_grads(&model);
    let mut batch_grads = zero_grads(&model);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            reset_grads(&mut batch_grads);
            for &idx in batch {
                let x = &train_set.images[idx];
                let y = train_set.labels[idx];
                let acts = model.forward_cached(x)?;
                let logits = acts.last().expect("nonempty");
                loss_sum += softmax_cross_entropy(logits, y)?;
                let cot = cross_entropy_logit_gradient(logits, y);
                model.backward(&acts, cot, Some(&mut batch_grads));
            }
            scale_grads(&mut batch_grads, 1.0 / batch.len() as f64);
            apply_update(
                &mut model,
                &mut velocity,
                &batch_grads,
                config.momentum,
                config.learning_rate,
            );
        }
        let epoch_loss = loss_sum / train_set.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        epoch_losses.push(epoch_loss);
    }

    let train_accuracy = accuracy(&model, train_set)?;
    let test_accuracy = match test_set {
        Some(ts) => Some(accuracy(&model, ts)?),
        None => None,
    };
    Ok(TrainOutcome {
        model,
        epoch_losses,
        train_accuracy,
        test_accuracy,
    })
}
