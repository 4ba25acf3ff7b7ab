//! Feed-forward network runtime.
//!
//! A [`Model`] is an ordered list of [`Layer`]s mapping an input tensor to a
//! logits vector. The module provides deterministic forward evaluation,
//! numerically stabilized softmax cross-entropy, and exact reverse-mode
//! gradients of that loss with respect to the input (and, for the trainer,
//! with respect to the parameters).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// A single network layer.
///
/// Convolutions are stride-1 with valid padding; pooling is max over 2x2
/// windows with stride 2 (trailing odd rows/columns are dropped).
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Fully connected: `weights` is `[out, in]` row-major, `bias` is `[out]`.
    Dense { weights: Tensor, bias: Tensor },
    Relu,
    /// `kernels` is `[out_ch, in_ch, kh, kw]` row-major, `bias` is `[out_ch]`.
    Conv2d { kernels: Tensor, bias: Tensor },
    MaxPool2x2,
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
        }
    }

    /// Output shape for a given input shape, or an error describing the
    /// inconsistency.
    pub fn output_shape(&self, input: &[usize]) -> core::result::Result<Vec<usize>, String> {
        match self {
            Layer::Dense { weights, bias } => {
                let dims = weights.shape();
                if dims.len() != 2 {
                    return Err(format!("dense weights must be 2-d, got {:?}", dims));
                }
                let (out, inp) = (dims[0], dims[1]);
                if bias.shape() != [out] {
                    return Err(format!(
                        "dense bias shape {:?} does not match {} outputs",
                        bias.shape(),
                        out
                    ));
                }
                if input != [inp] {
                    return Err(format!(
                        "dense expects input [{}], got {:?}",
                        inp, input
                    ));
                }
                Ok(vec![out])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Conv2d { kernels, bias } => {
                let dims = kernels.shape();
                if dims.len() != 4 {
                    return Err(format!("conv kernels must be 4-d, got {:?}", dims));
                }
                let (oc, ic, kh, kw) = (dims[0], dims[1], dims[2], dims[3]);
                if bias.shape() != [oc] {
                    return Err(format!(
                        "conv bias shape {:?} does not match {} channels",
                        bias.shape(),
                        oc
                    ));
                }
                if input.len() != 3 || input[0] != ic {
                    return Err(format!(
                        "conv expects input [{}, h, w], got {:?}",
                        ic, input
                    ));
                }
                let (h, w) = (input[1], input[2]);
                if h < kh || w < kw {
                    return Err(format!(
                        "conv kernel {}x{} larger than input {}x{}",
                        kh, kw, h, w
                    ));
                }
                Ok(vec![oc, h - kh + 1, w - kw + 1])
            }
            Layer::MaxPool2x2 => {
                if input.len() != 3 {
                    return Err(format!("maxpool expects [c, h, w], got {:?}", input));
                }
                let (c, h, w) = (input[0], input[1], input[2]);
                if h < 2 || w < 2 {
                    return Err(format!("maxpool needs at least 2x2 input, got {}x{}", h, w));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// Architecture name and training seed carried alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub arch: String,
    pub seed: u64,
}

/// An immutable feed-forward classifier producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    num_classes: usize,
    layers: Vec<Layer>,
    meta: ModelMeta,
}

impl Model {
    /// Validates that the layer stack maps `input_shape` to a
    /// `[num_classes]` logits vector and that all parameters are consistent.
    pub fn new(
        input_shape: Vec<usize>,
        num_classes: usize,
        layers: Vec<Layer>,
        meta: ModelMeta,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidModel("num_classes must be positive".into()));
        }
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|msg| {
                Error::InvalidModel(format!("layer {} ({}): {}", i, layer.kind(), msg))
            })?;
        }
        if shape != [num_classes] {
            return Err(Error::InvalidModel(format!(
                "layer stack produces {:?}, expected [{}]",
                shape, num_classes
            )));
        }
        Ok(Self {
            input_shape,
            num_classes,
            layers,
            meta,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    /// Short handle used in reports: `<arch>-s<seed>`.
    pub fn label(&self) -> String {
        format!("{}-s{}", self.meta.arch, self.meta.seed)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Logits for a single input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = forward_layer(layer, &cur);
        }
        Ok(cur)
    }

    /// Predicted class: argmax of the logits, ties broken by lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        let logits = self.forward(x)?;
        Ok(argmax(logits.data()))
    }

    /// Forward pass keeping every intermediate activation (the input of each
    /// layer) for a subsequent backward pass.
    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = forward_layer(layer, acts.last().expect("nonempty"));
            acts.push(next);
        }
        Ok(acts)
    }

    /// Reverse-mode sweep from a cotangent on the logits down to the input.
    /// When `param_grads` is provided, per-layer parameter gradients are
    /// accumulated into it (the trainer's path).
    pub(crate) fn backward(
        &self,
        acts: &[Tensor],
        d_logits: Tensor,
        mut param_grads: Option<&mut [LayerGrad]>,
    ) -> Tensor {
        let mut d = d_logits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let grad_slot = param_grads.as_deref_mut().map(|g| &mut g[i]);
            d = backward_layer(layer, &acts[i], &d, grad_slot);
        }
        d
    }

    /// Vector-Jacobian product: gradient w.r.t. the input of
    /// `cotangent . logits(x)`.
    pub fn logits_vjp(&self, x: &Tensor, cotangent: &Tensor) -> Result<Tensor> {
        if cotangent.shape() != [self.num_classes] {
            return Err(Error::ShapeMismatch {
                expected: vec![self.num_classes],
                found: cotangent.shape().to_vec(),
            });
        }
        let acts = self.forward_cached(x)?;
        Ok(self.backward(&acts, cotangent.clone(), None))
    }

    /// Loss and exact input gradient of the softmax cross-entropy at `(x, y)`.
    pub fn input_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        let acts = self.forward_cached(x)?;
        let logits = acts.last().expect("nonempty");
        let loss = softmax_cross_entropy(logits, y)?;
        let cot = cross_entropy_logit_gradient(logits, y);
        let grad = self.backward(&acts, cot, None);
        Ok((loss, grad))
    }
}

/// Index of the largest element, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stabilized softmax.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|&v| math::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::from_parts(logits.shape().to_vec(), exps.iter().map(|&e| e / sum).collect())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&v| math::exp(v - max)).sum();
    max + math::ln(sum)
}

/// Softmax cross-entropy `-log softmax(logits)[y]`, stabilized so that
/// arbitrarily large logits cannot overflow.
pub fn softmax_cross_entropy(logits: &Tensor, y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: y,
            num_classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits.data()) - logits.data()[y])
}

/// Gradient of the softmax cross-entropy w.r.t. the logits:
/// `softmax(logits) - onehot(y)`.
pub(crate) fn cross_entropy_logit_gradient(logits: &Tensor, y: usize) -> Tensor {
    let mut cot = softmax(logits);
    cot.data_mut()[y] -= 1.0;
    cot
}

/// Per-layer parameter gradients, aligned with `Model::layers`.
#[derive(Debug, Clone)]
pub(crate) enum LayerGrad {
    Dense { dw: Vec<f64>, db: Vec<f64> },
    Conv2d { dk: Vec<f64>, db: Vec<f64> },
    None,
}

pub(crate) fn zero_grads(model: &Model) -> Vec<LayerGrad> {
    model
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Dense { weights, bias } => LayerGrad::Dense {
                dw: vec![0.0; weights.len()],
                db: vec![0.0; bias.len()],
            },
            Layer::Conv2d { kernels, bias } => LayerGrad::Conv2d {
                dk: vec![0.0; kernels.len()],
                db: vec![0.0; bias.len()],
            },
            _ => LayerGrad::None,
        })
        .collect()
}

fn forward_layer(layer: &Layer, input: &Tensor) -> Tensor {
    match layer {
        Layer::Dense { weights, bias } => {
            let dims = weights.shape();
            let (out, inp) = (dims[0], dims[1]);
            let w = weights.data();
            let x = input.data();
            let mut y = bias.data().to_vec();
            for o in 0..out {
                let row = &w[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for i in 0..inp {
                    acc += row[i] * x[i];
                }
                y[o] += acc;
            }
            Tensor::from_parts(vec![out], y)
        }
        Layer::Relu => {
            let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            Tensor::from_parts(input.shape().to_vec(), data)
        }
        Layer::Conv2d { kernels, bias } => {
            let kd = kernels.shape();
            let (oc, ic, kh, kw) = (kd[0], kd[1], kd[2], kd[3]);
            let xs = input.shape();
            let (h, w) = (xs[1], xs[2]);
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            let k = kernels.data();
            let x = input.data();
            let mut y = vec![0.0; oc * oh * ow];
            for o in 0..oc {
                let b = bias.data()[o];
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b;
                        for c in 0..ic {
                            for a in 0..kh {
                                let krow = &k[((o * ic + c) * kh + a) * kw..];
                                let xrow = &x[(c * h + i + a) * w + j..];
                                for bb in 0..kw {
                                    acc += krow[bb] * xrow[bb];
                                }
                            }
                        }
                        y[(o * oh + i) * ow + j] = acc;
                    }
                }
            }
            Tensor::from_parts(vec![oc, oh, ow], y)
        }
        Layer::MaxPool2x2 => {
            let xs = input.shape();
            let (c, h, w) = (xs[0], xs[1], xs[2]);
            let (oh, ow) = (h / 2, w / 2);
            let x = input.data();
            let mut y = vec![0.0; c * oh * ow];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let base = (ch * h + 2 * i) * w + 2 * j;
                        let m = x[base]
                            .max(x[base + 1])
                            .max(x[base + w])
                            .max(x[base + w + 1]);
                        y[(ch * oh + i) * ow + j] = m;
                    }
                }
            }
            Tensor::from_parts(vec![c, oh, ow], y)
        }
        Layer::Flatten => Tensor::from_parts(vec![input.len()], input.data().to_vec()),
    }
}

fn backward_layer(
    layer: &Layer,
    input: &Tensor,
    d_out: &Tensor,
    grads: Option<&mut LayerGrad>,
) -> Tensor {
    match layer {
        Layer::Dense { weights, .. } => {
            let dims = weights.shape();
            let (out, inp) = (dims[0], dims[1]);
            let w = weights.data();
            let dy = d_out.data();
            let x = input.data();
            let mut dx = vec![0.0; inp];
            for o in 0..out {
                let g = dy[o];
                let row = &w[o * inp..(o + 1) * inp];
                for i in 0..inp {
                    dx[i] += row[i] * g;
                }
            }
            if let Some(LayerGrad::Dense { dw, db }) = grads {
                for o in 0..out {
                    let g = dy[o];
                    db[o] += g;
                    let drow = &mut dw[o * inp..(o + 1) * inp];
                    for i in 0..inp {
                        drow[i] += g * x[i];
                    }
                }
            }
            Tensor::from_parts(vec![inp], dx)
        }
        Layer::Relu => {
            // Subgradient 0 at exactly 0, matching sign(0) = 0 elsewhere.
            let data = input
                .data()
                .iter()
                .zip(d_out.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Tensor::from_parts(input.shape().to_vec(), data)
        }
        Layer::Conv2d { kernels, .. } => {
            let kd = kernels.shape();
            let (oc, ic, kh, kw) = (kd[0], kd[1], kd[2], kd[3]);
            let xs = input.shape();
            let (h, w) = (xs[1], xs[2]);
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            let k = kernels.data();
            let x = input.data();
            let dy = d_out.data();
            let mut dx = vec![0.0; input.len()];
            let mut grad_slot = grads;
            for o in 0..oc {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = dy[(o * oh + i) * ow + j];
                        if g == 0.0 {
                            continue;
                        }
                        for c in 0..ic {
                            for a in 0..kh {
                                let krow = &k[((o * ic + c) * kh + a) * kw..];
                                let dxrow = &mut dx[(c * h + i + a) * w + j..];
                                for bb in 0..kw {
                                    dxrow[bb] += krow[bb] * g;
                                }
                            }
                        }
                        if let Some(LayerGrad::Conv2d { dk, db }) = grad_slot.as_deref_mut() {
                            db[o] += g;
                            for c in 0..ic {
                                for a in 0..kh {
                                    let dkrow = &mut dk[((o * ic + c) * kh + a) * kw..];
                                    let xrow = &x[(c * h + i + a) * w + j..];
                                    for bb in 0..kw {
                                        dkrow[bb] += xrow[bb] * g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Tensor::from_parts(xs.to_vec(), dx)
        }
        Layer::MaxPool2x2 => {
            let xs = input.shape();
            let (c, h, w) = (xs[0], xs[1], xs[2]);
            let (oh, ow) = (h / 2, w / 2);
            let x = input.data();
            let dy = d_out.data();
            let mut dx = vec![0.0; input.len()];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let base = (ch * h + 2 * i) * w + 2 * j;
                        // First window element attaining the max receives the
                        // gradient; same scan order as the forward pass.
                        let idxs = [base, base + 1, base + w, base + w + 1];
                        let mut best = idxs[0];
                        for &cand in &idxs[1..] {
                            if x[cand] > x[best] {
                                best = cand;
                            }
                        }
                        dx[best] += dy[(ch * oh + i) * ow + j];
                    }
                }
            }
            Tensor::from_parts(xs.to_vec(), dx)
        }
        Layer::Flatten => Tensor::from_parts(input.shape().to_vec(), d_out.data().to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ModelMeta {
        ModelMeta {
            arch: "test".into(),
            seed: 0,
        }
    }

    fn identity_dense(n: usize) -> Layer {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Layer::Dense {
            weights: Tensor::new(vec![n, n], w).unwrap(),
            bias: Tensor::zeros(vec![n]),
        }
    }

    #[test]
    fn identity_dense_forward() {
        let m = Model::new(vec![2], 2, vec![identity_dense(2)], meta()).unwrap();
        let x = Tensor::from_vec(vec![0.3, 0.7]).unwrap();
        let logits = m.forward(&x).unwrap();
        assert_eq!(logits.data(), &[0.3, 0.7]);
    }

    #[test]
    fn relu_forward() {
        let m = Model::new(vec![2], 2, vec![Layer::Relu], meta()).unwrap();
        let x = Tensor::from_vec(vec![-1.0, 2.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn one_by_one_identity_convolution() {
        let conv = Layer::Conv2d {
            kernels: Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
            bias: Tensor::zeros(vec![1]),
        };
        let img = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let out = forward_layer(&conv, &img);
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn cross_entropy_examples() {
        let logits = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        let j = softmax_cross_entropy(&logits, 0).unwrap();
        assert!((j - core::f64::consts::LN_2).abs() < 1e-12);

        let saturated = Tensor::from_vec(vec![1000.0, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&saturated, 0).unwrap().abs() < 1e-12);

        let wrong = Tensor::from_vec(vec![0.0, 1000.0]).unwrap();
        let j = softmax_cross_entropy(&wrong, 0).unwrap();
        assert!((j - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let logits = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn predict_tie_breaks_to_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.9]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        let m = Model::new(vec![3], 3, vec![identity_dense(3)], meta()).unwrap();
        let x = Tensor::from_vec(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), 0);
    }

    #[test]
    fn linear_model_closed_form_gradient() {
        // W = I, b = 0, x = [0, 0], y = 0: grad = W^T (softmax - onehot) = [-0.5, 0.5].
        let m = Model::new(vec![2], 2, vec![identity_dense(2)], meta()).unwrap();
        let x = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        let (loss, grad) = m.input_gradient(&x, 0).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad.data()[0] + 0.5).abs() < 1e-15);
        assert!((grad.data()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_logits_give_zero_gradient() {
        let zero_dense = Layer::Dense {
            weights: Tensor::zeros(vec![2, 3]),
            bias: Tensor::from_vec(vec![0.2, -0.1]).unwrap(),
        };
        let m = Model::new(vec![3], 2, vec![zero_dense], meta()).unwrap();
        let x = Tensor::from_vec(vec![0.4, 0.5, 0.6]).unwrap();
        let (_, grad) = m.input_gradient(&x, 1).unwrap();
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shift_invariance_of_cross_entropy() {
        let logits = Tensor::from_vec(vec![0.3, -1.2, 2.0]).unwrap();
        for shift in [-500.0, -3.0, 0.0, 7.5, 300.0] {
            let shifted = logits.scale(1.0).add_scaled(
                &Tensor::from_parts(vec![3], vec![1.0, 1.0, 1.0]),
                shift,
            )
            .unwrap();
            let a = softmax_cross_entropy(&logits, 1).unwrap();
            let b = softmax_cross_entropy(&shifted, 1).unwrap();
            assert!((a - b).abs() < 1e-9, "shift {shift}: {a} vs {b}");
        }
    }

    #[test]
    fn model_validation_names_the_offending_layer() {
        let bad = Model::new(
            vec![3],
            2,
            vec![
                identity_dense(3),
                Layer::Dense {
                    weights: Tensor::zeros(vec![2, 4]),
                    bias: Tensor::zeros(vec![2]),
                },
            ],
            meta(),
        );
        match bad {
            Err(Error::InvalidModel(msg)) => assert!(msg.contains("layer 1"), "{msg}"),
            other => panic!("expected InvalidModel, got {:?}", other),
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Model::new(vec![2], 2, vec![identity_dense(2), Layer::Relu], meta()).unwrap();
        let x = Tensor::from_vec(vec![0.123456, -0.7]).unwrap();
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
