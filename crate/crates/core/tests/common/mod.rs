//! Shared oracles for the integration tests.
//!
//! The gradient oracle is central finite differences over the public loss
//! API; it never touches the reverse-mode path it is used to check. The
//! kink-margin walker re-implements the forward pass from the public layer
//! data so that probe points sitting within a finite-difference step of a
//! ReLU kink or a pooling tie can be rejected up front (the loss is not
//! differentiable there, so no gradient check is meaningful).

use advgrad_core::nn::{softmax_cross_entropy, Layer, Model, ModelMeta};
use advgrad_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of `f` at `x` with step `h`, one coordinate at
/// a time.
pub fn finite_difference_gradient<F>(f: F, x: &Tensor, h: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut plus = x.data().to_vec();
        let mut minus = x.data().to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = f(&Tensor::new(x.shape().to_vec(), plus).unwrap());
        let fm = f(&Tensor::new(x.shape().to_vec(), minus).unwrap());
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad).unwrap()
}

/// Max over coordinates of `|a - b| / max(|a|, |b|, 1e-3)`. The floor guards
/// vanishing denominators; coordinates below it are effectively compared
/// absolutely at 1e-9 when the bound is 1e-6.
pub fn max_relative_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Independent forward walk reporting how close the point sits to a ReLU
/// kink or a max-pool tie. Distinct from the production forward on purpose.
pub fn min_kink_margin(model: &Model, x: &Tensor) -> f64 {
    let mut margin = f64::INFINITY;
    let mut shape = x.shape().to_vec();
    let mut act = x.data().to_vec();
    for layer in model.layers() {
        match layer {
            Layer::Dense { weights, bias } => {
                let dims = weights.shape();
                let (out, inp) = (dims[0], dims[1]);
                let mut next = vec![0.0; out];
                for o in 0..out {
                    let mut acc = bias.data()[o];
                    for i in 0..inp {
                        acc += weights.data()[o * inp + i] * act[i];
                    }
                    next[o] = acc;
                }
                act = next;
                shape = vec![out];
            }
            Layer::Relu => {
                for &v in &act {
                    margin = margin.min(v.abs());
                }
                act = act.iter().map(|&v| v.max(0.0)).collect();
            }
            Layer::Conv2d { kernels, bias } => {
                let kd = kernels.shape();
                let (oc, ic, kh, kw) = (kd[0], kd[1], kd[2], kd[3]);
                let (h, w) = (shape[1], shape[2]);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let mut next = vec![0.0; oc * oh * ow];
                for o in 0..oc {
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut acc = bias.data()[o];
                            for c in 0..ic {
                                for a in 0..kh {
                                    for b in 0..kw {
                                        acc += kernels.data()[((o * ic + c) * kh + a) * kw + b]
                                            * act[(c * h + i + a) * w + j + b];
                                    }
                                }
                            }
                            next[(o * oh + i) * ow + j] = acc;
                        }
                    }
                }
                act = next;
                shape = vec![oc, oh, ow];
            }
            Layer::MaxPool2x2 => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (oh, ow) = (h / 2, w / 2);
                let mut next = vec![0.0; c * oh * ow];
                for ch in 0..c {
                    for i in 0..oh {
                        for j in 0..ow {
                            let base = (ch * h + 2 * i) * w + 2 * j;
                            let mut vals =
                                [act[base], act[base + 1], act[base + w], act[base + w + 1]];
                            vals.sort_by(f64::total_cmp);
                            // Gap between the winner and the runner-up: a tie
                            // this close can flip under the FD step.
                            margin = margin.min(vals[3] - vals[2]);
                            next[(ch * oh + i) * ow + j] = vals[3];
                        }
                    }
                }
                act = next;
                shape = vec![c, oh, ow];
            }
            Layer::Flatten => {
                shape = vec![act.len()];
            }
        }
    }
    margin
}

pub struct ModelGen {
    rng: ChaCha8Rng,
    counter: u64,
}

impl ModelGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter: 0,
        }
    }

    fn weights(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        let s = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-s..s)).collect();
        Tensor::new(shape, data).unwrap()
    }

    fn bias(&mut self, n: usize) -> Tensor {
        let data = (0..n).map(|_| self.rng.random_range(-0.1..0.1)).collect();
        Tensor::new(vec![n], data).unwrap()
    }

    /// Small random MLP (1-3 dense layers, optional ReLUs) over a flat input.
    pub fn random_dense_model(&mut self) -> Model {
        self.counter += 1;
        let input = self.rng.random_range(4..16usize);
        let classes = self.rng.random_range(2..6usize);
        let depth = self.rng.random_range(1..4usize);
        let mut layers = Vec::new();
        let mut cur = input;
        for d in 0..depth {
            let out = if d + 1 == depth {
                classes
            } else {
                self.rng.random_range(4..33usize)
            };
            let weights = self.weights(vec![out, cur], cur);
            let bias = self.bias(out);
            layers.push(Layer::Dense { weights, bias });
            if d + 1 < depth {
                layers.push(Layer::Relu);
            }
            cur = out;
        }
        Model::new(
            vec![input],
            classes,
            layers,
            ModelMeta {
                arch: "rand-mlp".into(),
                seed: self.counter,
            },
        )
        .unwrap()
    }

    /// Small random CNN: conv -> relu -> pool -> flatten -> dense.
    pub fn random_conv_model(&mut self) -> Model {
        self.counter += 1;
        let side = self.rng.random_range(6..9usize);
        let in_ch = self.rng.random_range(1..3usize);
        let out_ch = self.rng.random_range(2..5usize);
        let k = self.rng.random_range(2..4usize);
        let classes = self.rng.random_range(2..5usize);
        let conv_side = side - k + 1;
        let pooled = conv_side / 2;
        let flat = out_ch * pooled * pooled;
        let layers = vec![
            Layer::Conv2d {
                kernels: self.weights(vec![out_ch, in_ch, k, k], in_ch * k * k),
                bias: self.bias(out_ch),
            },
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense {
                weights: self.weights(vec![classes, flat], flat),
                bias: self.bias(classes),
            },
        ];
        Model::new(
            vec![in_ch, side, side],
            classes,
            layers,
            ModelMeta {
                arch: "rand-cnn".into(),
                seed: self.counter,
            },
        )
        .unwrap()
    }

    /// Mix of the two families.
    pub fn random_model(&mut self) -> Model {
        if self.rng.random_bool(0.5) {
            self.random_dense_model()
        } else {
            self.random_conv_model()
        }
    }

    /// Input in `[0, 1]` sitting at least `margin` away from every ReLU kink
    /// and pooling tie of the model, so central differences stay on one
    /// smooth piece.
    pub fn safe_input(&mut self, model: &Model, margin: f64) -> Tensor {
        loop {
            let n: usize = model.input_shape().iter().product();
            let data: Vec<f64> = (0..n).map(|_| self.rng.random_range(0.0..1.0)).collect();
            let x = Tensor::new(model.input_shape().to_vec(), data).unwrap();
            if min_kink_margin(model, &x) > margin {
                return x;
            }
        }
    }

    pub fn random_label(&mut self, model: &Model) -> usize {
        self.rng.random_range(0..model.num_classes())
    }
}

/// Loss of a single model through the public API, as a closure for the FD
/// oracle.
pub fn model_loss(model: &Model, y: usize) -> impl Fn(&Tensor) -> f64 + '_ {
    move |x| softmax_cross_entropy(&model.forward(x).unwrap(), y).unwrap()
}
