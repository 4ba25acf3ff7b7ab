//! Gradient-based adversarial attacks against small feed-forward classifiers.
//!
//! The crate is organized around a handful of small modules:
//!
//! - [`tensor`]: dense row-major `f64` arrays with the norms and elementwise
//!   operations the attack loops need.
//! - [`nn`]: a feed-forward network runtime (dense / ReLU / conv / pool /
//!   flatten) with exact reverse-mode gradients of the softmax cross-entropy
//!   loss with respect to the input.
//! - [`train`]: deterministic SGD-with-momentum training of the three
//!   supported architecture presets.
//! - [`data`]: dataset containers, synthetic generators, and evaluation
//!   subset selection.
//! - [`attacks`]: one-step, iterative, and momentum-iterative attacks under
//!   L∞ and L2 budgets, non-targeted and targeted, with per-iteration traces.
//! - [`ensemble`]: multi-model attack support with logits, prediction, and
//!   loss fusion.
//!
//! Everything here is pure computation on owned buffers; file formats, CSV
//! reports, and the CLI live in the companion `advgrad` crate. The crate is
//! `no_std`-compatible (with `alloc`) when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attacks;
pub mod data;
pub mod ensemble;
mod error;
mod math;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
