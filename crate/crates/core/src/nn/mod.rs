//! Minimal differentiable-layer toolkit.
//!
//! Every primitive comes as a pair of free functions (`*_forward`,
//! `*_backward`) plus, where the network needs state, a small layer struct
//! that caches what the backward pass reads. All ops are generic over
//! [`Scalar`] so the same code runs in `f32` for training and in `f64` for
//! finite-difference validation.

mod activation;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod linear;
mod loss;
mod optim;
mod tensor;

pub use activation::{
    add_inplace, concat_channels, global_avg_pool_backward, global_avg_pool_forward, relu_backward, relu_forward,
    split_channels, Relu,
};
pub use batchnorm::{BN_EPS, BN_MOMENTUM, batch_norm_backward, batch_norm_forward, BatchNorm2d, BnCache};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGeom};
pub use linear::{linear_backward, linear_forward, Linear};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{Adam, AdamConfig};
pub use tensor::{matmul, Parameter, Scalar, Tensor4};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{0} requires at least 2 classes")]
    TooFewClasses(&'static str),
    #[error("backward called before forward in {0}")]
    NoCache(&'static str),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::Shape {
        op,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Anything that owns parameters and (optionally) non-learned buffers.
pub trait Module<T: Scalar> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>));

    /// Running statistics and other persisted non-learned state.
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut Parameter<T>)) {}

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }
}
