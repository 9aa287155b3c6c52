//! Fixed-architecture neural network kernels with hand-written backward passes.
//!
//! Every layer works on batches laid out as `[batch, features]` (dense and
//! recurrent) or `[batch, channels, rows, cols]` (convolution). Parameters are
//! generic over the scalar so a trained `f64` network can be cast to `f32` for
//! inference. Gradients are stored in a value of the same layer type.

mod adamw;
mod conv;
mod dense;
mod gradcheck;
mod gru;
mod tensors;

pub use adamw::{cosine_lr, AdamW};
pub use conv::{Conv2d, MaxPool2};
pub use dense::Dense;
pub use gradcheck::{finite_diff_check, finite_diff_vector, rel_error, FdReport, FD_ABS_FLOOR};
pub use gru::{GruCell, GruSeqCache, GruStack};
pub use tensors::{grad_norm, load_tensors, read_tensors, scale_all, write_tensors, zero_all, Params, TensorData, TensorKind, TensorView};

use std::fmt::Debug;

use ndarray::{Array, Array2, ArrayView, Dimension, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;

pub trait Scalar: LinalgScalar + Float + NumAssign + FromPrimitive + ScalarOperand + Debug + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("representable constant")
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu<T: Scalar, D: Dimension>(x: &ArrayView<T, D>) -> Array<T, D> {
    let s = lit::<T>(LEAKY_SLOPE);
    x.mapv(|v| if v > T::zero() { v } else { v * s })
}

/// Gradient through leaky-ReLU given the pre-activation.
pub fn leaky_relu_backward<T: Scalar, D: Dimension>(pre: &ArrayView<T, D>, dy: &ArrayView<T, D>) -> Array<T, D> {
    let s = lit::<T>(LEAKY_SLOPE);
    let mut out = dy.to_owned();
    out.zip_mut_with(pre, |g, &p| {
        if p <= T::zero() {
            *g = *g * s
        }
    });
    out
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Inverted dropout mask: entries are 0 or `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Dropout policy for one forward pass. Masks are drawn from `rng` only in
/// training mode, so inference is deterministic.
pub enum Mode<'a> {
    Eval,
    Train { p: f64, rng: &'a mut dyn rand::RngCore },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    pub fn mask<T: Scalar>(&mut self, rows: usize, cols: usize) -> Option<Array2<T>> {
        match self {
            Mode::Eval => None,
            Mode::Train { p, rng } => {
                if *p <= 0.0 {
                    return None;
                }
                Some(dropout_mask(rows, cols, *p, rng).mapv(lit::<T>))
            }
        }
    }
}
