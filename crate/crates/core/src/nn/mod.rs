//! A small dense neural toolkit: affine layers, layer normalization,
//! activations, binary cross-entropy, Adam, and a checkpoint container.
//! Gradients are written out by hand; every parameterized type doubles as
//! its own gradient accumulator.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError, Tensor};
pub use gradcheck::{check_gradients, relative_error, GradCheck, GRADCHECK_FINE_STEP, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use layers::{sigmoid, Activation, Dense, LayerNorm, LayerSpec, Mlp, MlpCache, MlpSpec, LAYER_NORM_EPS};
pub use loss::{bce_loss, BCE_CLAMP};

use rand::Rng;
use thiserror::Error;

use crate::rng::derived_rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch { expected, got })
    }
}

/// A named view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Anything made of parameter tensors. `tensors` and `tensors_mut` must
/// list the same tensors in the same order.
pub trait ParamSet {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s.data) {
                *d += v;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Entries i.i.d. uniform in `[-bound, bound]`.
pub fn init_uniform(len: usize, bound: f64, seed: u64) -> Vec<f64> {
    let mut rng = derived_rng(seed, crate::rng::STREAM_INIT, 0);
    uniform_vec(len, bound, &mut rng)
}

pub(crate) fn uniform_vec<R: Rng>(len: usize, bound: f64, rng: &mut R) -> Vec<f64> {
    assert!(bound > 0.0, "uniform bound must be positive");
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}
