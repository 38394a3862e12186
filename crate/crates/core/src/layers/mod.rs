//! Layer primitives with hand-written forward and backward passes.
//!
//! Activations are laid out as `[batch, channels, time, width]`. Forward
//! passes never mutate the layer; anything needed for the backward pass is
//! returned as an explicit cache so that concurrent passes over a frozen
//! model are independent.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod loss;
mod reshape;

pub use activation::{Dropout, DropoutCache, Relu};
pub use batchnorm::{BatchNorm, BatchNormCache, BN_EPSILON, BN_MOMENTUM};
pub use conv::{Conv2d, Padding};
pub use dense::Dense;
pub use loss::{cross_entropy, softmax, softmax_cross_entropy_backward, PROB_FLOOR};
pub use reshape::{concat_width, gap_time, gap_time_backward, split_width};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout active.
    Train,
    /// Running statistics in batch norm, dropout off.
    Inference,
    /// Batch statistics in batch norm, dropout off. Used for gradient checks.
    Deterministic,
}

/// Per-pass state: the mode and the random stream consumed by dropout.
pub struct Ctx {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Ctx {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn inference() -> Self {
        Ctx::new(Mode::Inference, 0)
    }
}

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub(crate) m: Tensor,
    pub(crate) v: Tensor,
    pub(crate) step: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Param {
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Fan-in scaled uniform ("He uniform") initialization.
pub(crate) fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit))
}

/// Common interface of the single-input layers.
pub trait Layer {
    type Cache;

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<(Tensor, Self::Cache)>;

    /// Returns the input gradient and, when `param_grads` is set, one
    /// gradient per entry of [`Layer::params`].
    fn backward(&self, cache: &Self::Cache, dy: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>);

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn accumulate(&mut self, grads: &[Tensor]) {
        for (p, g) in self.params_mut().into_iter().zip(grads) {
            p.grad.add_assign(g);
        }
    }
}
