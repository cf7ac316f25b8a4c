//! Minimal differentiable-computation substrate: the layer set, Adam, and
//! a finite-difference gradient checker.
//!
//! Layers are plain structs holding their parameters and whatever forward
//! activations their backward pass needs. `forward` in [`Mode::Train`]
//! caches; `backward` consumes the cache and accumulates into each
//! parameter's `grad`. Everything is `f64` and single-threaded within one
//! forward/backward pass.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod dropout;
mod gradcheck;
mod linear;
mod noise;
mod pool;
mod store;
mod upsample;

pub use activation::LeakyRelu;
pub use adam::{Adam, AdamConfig};
pub use batchnorm::BatchNorm2d;
pub use conv::Conv2d;
pub use dropout::Dropout;
pub use gradcheck::{grad_check, sample_coords, DEFAULT_FD_STEP};
pub use linear::FullyConnected;
pub use noise::NoisePerturbation;
pub use pool::GlobalAvgPool;
pub use store::{read_tensor_map, write_tensor_map};
pub use upsample::BilinearUpsample;

use crate::tensor::Tensor;
use rand::Rng;

/// Forward-pass mode. Train caches activations, uses batch statistics and
/// applies noise/dropout. Frozen is a differentiable eval: running statistics
/// and no stochastic layers, but caches are kept so backward works (used by
/// gradient checks and the σ=0 equivalence tests). Eval is deterministic and
/// cache-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Frozen,
    Eval,
}

impl Mode {
    /// Whether backward-pass caches are recorded.
    pub fn caches(self) -> bool {
        self != Mode::Eval
    }

    /// Whether stochastic layers (noise, dropout) are active.
    pub fn stochastic(self) -> bool {
        self == Mode::Train
    }
}

/// A trainable value paired with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Elementwise logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 1.0 - 1e-12);
        assert!(sigmoid(-40.0) < 1e-12);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let t = init_uniform(&[16, 4], 4, &mut rng);
        let bound = 0.5;
        assert!(t.data().iter().all(|v| v.abs() < bound));
        assert!(t.data().iter().any(|v| v.abs() > bound * 0.5));
    }
}
