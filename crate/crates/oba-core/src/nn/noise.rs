use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Mode;
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Additive Gaussian perturbation N(mu, sigma^2), active only in train mode.
/// The gradient passes through unchanged.
pub struct NoisePerturbation {
    mu: f64,
    sigma: f64,
}

impl NoisePerturbation {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(ObaError::InvalidArg(format!(
                "noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if !mu.is_finite() {
            return Err(ObaError::InvalidArg(format!(
                "noise mu must be finite, got {mu}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor {
        if !mode.stochastic() || (self.sigma == 0.0 && self.mu == 0.0) {
            return x.clone();
        }
        let normal = Normal::new(self.mu, self.sigma).expect("checked in new");
        let mut out = x.clone();
        for v in out.data_mut() {
            *v += normal.sample(rng);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn eval_and_zero_sigma_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let noisy = NoisePerturbation::new(0.0, 0.5).unwrap();
        assert_eq!(noisy.forward(&x, Mode::Eval, &mut rng).data(), x.data());
        let silent = NoisePerturbation::new(0.0, 0.0).unwrap();
        assert_eq!(silent.forward(&x, Mode::Train, &mut rng).data(), x.data());
    }

    #[test]
    fn train_perturbation_has_expected_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::zeros(&[10000]);
        let noise = NoisePerturbation::new(0.3, 0.01).unwrap();
        let y = noise.forward(&x, Mode::Train, &mut rng);
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        let var = y
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / y.len() as f64;
        assert!((mean - 0.3).abs() < 0.001, "mean {mean}");
        assert!((var.sqrt() - 0.01).abs() < 0.001, "std {}", var.sqrt());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoisePerturbation::new(0.0, -0.1).is_err());
        assert!(NoisePerturbation::new(f64::NAN, 0.1).is_err());
    }
}
