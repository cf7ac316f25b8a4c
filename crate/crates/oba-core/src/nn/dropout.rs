use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Inverted dropout: surviving activations are scaled by 1/(1-ratio) during
/// training so eval mode is the identity.
pub struct Dropout {
    ratio: f64,
    cache: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(ObaError::InvalidArg(format!(
                "dropout ratio must be in [0, 1), got {ratio}"
            )));
        }
        Ok(Self { ratio, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor {
        if !mode.stochastic() || self.ratio == 0.0 {
            if mode.caches() {
                self.cache = Some(vec![1.0; x.len()]);
            }
            return x.clone();
        }
        let keep = 1.0 - self.ratio;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if rng.gen::<f64>() < self.ratio {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let mut out = x.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.cache = Some(mask);
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mask = self.cache.take().ok_or_else(|| {
            ObaError::InvalidArg("dropout backward without cached forward".into())
        })?;
        if mask.len() != grad_out.len() {
            return Err(ObaError::Shape(format!(
                "dropout backward grad len {}, expected {}",
                grad_out.len(),
                mask.len()
            )));
        }
        let mut dx = grad_out.clone();
        for (d, m) in dx.data_mut().iter_mut().zip(&mask) {
            *d *= m;
        }
        Ok(dx)
    }
}
