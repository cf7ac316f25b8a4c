use super::Mode;
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Leaky ReLU with a configurable negative-side slope (default 0.01).
/// The subgradient at exactly zero is the slope, which keeps units alive.
pub struct LeakyRelu {
    slope: f64,
    cache: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let slope = self.slope;
        let out = x.map(|v| if v >= 0.0 { v } else { slope * v });
        if mode.caches() {
            self.cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| {
            ObaError::InvalidArg("leaky_relu backward without cached forward".into())
        })?;
        if x.shape() != grad_out.shape() {
            return Err(ObaError::Shape(format!(
                "leaky_relu backward grad shape {:?}, expected {:?}",
                grad_out.shape(),
                x.shape()
            )));
        }
        let mut dx = grad_out.clone();
        for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
            if *v <= 0.0 {
                *d *= self.slope;
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_splits_sign() {
        let mut act = LeakyRelu::new(0.01);
        let x = Tensor::from_vec(&[4], vec![-2.0, -0.5, 0.0, 3.0]).unwrap();
        let y = act.forward(&x, Mode::Eval);
        assert_eq!(y.data(), &[-0.02, -0.005, 0.0, 3.0]);
    }

    #[test]
    fn backward_scales_negative_side() {
        let mut act = LeakyRelu::new(0.1);
        let x = Tensor::from_vec(&[4], vec![-1.0, 2.0, -3.0, 0.0]).unwrap();
        act.forward(&x, Mode::Train);
        let g = Tensor::from_vec(&[4], vec![1.0, 1.0, 2.0, 1.0]).unwrap();
        let dx = act.backward(&g).unwrap();
        // the subgradient at exactly 0 is the slope
        assert_eq!(dx.data(), &[0.1, 1.0, 0.2, 0.1]);
    }
}
