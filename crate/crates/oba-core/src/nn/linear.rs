use rand_chacha::ChaCha8Rng;

use super::{init_uniform, Mode, Param};
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Fully connected layer: B×In -> B×Out, weight stored Out×In.
pub struct FullyConnected {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
    cache: Option<Tensor>,
}

impl FullyConnected {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::new(init_uniform(&[out_features, in_features], in_features, rng)),
            bias: Param::new(Tensor::zeros(&[out_features])),
            in_features,
            out_features,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let b = match x.shape() {
            [b, f] if *f == self.in_features => *b,
            s => {
                return Err(ObaError::Shape(format!(
                    "fully_connected expects B×{}, got {s:?}",
                    self.in_features
                )))
            }
        };
        let (fi, fo) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros(&[b, fo]);
        for bi in 0..b {
            let xrow = &x.data()[bi * fi..(bi + 1) * fi];
            for oi in 0..fo {
                let wrow = &self.weight.value.data()[oi * fi..(oi + 1) * fi];
                let dot: f64 = xrow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                out.data_mut()[bi * fo + oi] = dot + self.bias.value.data()[oi];
            }
        }
        if mode.caches() {
            self.cache = Some(x.clone());
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| {
            ObaError::InvalidArg("fully_connected backward without cached forward".into())
        })?;
        let b = x.shape()[0];
        let (fi, fo) = (self.in_features, self.out_features);
        if grad_out.shape() != [b, fo] {
            return Err(ObaError::Shape(format!(
                "fully_connected backward grad shape {:?}, expected {:?}",
                grad_out.shape(),
                [b, fo]
            )));
        }
        let mut dx = Tensor::zeros(&[b, fi]);
        for bi in 0..b {
            let xrow = &x.data()[bi * fi..(bi + 1) * fi];
            for oi in 0..fo {
                let g = grad_out.data()[bi * fo + oi];
                self.bias.grad.data_mut()[oi] += g;
                let wgrad = &mut self.weight.grad.data_mut()[oi * fi..(oi + 1) * fi];
                for (wg, xv) in wgrad.iter_mut().zip(xrow) {
                    *wg += g * xv;
                }
                let wrow = &self.weight.value.data()[oi * fi..(oi + 1) * fi];
                let dxrow = &mut dx.data_mut()[bi * fi..(bi + 1) * fi];
                for (dv, wv) in dxrow.iter_mut().zip(wrow) {
                    *dv += g * wv;
                }
            }
        }
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}
