//! Per-channel batch normalization for B×C×H×W activations.

use super::{Mode, Param};
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

struct BnCache {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
    frozen: bool,
}

pub struct BatchNorm2d {
    pub scale: Param,
    pub shift: Param,
    channels: usize,
    eps: f64,
    momentum: f64,
    running: Option<(Vec<f64>, Vec<f64>)>,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            scale: Param::new(Tensor::filled(&[channels], 1.0)),
            shift: Param::new(Tensor::zeros(&[channels])),
            channels,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            running: None,
            cache: None,
        }
    }

    /// Explicitly initialize running stats to mean 0, variance 1, so eval
    /// mode works before any training step.
    pub fn init_running_identity(&mut self) {
        self.running = Some((vec![0.0; self.channels], vec![1.0; self.channels]));
    }

    pub fn running_stats(&self) -> Option<(&[f64], &[f64])> {
        self.running
            .as_ref()
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    pub fn set_running_stats(&mut self, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        if mean.len() != self.channels || var.len() != self.channels {
            return Err(ObaError::Shape(format!(
                "running stats length {} / {}, expected {}",
                mean.len(),
                var.len(),
                self.channels
            )));
        }
        self.running = Some((mean, var));
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        match x.shape() {
            [b, c, h, w] if *c == self.channels => Ok((*b, h * w)),
            s => Err(ObaError::Shape(format!(
                "batch_norm expects B×{}×H×W, got {:?}",
                self.channels, s
            ))),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Frozen => self.forward_running(x, true),
            Mode::Eval => self.forward_running(x, false),
        }
    }

    fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, hw) = self.check_input(x)?;
        let n = b * hw;
        if n < 2 {
            return Err(ObaError::InvalidArg(
                "batch_norm train mode needs at least 2 values per channel".into(),
            ));
        }
        let c = self.channels;
        let mut out = Tensor::zeros(x.shape());
        let mut x_hat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; c];
        let mut batch_mean = vec![0.0; c];
        let mut batch_var = vec![0.0; c];
        for ci in 0..c {
            let mut sum = 0.0;
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                sum += x.data()[base..base + hw].iter().sum::<f64>();
            }
            let mean = sum / n as f64;
            let mut var = 0.0;
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                var += x.data()[base..base + hw]
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>();
            }
            let var = var / n as f64;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = istd;
            batch_mean[ci] = mean;
            batch_var[ci] = var;
            let g = self.scale.value.data()[ci];
            let s = self.shift.value.data()[ci];
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    let xh = (x.data()[i] - mean) * istd;
                    x_hat[i] = xh;
                    out.data_mut()[i] = g * xh + s;
                }
            }
        }
        match self.running.as_mut() {
            Some((rm, rv)) => {
                for ci in 0..c {
                    rm[ci] = (1.0 - self.momentum) * rm[ci] + self.momentum * batch_mean[ci];
                    rv[ci] = (1.0 - self.momentum) * rv[ci] + self.momentum * batch_var[ci];
                }
            }
            None => self.running = Some((batch_mean, batch_var)),
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            shape: x.shape().to_vec(),
            frozen: false,
        });
        Ok(out)
    }

    fn forward_running(&mut self, x: &Tensor, keep_cache: bool) -> Result<Tensor> {
        let (b, hw) = self.check_input(x)?;
        let (rm, rv) = self.running.as_ref().ok_or_else(|| {
            ObaError::InvalidArg(
                "batch_norm eval mode before any train step or explicit stat init".into(),
            )
        })?;
        let c = self.channels;
        let mut out = Tensor::zeros(x.shape());
        let mut x_hat = if keep_cache {
            vec![0.0; x.len()]
        } else {
            Vec::new()
        };
        let mut inv_std = vec![0.0; c];
        for ci in 0..c {
            let istd = 1.0 / (rv[ci] + self.eps).sqrt();
            inv_std[ci] = istd;
            let g = self.scale.value.data()[ci];
            let s = self.shift.value.data()[ci];
            let m = rm[ci];
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    let xh = (x.data()[i] - m) * istd;
                    if keep_cache {
                        x_hat[i] = xh;
                    }
                    out.data_mut()[i] = g * xh + s;
                }
            }
        }
        if keep_cache {
            self.cache = Some(BnCache {
                x_hat,
                inv_std,
                shape: x.shape().to_vec(),
                frozen: true,
            });
        }
        Ok(out)
    }

    /// Backward through the cached forward. Train caches differentiate the
    /// batch statistics; frozen caches treat mean/var as constants.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| {
            ObaError::InvalidArg("batch_norm backward without cached forward".into())
        })?;
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(ObaError::Shape(format!(
                "batch_norm backward grad shape {:?}, expected {:?}",
                grad_out.shape(),
                cache.shape
            )));
        }
        let (b, c, hw) = (
            cache.shape[0],
            cache.shape[1],
            cache.shape[2] * cache.shape[3],
        );
        let n = (b * hw) as f64;
        let mut dx = Tensor::zeros(grad_out.shape());
        for ci in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    sum_g += grad_out.data()[i];
                    sum_gx += grad_out.data()[i] * cache.x_hat[i];
                }
            }
            self.shift.grad.data_mut()[ci] += sum_g;
            self.scale.grad.data_mut()[ci] += sum_gx;
            let g = self.scale.value.data()[ci];
            let istd = cache.inv_std[ci];
            let (mean_g, mean_gx) = if cache.frozen {
                (0.0, 0.0)
            } else {
                (sum_g / n, sum_gx / n)
            };
            for bi in 0..b {
                let base = (bi * c + ci) * hw;
                for i in base..base + hw {
                    dx.data_mut()[i] =
                        g * istd * (grad_out.data()[i] - mean_g - cache.x_hat[i] * mean_gx);
                }
            }
        }
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(format!("{prefix}.scale"), &mut self.scale);
        f(format!("{prefix}.shift"), &mut self.shift);
    }
}
