use super::Mode;
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Global average pooling: B×C×H×W -> B×C.
pub struct GlobalAvgPool {
    cache: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, c, h, w) = match x.shape() {
            [b, c, h, w] => (*b, *c, *h, *w),
            s => {
                return Err(ObaError::Shape(format!(
                    "global_avg_pool expects B×C×H×W, got {s:?}"
                )))
            }
        };
        let hw = h * w;
        let mut out = Tensor::zeros(&[b, c]);
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * hw;
                out.data_mut()[bi * c + ci] =
                    x.data()[base..base + hw].iter().sum::<f64>() / hw as f64;
            }
        }
        if mode.caches() {
            self.cache = Some(vec![b, c, h, w]);
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or_else(|| {
            ObaError::InvalidArg("global_avg_pool backward without cached forward".into())
        })?;
        let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if grad_out.shape() != [b, c] {
            return Err(ObaError::Shape(format!(
                "global_avg_pool backward grad shape {:?}, expected {:?}",
                grad_out.shape(),
                [b, c]
            )));
        }
        let hw = (h * w) as f64;
        let mut dx = Tensor::zeros(&[b, c, h, w]);
        for bi in 0..b {
            for ci in 0..c {
                let g = grad_out.data()[bi * c + ci] / hw;
                let base = (bi * c + ci) * h * w;
                dx.data_mut()[base..base + h * w].fill(g);
            }
        }
        Ok(dx)
    }
}

impl Default for GlobalAvgPool {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_each_plane() {
        let x = Tensor::from_vec(
            &[1, 2, 2, 2],
            vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 14.0],
        )
        .unwrap();
        let mut pool = GlobalAvgPool::new();
        let y = pool.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert!((y.data()[0] - 2.5).abs() < 1e-12);
        assert!((y.data()[1] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn backward_spreads_evenly() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let mut pool = GlobalAvgPool::new();
        pool.forward(&x, Mode::Train).unwrap();
        let g = Tensor::from_vec(&[1, 1], vec![8.0]).unwrap();
        let dx = pool.backward(&g).unwrap();
        assert_eq!(dx.data(), &[2.0, 2.0, 2.0, 2.0]);
    }
}
