use super::Mode;
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Corner-aligned bilinear upsampling to a fixed target size. Source
/// coordinates are `i * (in - 1) / (out - 1)`, so the four corners map
/// exactly and a 9×9 grid lands on every other cell of a 17×17 one.
pub struct BilinearUpsample {
    target_h: usize,
    target_w: usize,
    cache: Option<Vec<usize>>,
}

impl BilinearUpsample {
    pub fn new(target_h: usize, target_w: usize) -> Self {
        Self {
            target_h,
            target_w,
            cache: None,
        }
    }

    fn axis_map(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
        (0..dst)
            .map(|i| {
                if dst == 1 || src == 1 {
                    return (0, 0, 0.0);
                }
                let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
                let lo = (pos.floor() as usize).min(src - 2);
                (lo, lo + 1, pos - lo as f64)
            })
            .collect()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, c, h, w) = match x.shape() {
            [b, c, h, w] => (*b, *c, *h, *w),
            s => {
                return Err(ObaError::Shape(format!(
                    "bilinear_upsample expects B×C×H×W, got {s:?}"
                )))
            }
        };
        let (th, tw) = (self.target_h, self.target_w);
        let rows = Self::axis_map(h, th);
        let cols = Self::axis_map(w, tw);
        let mut out = Tensor::zeros(&[b, c, th, tw]);
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * h * w;
                let obase = (bi * c + ci) * th * tw;
                for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                    for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let v00 = x.data()[base + r0 * w + c0];
                        let v01 = x.data()[base + r0 * w + c1];
                        let v10 = x.data()[base + r1 * w + c0];
                        let v11 = x.data()[base + r1 * w + c1];
                        let top = v00 + fc * (v01 - v00);
                        let bot = v10 + fc * (v11 - v10);
                        out.data_mut()[obase + oi * tw + oj] = top + fr * (bot - top);
                    }
                }
            }
        }
        if mode.caches() {
            self.cache = Some(vec![b, c, h, w]);
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or_else(|| {
            ObaError::InvalidArg("bilinear_upsample backward without cached forward".into())
        })?;
        let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (th, tw) = (self.target_h, self.target_w);
        if grad_out.shape() != [b, c, th, tw] {
            return Err(ObaError::Shape(format!(
                "bilinear_upsample backward grad shape {:?}, expected {:?}",
                grad_out.shape(),
                [b, c, th, tw]
            )));
        }
        let rows = Self::axis_map(h, th);
        let cols = Self::axis_map(w, tw);
        let mut dx = Tensor::zeros(&[b, c, h, w]);
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * h * w;
                let obase = (bi * c + ci) * th * tw;
                for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                    for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let g = grad_out.data()[obase + oi * tw + oj];
                        let d = dx.data_mut();
                        d[base + r0 * w + c0] += g * (1.0 - fr) * (1.0 - fc);
                        d[base + r0 * w + c1] += g * (1.0 - fr) * fc;
                        d[base + r1 * w + c0] += g * fr * (1.0 - fc);
                        d[base + r1 * w + c1] += g * fr * fc;
                    }
                }
            }
        }
        Ok(dx)
    }
}
