//! 2-D convolution (cross-correlation) backed by im2col + GEMM.

use super::{init_uniform, Mode, Param};
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Convolution layer over `B×C_in×H×W` inputs producing `B×C_out×H'×W'`.
///
/// Weights have shape `C_out×C_in×k×k`; the operation is plain
/// cross-correlation (no kernel flip).
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    cache: Option<Tensor>,
}

fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(ObaError::Shape(format!(
            "padded extent {padded} smaller than kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

impl Conv2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = Param::new(init_uniform(&[c_out, c_in, kernel, kernel], fan_in, rng));
        let bias = Param::new(Tensor::zeros(&[c_out]));
        Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn output_shape(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            out_extent(h, self.kernel, self.stride, self.padding)?,
            out_extent(w, self.kernel, self.stride, self.padding)?,
        ))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(ObaError::Shape(format!(
                "conv2d expects B×C×H×W input, got {:?}",
                s
            )));
        }
        if s[1] != self.c_in {
            return Err(ObaError::Shape(format!(
                "conv2d input has {} channels, weights expect {}",
                s[1], self.c_in
            )));
        }
        Ok((s[0], s[2], s[3]))
    }

    /// Gather one sample's receptive fields into a `(C_in·k·k) × (H'·W')` matrix.
    fn im2col(&self, sample: &[f64], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [f64]) {
        let k = self.kernel;
        let n = oh * ow;
        let pad = self.padding as isize;
        for c in 0..self.c_in {
            let plane = &sample[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * n;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + ki as isize - pad;
                        let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + kj as isize - pad;
                            dst[ox] = if ix < 0 || ix >= w as isize {
                                0.0
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add a column matrix back onto one sample's input layout.
    fn col2im(&self, cols: &[f64], h: usize, w: usize, oh: usize, ow: usize, sample: &mut [f64]) {
        let k = self.kernel;
        let n = oh * ow;
        let pad = self.padding as isize;
        for c in 0..self.c_in {
            let plane = &mut sample[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * n;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + ki as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + kj as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += src[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, h, w) = self.check_input(x)?;
        let (oh, ow) = self.output_shape(h, w)?;
        let ckk = self.c_in * self.kernel * self.kernel;
        let n = oh * ow;
        let mut out = Tensor::zeros(&[b, self.c_out, oh, ow]);
        let mut cols = vec![0.0; ckk * n];
        let wmat = self.weight.value.data();
        let bias = self.bias.value.data();
        for bi in 0..b {
            let sample = &x.data()[bi * self.c_in * h * w..(bi + 1) * self.c_in * h * w];
            self.im2col(sample, h, w, oh, ow, &mut cols);
            let dst = &mut out.data_mut()[bi * self.c_out * n..(bi + 1) * self.c_out * n];
            unsafe {
                matrixmultiply::dgemm(
                    self.c_out,
                    ckk,
                    n,
                    1.0,
                    wmat.as_ptr(),
                    ckk as isize,
                    1,
                    cols.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    dst.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            for co in 0..self.c_out {
                let bv = bias[co];
                dst[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += bv);
            }
        }
        if mode.caches() {
            self.cache = Some(x.clone());
        }
        Ok(out)
    }

    /// Accumulate weight/bias gradients and return the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        self.backward_impl(grad_out, true)
            .map(|g| g.expect("input grad requested"))
    }

    /// Backward that skips the input gradient; for layers fed by frozen data.
    pub fn backward_params_only(&mut self, grad_out: &Tensor) -> Result<()> {
        self.backward_impl(grad_out, false).map(|_| ())
    }

    fn backward_impl(&mut self, grad_out: &Tensor, need_input: bool) -> Result<Option<Tensor>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| ObaError::InvalidArg("conv2d backward without cached forward".into()))?;
        let (b, h, w) = self.check_input(&x)?;
        let (oh, ow) = self.output_shape(h, w)?;
        let ckk = self.c_in * self.kernel * self.kernel;
        let n = oh * ow;
        let expected = [b, self.c_out, oh, ow];
        if grad_out.shape() != expected {
            return Err(ObaError::Shape(format!(
                "conv2d backward grad shape {:?}, expected {:?}",
                grad_out.shape(),
                expected
            )));
        }
        let mut cols = vec![0.0; ckk * n];
        let mut dx = if need_input {
            Some(Tensor::zeros(x.shape()))
        } else {
            None
        };
        for bi in 0..b {
            let g = &grad_out.data()[bi * self.c_out * n..(bi + 1) * self.c_out * n];
            let sample = &x.data()[bi * self.c_in * h * w..(bi + 1) * self.c_in * h * w];
            self.im2col(sample, h, w, oh, ow, &mut cols);
            // dW += g · colsᵀ
            let dw = self.weight.grad.data_mut();
            unsafe {
                matrixmultiply::dgemm(
                    self.c_out,
                    n,
                    ckk,
                    1.0,
                    g.as_ptr(),
                    n as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    n as isize,
                    1.0,
                    dw.as_mut_ptr(),
                    ckk as isize,
                    1,
                );
            }
            if let Some(dx) = dx.as_mut() {
                // dcols = Wᵀ · g, then scatter back
                unsafe {
                    matrixmultiply::dgemm(
                        ckk,
                        self.c_out,
                        n,
                        1.0,
                        self.weight.value.data().as_ptr(),
                        1,
                        ckk as isize,
                        g.as_ptr(),
                        n as isize,
                        1,
                        0.0,
                        cols.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                let dst = &mut dx.data_mut()[bi * self.c_in * h * w..(bi + 1) * self.c_in * h * w];
                self.col2im(&cols, h, w, oh, ow, dst);
            }
        }
        let db = self.bias.grad.data_mut();
        for bi in 0..b {
            let g = &grad_out.data()[bi * self.c_out * n..(bi + 1) * self.c_out * n];
            for co in 0..self.c_out {
                db[co] += g[co * n..(co + 1) * n].iter().sum::<f64>();
            }
        }
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(1, 1, 1, 1, 0, &mut rng);
        conv.weight.value = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        conv.bias.value = Tensor::zeros(&[1]);
        let x = random_tensor(&[2, 1, 4, 5], &mut rng);
        let y = conv.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_3x3_on_constant_input_sums_nine() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(1, 1, 3, 1, 0, &mut rng);
        conv.weight.value = Tensor::filled(&[1, 1, 3, 3], 1.0);
        conv.bias.value = Tensor::zeros(&[1]);
        let x = Tensor::filled(&[1, 1, 5, 5], 2.5);
        let y = conv.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|&v| (v - 22.5).abs() < 1e-12));
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(3, 4, 3, 1, 1, &mut rng);
        let x = Tensor::zeros(&[1, 2, 5, 5]);
        let err = conv.forward(&x, Mode::Eval).unwrap_err();
        assert!(matches!(err, ObaError::Shape(_)), "{err}");
        assert!(err.to_string().contains("channels"));
    }

    #[test]
    fn matches_naive_oracle_strided_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor(&[2, 3, 5, 5], &mut rng);
        let wt = random_tensor(&[4, 3, 3, 3], &mut rng);
        let bias = random_tensor(&[4], &mut rng);
        let mut conv = Conv2d::new(3, 4, 3, 2, 1, &mut rng);
        conv.weight.value = wt.clone();
        conv.bias.value = bias.clone();
        let got = conv.forward(&x, Mode::Eval).unwrap();
        let want = reference::conv2d_naive(&x, &wt, &bias, 2, 1).unwrap();
        assert_eq!(got.shape(), want.shape());
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn backward_without_forward_cache_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(1, 1, 1, 1, 0, &mut rng);
        let g = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(conv.backward(&g).is_err());
    }
}
