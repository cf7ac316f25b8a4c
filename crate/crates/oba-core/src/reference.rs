//! Slow, obviously-correct reference implementations.
//!
//! These exist purely as verification oracles: straight loop transcriptions
//! with no shared code with the optimized layers they are compared against.
//! Tests and the acceptance suite call them; production paths never do.

use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Direct quadruple-loop convolution (cross-correlation).
pub fn conv2d_naive(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (b, c_in, h, w) = match input.shape() {
        [b, c, h, w] => (*b, *c, *h, *w),
        s => return Err(ObaError::Shape(format!("input {:?}", s))),
    };
    let (c_out, wc_in, k, _) = match weight.shape() {
        [o, i, k1, k2] if k1 == k2 => (*o, *i, *k1, *k2),
        s => return Err(ObaError::Shape(format!("weight {:?}", s))),
    };
    if wc_in != c_in {
        return Err(ObaError::Shape("channel mismatch".into()));
    }
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    let mut out = Tensor::zeros(&[b, c_out, oh, ow]);
    for bi in 0..b {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.data()[co];
                    for ci in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = input.data()
                                    [((bi * c_in + ci) * h + iy as usize) * w + ix as usize];
                                let wv = weight.data()[((co * c_in + ci) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[((bi * c_out + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Dot-product affine map: `out[b][m] = Σ_n w[m][n]·x[b][n] + bias[m]`.
pub fn fully_connected_naive(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, n) = match input.shape() {
        [b, n] => (*b, *n),
        s => return Err(ObaError::Shape(format!("input {:?}", s))),
    };
    let (m, wn) = match weight.shape() {
        [m, n] => (*m, *n),
        s => return Err(ObaError::Shape(format!("weight {:?}", s))),
    };
    if wn != n {
        return Err(ObaError::Shape("inner dim mismatch".into()));
    }
    let mut out = Tensor::zeros(&[b, m]);
    for bi in 0..b {
        for mi in 0..m {
            let mut acc = bias.data()[mi];
            for ni in 0..n {
                acc += weight.data()[mi * n + ni] * input.data()[bi * n + ni];
            }
            out.data_mut()[bi * m + mi] = acc;
        }
    }
    Ok(out)
}

/// Per-pixel corner-aligned bilinear interpolation of a `C×h×w` grid.
pub fn bilinear_upsample_naive(input: &Tensor, th: usize, tw: usize) -> Result<Tensor> {
    let (c, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        s => return Err(ObaError::Shape(format!("input {:?}", s))),
    };
    let mut out = Tensor::zeros(&[c, th, tw]);
    for ci in 0..c {
        for oy in 0..th {
            let sy = oy as f64 * (h - 1) as f64 / (th - 1) as f64;
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for ox in 0..tw {
                let sx = ox as f64 * (w - 1) as f64 / (tw - 1) as f64;
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let v00 = input.data()[(ci * h + y0) * w + x0];
                let v01 = input.data()[(ci * h + y0) * w + x1];
                let v10 = input.data()[(ci * h + y1) * w + x0];
                let v11 = input.data()[(ci * h + y1) * w + x1];
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bot = v10 * (1.0 - fx) + v11 * fx;
                out.data_mut()[(ci * th + oy) * tw + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Ok(out)
}

/// Textbook two-pass Pearson correlation coefficient.
pub fn pearson_naive(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}
