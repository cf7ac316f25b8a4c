use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Deterministically pick up to `max_n` coordinates out of `len` for
/// finite-difference probing of large tensors.
pub fn sample_coords(len: usize, max_n: usize, seed: u64) -> Vec<usize> {
    if len <= max_n {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, len, max_n).into_vec();
    picked.sort_unstable();
    picked
}

/// Central-difference check of `analytic` against the loss closure, probing
/// only `coords`. Returns the worst relative error
/// |a - n| / max(|a|, |n|, 1e-8).
pub fn grad_check<F>(
    values: &mut Tensor,
    coords: &[usize],
    analytic: &Tensor,
    step: f64,
    mut loss: F,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if values.len() != analytic.len() {
        return Err(ObaError::Shape(format!(
            "grad_check: analytic grad len {} != value len {}",
            analytic.len(),
            values.len()
        )));
    }
    let mut worst = 0.0f64;
    for &i in coords {
        if i >= values.len() {
            return Err(ObaError::InvalidArg(format!(
                "grad_check: coordinate {i} out of range for len {}",
                values.len()
            )));
        }
        let orig = values.data()[i];
        values.data_mut()[i] = orig + step;
        let plus = loss(values)?;
        values.data_mut()[i] = orig - step;
        let minus = loss(values)?;
        values.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(ObaError::Numeric(format!(
                "non-finite numeric gradient at coordinate {i}"
            )));
        }
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
