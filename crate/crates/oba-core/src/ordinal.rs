//! Ordinal machinery: the rank partition, label encoding (one bit per rank
//! threshold), prediction decoding by threshold counting, and the focal
//! ordinal loss with its analytic gradient.

use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to [EPS_CLAMP, 1−EPS_CLAMP] inside the loss to
/// keep the logarithms finite.
pub const EPS_CLAMP: f64 = 1e-7;

const ALPHA_FLOOR: f64 = 0.05;
const ALPHA_CEIL: f64 = 0.95;

/// Evenly spaced rank thresholds r_k = k·η for k = 1..K−1, K−1 = ⌈y_max/η⌉.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPartition {
    eta: f64,
    y_max: f64,
    ranks: Vec<f64>,
}

impl RankPartition {
    pub fn new(eta: f64, y_max: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(ObaError::InvalidArg(format!(
                "partition interval must be positive, got {eta}"
            )));
        }
        if !(y_max > 0.0) || !y_max.is_finite() {
            return Err(ObaError::InvalidArg(format!(
                "y_max must be positive, got {y_max}"
            )));
        }
        if eta > y_max {
            return Err(ObaError::InvalidArg(format!(
                "partition interval {eta} exceeds y_max {y_max}"
            )));
        }
        let ratio = y_max / eta;
        // guard against 25/0.1 = 250.00000000000003-style ceil overshoot
        let k = if (ratio - ratio.round()).abs() < 1e-9 {
            ratio.round()
        } else {
            ratio.ceil()
        } as usize;
        let ranks = (1..=k).map(|i| i as f64 * eta).collect();
        Ok(Self { eta, y_max, ranks })
    }

    /// Number of rank classifiers, K−1.
    pub fn n_ranks(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }
}

/// Eq. 6: bit k is 1 iff y > r_k (strict). The result is monotone
/// non-increasing by construction. Returned as 0.0/1.0 so it doubles as a
/// training target and as a perfect-probability vector.
pub fn encode(y: f64, partition: &RankPartition) -> Result<Vec<f64>> {
    if !(0.0..=partition.y_max).contains(&y) {
        return Err(ObaError::InvalidArg(format!(
            "label {y} outside [0, {}]",
            partition.y_max
        )));
    }
    Ok(partition
        .ranks
        .iter()
        .map(|&r| if y > r { 1.0 } else { 0.0 })
        .collect())
}

/// How decode counts threshold exceedances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Eq. 7 as written: ỹ = η · |{k : p_k ≥ ξ}| over all ranks.
    Sum,
    /// Longest consistent prefix with p_k ≥ ξ.
    Prefix,
}

/// Eq. 7: turn per-rank probabilities back into millimetres.
pub fn decode(probs: &[f64], partition: &RankPartition, xi: f64, mode: DecodeMode) -> Result<f64> {
    if probs.len() != partition.n_ranks() {
        return Err(ObaError::Shape(format!(
            "{} probabilities for {} ranks",
            probs.len(),
            partition.n_ranks()
        )));
    }
    let count = match mode {
        DecodeMode::Sum => probs.iter().filter(|&&p| p >= xi).count(),
        DecodeMode::Prefix => probs.iter().take_while(|&&p| p >= xi).count(),
    };
    Ok(partition.eta * count as f64)
}

/// Per-rank focal weighting: γ focuses on hard samples, α_k balances the
/// positive class of rank k.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: Vec<f64>,
}

impl FocalParams {
    pub fn new(gamma: f64, alpha: Vec<f64>) -> Result<Self> {
        if gamma < 0.0 || !gamma.is_finite() {
            return Err(ObaError::InvalidArg(format!(
                "focal gamma must be ≥ 0, got {gamma}"
            )));
        }
        if alpha.iter().any(|&a| !(0.0 < a && a < 1.0)) {
            return Err(ObaError::InvalidArg(
                "focal alpha entries must lie in (0, 1)".into(),
            ));
        }
        Ok(Self { gamma, alpha })
    }

    pub fn constant(gamma: f64, alpha: f64, n_ranks: usize) -> Result<Self> {
        Self::new(gamma, vec![alpha; n_ranks])
    }
}

/// Focal binary cross-entropy over a B×(K−1) probability block:
///
///   loss = mean over B·(K−1) of
///          −[ α_k (1−p)^γ d log p + (1−α_k) p^γ (1−d) log(1−p) ]
///
/// Returns the scalar loss and its gradient with respect to `probs`.
pub fn focal_ordinal_loss(
    probs: &Tensor,
    labels: &Tensor,
    params: &FocalParams,
) -> Result<(f64, Tensor)> {
    let (b, k) = match probs.shape() {
        [b, k] => (*b, *k),
        s => {
            return Err(ObaError::Shape(format!(
                "focal loss expects B×K probabilities, got {s:?}"
            )))
        }
    };
    if labels.shape() != [b, k] {
        return Err(ObaError::Shape(format!(
            "labels shaped {:?} against probabilities {:?}",
            labels.shape(),
            probs.shape()
        )));
    }
    if params.alpha.len() != k {
        return Err(ObaError::Shape(format!(
            "{} alpha weights for {k} ranks",
            params.alpha.len()
        )));
    }
    let gamma = params.gamma;
    let n = (b * k) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[b, k]);
    for bi in 0..b {
        for ki in 0..k {
            let idx = bi * k + ki;
            let d = labels.data()[idx];
            if d != 0.0 && d != 1.0 {
                return Err(ObaError::InvalidArg(format!(
                    "ordinal label must be 0 or 1, got {d}"
                )));
            }
            let p = probs.data()[idx].clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
            let a = params.alpha[ki];
            let (l, g) = if d == 1.0 {
                let w = (1.0 - p).powf(gamma);
                let l = -a * w * p.ln();
                // d/dp [-(1-p)^γ ln p] = γ(1-p)^{γ-1} ln p − (1-p)^γ / p
                let dg = if gamma == 0.0 {
                    0.0
                } else {
                    gamma * (1.0 - p).powf(gamma - 1.0) * p.ln()
                };
                (l, a * (dg - w / p))
            } else {
                let w = p.powf(gamma);
                let l = -(1.0 - a) * w * (1.0 - p).ln();
                // d/dp [-p^γ ln(1-p)] = −γ p^{γ-1} ln(1-p) + p^γ / (1-p)
                let dg = if gamma == 0.0 {
                    0.0
                } else {
                    gamma * p.powf(gamma - 1.0) * (1.0 - p).ln()
                };
                (l, (1.0 - a) * (-dg + w / (1.0 - p)))
            };
            loss += l;
            grad.data_mut()[idx] = g / n;
        }
    }
    Ok((loss / n, grad))
}

/// Class-balance weights from the rain-sample rank frequencies:
/// α_k = clamp(1 − positive-fraction at rank k, 0.05, 0.95).
pub fn rank_frequencies(labels: &[f64], partition: &RankPartition) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(ObaError::InvalidArg(
            "rank frequencies need at least one sample".into(),
        ));
    }
    let n = labels.len() as f64;
    partition
        .ranks
        .iter()
        .map(|&r| {
            let pos = labels.iter().filter(|&&y| y > r).count() as f64;
            Ok((1.0 - pos / n).clamp(ALPHA_FLOOR, ALPHA_CEIL))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_counts_ranks() {
        let p = RankPartition::new(0.5, 25.0).unwrap();
        assert_eq!(p.n_ranks(), 50);
        assert_eq!(p.ranks()[0], 0.5);
        assert_eq!(p.ranks()[49], 25.0);
        // floating-point ceil guard: 25/0.1 must give 250, not 251
        assert_eq!(RankPartition::new(0.1, 25.0).unwrap().n_ranks(), 250);
        assert_eq!(RankPartition::new(0.4, 1.0).unwrap().n_ranks(), 3);
        assert!(RankPartition::new(2.0, 1.0).is_err());
        assert!(RankPartition::new(0.0, 1.0).is_err());
    }

    #[test]
    fn encode_matches_hand_case() {
        let p = RankPartition::new(0.5, 2.0).unwrap();
        assert_eq!(encode(1.2, &p).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(encode(0.0, &p).unwrap(), vec![0.0, 0.0, 0.0, 0.0]);
        // exact rank hits use the strict inequality
        assert_eq!(encode(1.0, &p).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(encode(2.5, &p).is_err());
    }

    #[test]
    fn encode_is_monotone() {
        let p = RankPartition::new(0.5, 25.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let y = rng.gen_range(0.0..25.0);
            let bits = encode(y, &p).unwrap();
            for w in bits.windows(2) {
                assert!(w[0] >= w[1], "non-monotone encode at y={y}");
            }
        }
    }

    #[test]
    fn decode_counts_exceedances() {
        let p = RankPartition::new(0.5, 2.0).unwrap();
        let y = decode(&[0.9, 0.6, 0.4, 0.1], &p, 0.5, DecodeMode::Sum).unwrap();
        assert_eq!(y, 1.0);
        assert_eq!(
            decode(&[0.1, 0.2, 0.3, 0.4], &p, 0.5, DecodeMode::Sum).unwrap(),
            0.0
        );
        // a non-monotone pattern: Sum counts everything, Prefix stops early
        let probs = [0.9, 0.2, 0.8, 0.9];
        assert_eq!(decode(&probs, &p, 0.5, DecodeMode::Sum).unwrap(), 1.5);
        assert_eq!(decode(&probs, &p, 0.5, DecodeMode::Prefix).unwrap(), 0.5);
        assert!(decode(&[0.5], &p, 0.5, DecodeMode::Sum).is_err());
    }

    #[test]
    fn roundtrip_floors_to_eta_grid() {
        let p = RankPartition::new(0.5, 25.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let y = rng.gen_range(f64::MIN_POSITIVE..25.0);
            let bits = encode(y, &p).unwrap();
            let back = decode(&bits, &p, 0.5, DecodeMode::Sum).unwrap();
            assert!(back <= y && back >= y - 0.5, "y={y} back={back}");
            let count = bits.iter().filter(|&&b| b >= 0.5).count();
            assert_eq!(back, 0.5 * count as f64);
        }
    }

    #[test]
    fn focal_hand_value() {
        let probs = Tensor::from_vec(&[1, 1], vec![0.3]).unwrap();
        let labels = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let params = FocalParams::constant(2.0, 0.25, 1).unwrap();
        let (loss, _) = focal_ordinal_loss(&probs, &labels, &params).unwrap();
        let want = -0.25 * 0.49 * 0.3f64.ln();
        assert!((loss - want).abs() < 1e-12);
        assert!((loss - 0.14748).abs() < 1e-5);
    }

    #[test]
    fn gamma_zero_halves_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = 7;
        let k = 5;
        let probs = Tensor::from_vec(
            &[b, k],
            (0..b * k).map(|_| rng.gen_range(0.01..0.99)).collect(),
        )
        .unwrap();
        let labels = Tensor::from_vec(
            &[b, k],
            (0..b * k)
                .map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let params = FocalParams::constant(0.0, 0.5, k).unwrap();
        let (loss, _) = focal_ordinal_loss(&probs, &labels, &params).unwrap();
        let mut bce = 0.0;
        for i in 0..b * k {
            let p = probs.data()[i];
            let d = labels.data()[i];
            bce -= d * p.ln() + (1.0 - d) * (1.0 - p).ln();
        }
        bce /= (b * k) as f64;
        assert!((loss - 0.5 * bce).abs() <= 1e-12, "{loss} vs {}", 0.5 * bce);
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let probs = Tensor::from_vec(&[1, 2], vec![1.0 - EPS_CLAMP, EPS_CLAMP]).unwrap();
        let labels = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let params = FocalParams::constant(2.0, 0.25, 2).unwrap();
        let (loss, _) = focal_ordinal_loss(&probs, &labels, &params).unwrap();
        assert!(loss < 1e-13, "loss {loss}");
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for gamma in [0.0, 1.0, 2.0] {
            let b = 4;
            let k = 3;
            let mut probs = Tensor::from_vec(
                &[b, k],
                (0..b * k).map(|_| rng.gen_range(0.05..0.95)).collect(),
            )
            .unwrap();
            let labels = Tensor::from_vec(
                &[b, k],
                (0..b * k)
                    .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
                    .collect(),
            )
            .unwrap();
            let alpha: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.9)).collect();
            let params = FocalParams::new(gamma, alpha).unwrap();
            let (_, grad) = focal_ordinal_loss(&probs, &labels, &params).unwrap();
            let coords: Vec<usize> = (0..b * k).collect();
            let worst = crate::nn::grad_check(
                &mut probs,
                &coords,
                &grad,
                crate::nn::DEFAULT_FD_STEP,
                |t| Ok(focal_ordinal_loss(t, &labels, &params)?.0),
            )
            .unwrap();
            assert!(worst <= 1e-6, "gamma {gamma}: worst rel err {worst}");
        }
    }

    #[test]
    fn alpha_from_frequencies() {
        let p = RankPartition::new(0.5, 2.0).unwrap();
        // every label above every rank -> alpha floors out
        let alpha = rank_frequencies(&[5.0_f64.min(2.0); 4], &p).unwrap();
        assert!(alpha.iter().take(3).all(|&a| a == 0.05));
        // single label: below its ranks alpha is 0.05, above 0.95
        let alpha = rank_frequencies(&[1.2], &p).unwrap();
        assert_eq!(alpha, vec![0.05, 0.05, 0.95, 0.95]);
        // uniform coverage: alpha grows with rank
        let labels: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();
        let alpha = rank_frequencies(&labels, &p).unwrap();
        assert!(alpha.windows(2).all(|w| w[0] <= w[1]));
        assert!(rank_frequencies(&[], &p).is_err());
    }
}
