//! Verification metrics (MAE, MPAE, Ts_δ), contingency accounting, the BI
//! and LR baselines, and the σ/η ablation harness.

use crate::data::{Dataset, GridSample};
use crate::error::{ObaError, Result};
use crate::models::ModelBundle;
use crate::pipeline::{carve, train_pipeline, PipelineConfig};

/// Event thresholds of the report columns, ts_0.1 / ts_1 / ts_10.
pub const TS_DELTAS: [f64; 3] = [0.1, 1.0, 10.0];

const LR_RIDGE: f64 = 1e-8;

/// Event counts at one threshold δ; positive means value ≥ δ on both the
/// prediction side and the label side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn check_pairs(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(ObaError::InvalidArg("metric on empty input".into()));
    }
    if preds.len() != labels.len() {
        return Err(ObaError::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn contingency(preds: &[f64], labels: &[f64], delta: f64) -> Result<ContingencyTable> {
    check_pairs(preds, labels)?;
    let mut t = ContingencyTable {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (&p, &y) in preds.iter().zip(labels) {
        match (p >= delta, y >= delta) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
            (false, false) => t.tn += 1,
        }
    }
    Ok(t)
}

/// Ts_δ = TP/(TP+FP+FN); an all-negative table has no score.
pub fn ts_score(table: &ContingencyTable) -> Option<f64> {
    let denom = table.tp + table.fp + table.fn_;
    (denom > 0).then(|| table.tp as f64 / denom as f64)
}

pub fn mae(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_pairs(preds, labels)?;
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// MAE restricted to pairs with observed rain (label > 0).
pub fn mpae(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let (sum, count) = preds
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y > 0.0)
        .fold((0.0, 0usize), |(s, c), (p, y)| (s + (p - y).abs(), c + 1));
    if count == 0 {
        return Err(ObaError::InvalidArg(
            "MPAE needs at least one rain label".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// One report row: a method's MAE, MPAE and Ts at the three thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScores {
    pub method: String,
    pub mae: f64,
    pub mpae: f64,
    pub ts: [Option<f64>; 3],
}

pub fn score_method(method: &str, preds: &[f64], labels: &[f64]) -> Result<MethodScores> {
    let mut ts = [None; 3];
    for (slot, &delta) in ts.iter_mut().zip(&TS_DELTAS) {
        *slot = ts_score(&contingency(preds, labels, delta)?);
    }
    Ok(MethodScores {
        method: method.to_string(),
        mae: mae(preds, labels)?,
        mpae: mpae(preds, labels)?,
        ts,
    })
}

fn fmt_ts(ts: Option<f64>) -> String {
    match ts {
        Some(v) => format!("{v:.6}"),
        None => "-".to_string(),
    }
}

pub fn report_csv(rows: &[MethodScores]) -> String {
    let mut out = String::from("method,mae,mpae,ts_0.1,ts_1,ts_10\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{}\n",
            r.method,
            r.mae,
            r.mpae,
            fmt_ts(r.ts[0]),
            fmt_ts(r.ts[1]),
            fmt_ts(r.ts[2])
        ));
    }
    out
}

pub fn ablation_csv(param: &str, rows: &[(f64, MethodScores)]) -> String {
    let mut out = String::from("param,value,mae,mpae,ts_0.1,ts_1,ts_10\n");
    for (value, r) in rows {
        out.push_str(&format!(
            "{param},{value},{:.6},{:.6},{},{},{}\n",
            r.mae,
            r.mpae,
            fmt_ts(r.ts[0]),
            fmt_ts(r.ts[1]),
            fmt_ts(r.ts[2])
        ));
    }
    out
}

/// BI baseline: the raw biased-precipitation value at the station, which by
/// window construction is the center cell, floored at 0.
pub fn baseline_bi(sample: &GridSample, channel: usize) -> Result<f64> {
    let shape = sample.features.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if channel >= c {
        return Err(ObaError::InvalidArg(format!(
            "channel {channel} out of range ({c})"
        )));
    }
    Ok(sample.features.at3(channel, h / 2, w / 2).max(0.0))
}

/// Per-sample design matrix rows: intercept then the spatial mean of each
/// channel (the same reduction pearson screening uses).
fn design_matrix(ds: &Dataset) -> Result<Vec<f64>> {
    let (c, _, _) = ds.shape();
    let means: Vec<Vec<f64>> = (0..c)
        .map(|ci| ds.channel_means(ci))
        .collect::<Result<_>>()?;
    let mut m = Vec::with_capacity(ds.len() * (c + 1));
    for i in 0..ds.len() {
        m.push(1.0);
        for col in &means {
            m.push(col[i]);
        }
    }
    Ok(m)
}

/// Cholesky solve of a symmetric positive-definite n×n system.
fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(ObaError::Numeric(format!(
                        "normal equations singular at pivot {i}"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// LR baseline: ordinary least squares on the channel spatial means via
/// jittered normal equations; predictions floored at 0.
pub fn baseline_lr(train: &Dataset, test: &Dataset) -> Result<Vec<f64>> {
    if train.shape() != test.shape() {
        return Err(ObaError::Shape(format!(
            "train shape {:?} vs test shape {:?}",
            train.shape(),
            test.shape()
        )));
    }
    let (c, _, _) = train.shape();
    let dims = c + 1;
    if train.len() < dims {
        return Err(ObaError::InvalidArg(format!(
            "linear regression needs at least {dims} train samples, got {}",
            train.len()
        )));
    }
    let x = design_matrix(train)?;
    let y = train.labels();
    let mut xtx = vec![0.0; dims * dims];
    let mut xty = vec![0.0; dims];
    for (row, &yi) in x.chunks(dims).zip(&y) {
        for i in 0..dims {
            xty[i] += row[i] * yi;
            for j in 0..dims {
                xtx[i * dims + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..dims {
        xtx[i * dims + i] += LR_RIDGE;
    }
    let beta = solve_spd(&xtx, &xty, dims)?;
    Ok(design_matrix(test)?
        .chunks(dims)
        .map(|row| {
            row.iter()
                .zip(&beta)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0)
        })
        .collect())
}

/// Table-2-style report: BI, LR, SRA and OBA scored on the raw test data.
/// The OBA and SRA rows come from the bundle's predict path; LR is fit on the
/// raw train part.
pub fn evaluate_methods(
    bundle: &mut ModelBundle,
    raw_train: &Dataset,
    raw_test: &Dataset,
    bi_channel: usize,
    batch: usize,
) -> Result<Vec<MethodScores>> {
    let labels = raw_test.labels();
    let bi: Vec<f64> = raw_test
        .samples
        .iter()
        .map(|s| baseline_bi(s, bi_channel))
        .collect::<Result<_>>()?;
    let lr = baseline_lr(raw_train, raw_test)?;
    let sra = bundle.predict_raw_sra(raw_test, batch)?;
    let oba = bundle.predict_raw(raw_test, batch)?;
    Ok(vec![
        score_method("bi", &bi, &labels)?,
        score_method("lr", &lr, &labels)?,
        score_method("sra", &sra, &labels)?,
        score_method("oba", &oba, &labels)?,
    ])
}

fn ablation_point(raw: &Dataset, cfg: &PipelineConfig, batch: usize) -> Result<MethodScores> {
    let mut out = train_pipeline(raw, cfg)?;
    let (_, test) = carve(raw, cfg.test_fraction, cfg.seed)?;
    let preds = out.bundle.predict_raw(&test, batch)?;
    score_method("oba", &preds, &test.labels())
}

/// Retrain the full pipeline once per σ (same seed throughout) and score the
/// OBA predictions on the held-out part.
pub fn ablate_sigma(
    raw: &Dataset,
    sigmas: &[f64],
    base: &PipelineConfig,
    batch: usize,
) -> Result<Vec<(f64, MethodScores)>> {
    if sigmas.is_empty() {
        return Err(ObaError::InvalidArg("empty sigma list".into()));
    }
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(ObaError::InvalidArg(format!("bad noise level {sigma}")));
        }
        let mut cfg = base.clone();
        cfg.sigma = sigma;
        rows.push((sigma, ablation_point(raw, &cfg, batch)?));
    }
    Ok(rows)
}

/// Retrain per η; the rank count K−1 follows each η automatically.
pub fn ablate_eta(
    raw: &Dataset,
    etas: &[f64],
    base: &PipelineConfig,
    batch: usize,
) -> Result<Vec<(f64, MethodScores)>> {
    if etas.is_empty() {
        return Err(ObaError::InvalidArg("empty eta list".into()));
    }
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        if !(eta > 0.0) || !eta.is_finite() || eta > base.y_max {
            return Err(ObaError::InvalidArg(format!(
                "partition interval {eta} outside (0, {}]",
                base.y_max
            )));
        }
        let mut cfg = base.clone();
        cfg.eta = eta;
        rows.push((eta, ablation_point(raw, &cfg, batch)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{default_feature_specs, generate_dataset, GenConfig};
    use crate::tensor::Tensor;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Fixed 10-pair verification table; counts and sums done by hand.
    //   δ=0.1: TP 6 (pairs 2,5,6,7,8,10)  FP 1 (4)  FN 1 (3)  TN 2 → Ts 6/8
    //   δ=1:   TP 4 (5,6,8,10)            FP 1 (4)  FN 0      TN 5 → Ts 4/5
    //   δ=10:  TP 1 (6)                   FP 0      FN 1 (8)  TN 8 → Ts 1/2
    //   Σ|p−y| = 7.2 over 10; rain pairs (7 of them) Σ = 6.0
    const TABLE_PREDS: [f64; 10] = [0.0, 0.5, 0.0, 1.2, 2.0, 15.0, 0.1, 9.9, 0.0, 3.0];
    const TABLE_LABELS: [f64; 10] = [0.0, 0.3, 0.2, 0.0, 2.5, 12.0, 0.1, 10.0, 0.0, 1.0];

    #[test]
    fn hand_counted_table_matches() {
        let t01 = contingency(&TABLE_PREDS, &TABLE_LABELS, 0.1).unwrap();
        assert_eq!(
            t01,
            ContingencyTable {
                tp: 6,
                fp: 1,
                fn_: 1,
                tn: 2
            }
        );
        assert_eq!(ts_score(&t01), Some(0.75));
        let t1 = contingency(&TABLE_PREDS, &TABLE_LABELS, 1.0).unwrap();
        assert_eq!(
            t1,
            ContingencyTable {
                tp: 4,
                fp: 1,
                fn_: 0,
                tn: 5
            }
        );
        assert_eq!(ts_score(&t1), Some(0.8));
        let t10 = contingency(&TABLE_PREDS, &TABLE_LABELS, 10.0).unwrap();
        assert_eq!(
            t10,
            ContingencyTable {
                tp: 1,
                fp: 0,
                fn_: 1,
                tn: 8
            }
        );
        assert_eq!(ts_score(&t10), Some(0.5));
        assert!((mae(&TABLE_PREDS, &TABLE_LABELS).unwrap() - 0.72).abs() < 1e-12);
        assert!((mpae(&TABLE_PREDS, &TABLE_LABELS).unwrap() - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn all_negative_table_has_no_score() {
        let t = contingency(&[0.0, 0.05], &[0.0, 0.02], 0.1).unwrap();
        assert_eq!(t.tn, 2);
        assert_eq!(ts_score(&t), None);
    }

    #[test]
    fn contingency_spec_example() {
        let t = contingency(&[0.5, 0.0, 2.0], &[0.6, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(
            t,
            ContingencyTable {
                tp: 1,
                fp: 1,
                fn_: 0,
                tn: 1
            }
        );
        assert_eq!(ts_score(&t), Some(0.5));
    }

    #[test]
    fn contingency_rejects_empty_and_mismatched() {
        assert!(contingency(&[], &[], 0.1).is_err());
        assert!(contingency(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn counts_are_permutation_invariant_and_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let preds: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..5.0)).collect();
        let labels: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..5.0)).collect();
        let t = contingency(&preds, &labels, 1.0).unwrap();
        assert_eq!(t.tp + t.fp + t.fn_ + t.tn, 40);
        let mut order: Vec<usize> = (0..40).collect();
        order.shuffle(&mut rng);
        let sp: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
        let sl: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
        assert_eq!(contingency(&sp, &sl, 1.0).unwrap(), t);
    }

    #[test]
    fn ts_is_scale_free() {
        let c = 3.7;
        let sp: Vec<f64> = TABLE_PREDS.iter().map(|v| v * c).collect();
        let sl: Vec<f64> = TABLE_LABELS.iter().map(|v| v * c).collect();
        for delta in TS_DELTAS {
            assert_eq!(
                contingency(&TABLE_PREDS, &TABLE_LABELS, delta).unwrap(),
                contingency(&sp, &sl, delta * c).unwrap()
            );
        }
    }

    #[test]
    fn mae_mpae_spec_examples() {
        assert_eq!(mae(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mpae(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        // symmetry and the rain-only identity
        assert_eq!(
            mae(&TABLE_PREDS, &TABLE_LABELS).unwrap(),
            mae(&TABLE_LABELS, &TABLE_PREDS).unwrap()
        );
        let rain_p = [0.5, 2.0];
        let rain_l = [0.4, 2.2];
        assert_eq!(
            mpae(&rain_p, &rain_l).unwrap(),
            mae(&rain_p, &rain_l).unwrap()
        );
    }

    #[test]
    fn mpae_rejects_all_dry() {
        assert!(mpae(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    fn sample_with_grid(data: Vec<f64>, c: usize) -> GridSample {
        GridSample::new(
            Tensor::from_vec(&[c, 3, 3], data).unwrap(),
            1.0,
            30.0,
            120.0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn bi_reads_the_center_cell_clamped() {
        let mut data = vec![0.5; 9];
        data[4] = 3.2;
        let s = sample_with_grid(data, 1);
        assert_eq!(baseline_bi(&s, 0).unwrap(), 3.2);

        let s = sample_with_grid(vec![2.5; 9], 1);
        assert_eq!(baseline_bi(&s, 0).unwrap(), 2.5);

        let mut data = vec![0.0; 9];
        data[4] = -1.5;
        let s = sample_with_grid(data, 1);
        assert_eq!(baseline_bi(&s, 0).unwrap(), 0.0);

        assert!(baseline_bi(&s, 1).is_err());
    }

    /// Constant-grid dataset: each channel of sample i is the scalar
    /// columns[ch][i] everywhere, so the spatial mean is that scalar.
    fn scalar_dataset(columns: &[Vec<f64>], labels: &[f64]) -> Dataset {
        let c = columns.len();
        let samples = (0..labels.len())
            .map(|i| {
                let mut data = Vec::with_capacity(c * 9);
                for col in columns {
                    data.extend(std::iter::repeat(col[i]).take(9));
                }
                GridSample::new(
                    Tensor::from_vec(&[c, 3, 3], data).unwrap(),
                    labels[i],
                    30.0,
                    120.0,
                    i as u64,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(
            (0..c).map(|i| format!("f{i}@sfc")).collect(),
            samples,
            (c, 3, 3),
        )
        .unwrap()
    }

    #[test]
    fn lr_recovers_an_exact_linear_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f0: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f1: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = f0
            .iter()
            .zip(&f1)
            .map(|(a, b)| 2.0 + 0.5 * a - 1.25 * b)
            .collect();
        let train = scalar_dataset(&[f0[..20].to_vec(), f1[..20].to_vec()], &labels[..20]);
        let test = scalar_dataset(&[f0[20..].to_vec(), f1[20..].to_vec()], &labels[20..]);
        let preds = baseline_lr(&train, &test).unwrap();
        assert!(mae(&preds, &labels[20..]).unwrap() <= 1e-8);
    }

    #[test]
    fn lr_constant_labels_yield_intercept_only_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f0: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = vec![1.0; 12];
        let ds = scalar_dataset(&[f0], &labels);
        for p in baseline_lr(&ds, &ds).unwrap() {
            assert!((p - 1.0).abs() < 1e-6, "prediction {p}");
        }
    }

    /// Independent route: Gauss-Jordan elimination with partial pivoting on
    /// the same jittered normal equations.
    fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
            let d = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= d;
            }
            b[col] /= d;
            for row in 0..n {
                if row != col {
                    let f = a[row * n + col];
                    for k in 0..n {
                        a[row * n + k] -= f * a[col * n + k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
        b
    }

    #[test]
    fn lr_matches_an_independent_elimination_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<f64> = (0..40)
            .map(|i| {
                1.5 + cols
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (j as f64 + 0.3) * c[i])
                    .sum::<f64>()
                    + rng.gen_range(-0.1..0.1)
            })
            .map(|y| y.abs().max(0.1))
            .collect();
        let ds = scalar_dataset(&cols, &labels);
        let preds = baseline_lr(&ds, &ds).unwrap();

        let dims = 6;
        let x = design_matrix(&ds).unwrap();
        let mut xtx = vec![0.0; dims * dims];
        let mut xty = vec![0.0; dims];
        for (row, &yi) in x.chunks(dims).zip(&labels) {
            for i in 0..dims {
                xty[i] += row[i] * yi;
                for j in 0..dims {
                    xtx[i * dims + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..dims {
            xtx[i * dims + i] += LR_RIDGE;
        }
        let beta = gauss_solve(xtx, xty, dims);
        for (p, row) in preds.iter().zip(x.chunks(dims)) {
            let oracle: f64 = row
                .iter()
                .zip(&beta)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0);
            assert!((p - oracle).abs() <= 1e-8, "{p} vs {oracle}");
        }
    }

    #[test]
    fn singular_system_is_a_numeric_error() {
        // rank-1 matrix with no jitter applied
        let a = vec![1.0, 2.0, 2.0, 4.0];
        match solve_spd(&a, &[1.0, 2.0], 2) {
            Err(ObaError::Numeric(msg)) => assert!(msg.contains("singular")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn lr_needs_enough_samples() {
        let ds = scalar_dataset(&[vec![1.0, 2.0]], &[1.0, 2.0]);
        // 2 samples, needs C+1 = 2 → fine; 1 channel more → shape error path
        assert!(baseline_lr(&ds, &ds).is_ok());
        let wide = scalar_dataset(&[vec![1.0], vec![2.0]], &[1.0]);
        assert!(baseline_lr(&wide, &wide).is_err());
    }

    #[test]
    fn csv_renders_six_decimals_and_dash() {
        let rows = vec![MethodScores {
            method: "bi".into(),
            mae: 1.0 / 3.0,
            mpae: 0.5,
            ts: [Some(0.75), None, Some(1.0)],
        }];
        let csv = report_csv(&rows);
        assert_eq!(
            csv,
            "method,mae,mpae,ts_0.1,ts_1,ts_10\nbi,0.333333,0.500000,0.750000,-,1.000000\n"
        );
        let ab = ablation_csv("sigma", &[(0.01, rows[0].clone())]);
        assert!(ab.starts_with("param,value,mae,mpae,ts_0.1,ts_1,ts_10\n"));
        assert!(ab.contains("sigma,0.01,0.333333,"));
    }

    fn tiny_raw(n: usize, seed: u64) -> Dataset {
        let gen = GenConfig {
            n_samples: n,
            grid: 9,
            y_max: 2.0,
            features: default_feature_specs(4),
            seed,
            ..GenConfig::desk_default(seed)
        };
        generate_dataset(&gen).unwrap()
    }

    fn tiny_cfg(seed: u64) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(seed);
        cfg.y_max = 2.0;
        cfg.eda.epochs = 1;
        cfg.eda.batch = 32;
        cfg.selector.epochs = 1;
        cfg.selector.batch = 32;
        cfg.ordinal.epochs = 1;
        cfg.ordinal.batch = 16;
        cfg.sra.epochs = 1;
        cfg.sra.batch = 16;
        cfg
    }

    #[test]
    fn evaluate_methods_reports_all_four_rows() {
        let raw = tiny_raw(80, 50);
        let cfg = tiny_cfg(51);
        let mut out = train_pipeline(&raw, &cfg).unwrap();
        let (train, test) = carve(&raw, cfg.test_fraction, cfg.seed).unwrap();
        let rows = evaluate_methods(&mut out.bundle, &train, &test, 0, 64).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["bi", "lr", "sra", "oba"]);
        for r in &rows {
            assert!(r.mae.is_finite() && r.mpae >= 0.0);
        }
    }

    #[test]
    fn sigma_ablation_is_deterministic_and_eta_is_validated() {
        let raw = tiny_raw(60, 52);
        let mut cfg = tiny_cfg(53);
        cfg.test_fraction = 0.25;
        let a = ablate_sigma(&raw, &[0.0, 0.05], &cfg, 64).unwrap();
        let b = ablate_sigma(&raw, &[0.0, 0.05], &cfg, 64).unwrap();
        assert_eq!(ablation_csv("sigma", &a), ablation_csv("sigma", &b));
        assert_eq!(a.len(), 2);

        assert!(ablate_eta(&raw, &[2.5], &cfg, 64).is_err());
        let degenerate = ablate_eta(&raw, &[2.0], &cfg, 64).unwrap();
        assert_eq!(degenerate.len(), 1);
        assert!(degenerate[0].1.mae.is_finite());
    }
}
