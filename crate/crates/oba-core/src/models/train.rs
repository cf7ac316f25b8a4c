use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    bce_loss, mse_scalar_loss, reconstruction_loss, EdaModel, OrdinalSubnet, SelectorModel,
    SraModel,
};
use crate::data::{train_test_split, Dataset};
use crate::error::{ObaError, Result};
use crate::nn::{Adam, AdamConfig, Mode, Param};
use crate::ordinal::{encode, focal_ordinal_loss, rank_frequencies, FocalParams, RankPartition};
use crate::tensor::Tensor;

/// Channel width of z, the first encoder stage's output.
pub const Z_CHANNELS: usize = 32;

#[derive(Debug, Clone)]
pub struct EdaTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub seed: u64,
}

impl EdaTrainConfig {
    /// §4.3 defaults: lr 1e-3, weight decay 1e-2, mini-batch 256.
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 5,
            lr: 1e-3,
            weight_decay: 1e-2,
            batch: 256,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub seed: u64,
    /// Per-epoch cap on training samples (0 = use all). Keeps the K−1 subnet
    /// sweep inside a fixed compute budget on large datasets.
    pub sample_cap: usize,
    /// Train subnets concurrently; results are identical to sequential
    /// because each subnet owns a seed derived from (seed, k).
    pub parallel: bool,
}

impl HeadTrainConfig {
    /// §4.3 defaults for the ordinal heads: lr and weight decay 1e-4.
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 2,
            lr: 1e-4,
            weight_decay: 1e-4,
            batch: 64,
            seed,
            sample_cap: 0,
            parallel: false,
        }
    }
}

fn check_batch(batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(ObaError::InvalidArg("batch size must be positive".into()));
    }
    Ok(())
}

/// Run one Adam step over every parameter a model exposes.
fn step_params(
    adam: &mut Adam,
    visit: &mut dyn FnMut(&mut dyn FnMut(String, &mut Param)),
) -> Result<()> {
    let mut first_err: Option<ObaError> = None;
    visit(&mut |name, p| {
        if first_err.is_none() {
            if let Err(e) = adam.step(&name, p) {
                first_err = Some(e);
            }
        }
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Copy the given leading-axis rows of a stacked tensor into a new batch.
pub(crate) fn gather_rows(t: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let n = t.shape()[0];
    let row = t.len() / n.max(1);
    let mut shape = t.shape().to_vec();
    shape[0] = indices.len();
    let mut out = Tensor::zeros(&shape);
    for (bi, &i) in indices.iter().enumerate() {
        if i >= n {
            return Err(ObaError::InvalidArg(format!("row {i} out of range ({n})")));
        }
        out.data_mut()[bi * row..(bi + 1) * row].copy_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    Ok(out)
}

/// Eval-mode z features for a whole dataset, computed in batches. The EDA is
/// read as a frozen feature extractor and must have been trained.
pub fn encode_dataset(eda: &mut EdaModel, data: &Dataset, batch: usize) -> Result<Tensor> {
    check_batch(batch)?;
    let n = data.len();
    let (h, w) = eda.grid();
    let mut out = Tensor::zeros(&[n, Z_CHANNELS, h, w]);
    let row = Z_CHANNELS * h * w;
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(batch) {
        let x = data.batch(chunk)?;
        let z = eda.encode_eval(&x)?;
        let start = chunk[0] * row;
        out.data_mut()[start..start + chunk.len() * row].copy_from_slice(z.data());
    }
    Ok(out)
}

/// Train the denoising autoencoder with Eq. 4; returns the per-epoch loss
/// curve. Zero epochs leave the model untouched.
pub fn train_eda(eda: &mut EdaModel, data: &Dataset, cfg: &EdaTrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(ObaError::InvalidArg("EDA training data is empty".into()));
    }
    check_batch(cfg.batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let x = data.batch(chunk)?;
            let (_, _, x_hat) = eda.forward_train(&x, Mode::Train, &mut rng)?;
            let (loss, grad) = reconstruction_loss(&x, &x_hat)?;
            if !loss.is_finite() {
                return Err(ObaError::Numeric(format!(
                    "EDA training diverged at epoch {epoch}"
                )));
            }
            eda.zero_grad();
            eda.backward(&grad)?;
            step_params(&mut adam, &mut |f| eda.visit_params(f))?;
            total += loss * chunk.len() as f64;
        }
        curve.push(total / data.len() as f64);
    }
    Ok(curve)
}

fn subnet_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Train the K−1 ordinal subnets against the bits of encode(y) on rain data,
/// each with the focal loss restricted to its own rank. Returns the subnets
/// and their per-epoch loss curves. Subnets are independent; `cfg.parallel`
/// trains them concurrently with bit-identical results.
pub fn train_ordinal(
    eda: &mut EdaModel,
    rain: &Dataset,
    partition: &RankPartition,
    gamma: f64,
    cfg: &HeadTrainConfig,
) -> Result<(Vec<OrdinalSubnet>, Vec<Vec<f64>>)> {
    if rain.is_empty() {
        return Err(ObaError::InvalidArg(
            "ordinal training data is empty".into(),
        ));
    }
    check_batch(cfg.batch)?;
    let labels = rain.labels();
    if labels.iter().any(|&y| y <= 0.0) {
        return Err(ObaError::InvalidArg(
            "ordinal training expects rain samples only".into(),
        ));
    }
    let alphas = rank_frequencies(&labels, partition)?;
    let n = labels.len();
    let k_total = partition.n_ranks();
    // bits[k][i] = d_k of sample i
    let mut bits = vec![vec![0.0; n]; k_total];
    for (i, &y) in labels.iter().enumerate() {
        for (k, bit) in encode(y, partition)?.into_iter().enumerate() {
            bits[k][i] = bit;
        }
    }
    let z_all = encode_dataset(eda, rain, 256)?;

    let train_one = |k: usize| -> Result<(OrdinalSubnet, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(subnet_seed(cfg.seed, k));
        let mut subnet = OrdinalSubnet::new(Z_CHANNELS, 1.0 - alphas[k], &mut rng)?;
        let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
        let focal = FocalParams::new(gamma, vec![alphas[k]])?;
        let mut order: Vec<usize> = (0..n).collect();
        let mut curve = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let take = if cfg.sample_cap > 0 {
                cfg.sample_cap.min(n)
            } else {
                n
            };
            let mut total = 0.0;
            for chunk in order[..take].chunks(cfg.batch) {
                let zb = gather_rows(&z_all, chunk)?;
                let tb = Tensor::from_vec(
                    &[chunk.len(), 1],
                    chunk.iter().map(|&i| bits[k][i]).collect(),
                )?;
                let probs = subnet.forward(&zb, Mode::Train, &mut rng)?;
                let (loss, dp) = focal_ordinal_loss(&probs, &tb, &focal)?;
                if !loss.is_finite() {
                    return Err(ObaError::Numeric(format!(
                        "subnet {k} diverged at epoch {epoch}"
                    )));
                }
                subnet.zero_grad();
                subnet.backward_params_only(&dp)?;
                step_params(&mut adam, &mut |f| subnet.visit_params(f))?;
                total += loss * chunk.len() as f64;
            }
            curve.push(total / take as f64);
        }
        Ok((subnet, curve))
    };

    let results: Vec<Result<(OrdinalSubnet, Vec<f64>)>> = if cfg.parallel {
        (0..k_total).into_par_iter().map(train_one).collect()
    } else {
        (0..k_total).map(train_one).collect()
    };
    let mut subnets = Vec::with_capacity(k_total);
    let mut curves = Vec::with_capacity(k_total);
    for r in results {
        let (s, c) = r?;
        subnets.push(s);
        curves.push(c);
    }
    Ok((subnets, curves))
}

/// Held-out rain/dry accuracy of a trained selector at the 0.5 gate.
pub fn selector_accuracy(selector: &mut SelectorModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(ObaError::InvalidArg("accuracy on empty data".into()));
    }
    let labels = data.labels();
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut hits = 0usize;
    for chunk in indices.chunks(256) {
        let x = data.batch(chunk)?;
        let p = selector.forward(&x, Mode::Eval)?;
        for (j, &i) in chunk.iter().enumerate() {
            let said_rain = p.data()[j] >= 0.5;
            if said_rain == (labels[i] > 0.0) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Train the rain/dry selector with plain BCE on all training samples,
/// holding out 10% for an accuracy estimate. Returns (model, loss curve,
/// held-out accuracy).
pub fn train_selector(
    data: &Dataset,
    cfg: &HeadTrainConfig,
) -> Result<(SelectorModel, Vec<f64>, f64)> {
    check_batch(cfg.batch)?;
    let rain = data.labels().iter().filter(|&&y| y > 0.0).count();
    if rain == 0 || rain == data.len() {
        return Err(ObaError::InvalidArg(
            "selector training needs both rain and dry samples".into(),
        ));
    }
    let (train_part, holdout) = train_test_split(data, 0.1, cfg.seed)?;
    let (c, _, _) = data.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut selector = SelectorModel::new(c, &mut rng)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let labels = train_part.labels();
    let n = train_part.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let take = if cfg.sample_cap > 0 {
            cfg.sample_cap.min(n)
        } else {
            n
        };
        let mut total = 0.0;
        for chunk in order[..take].chunks(cfg.batch) {
            let x = train_part.batch(chunk)?;
            let t = Tensor::from_vec(
                &[chunk.len(), 1],
                chunk.iter().map(|&i| f64::from(labels[i] > 0.0)).collect(),
            )?;
            let probs = selector.forward(&x, Mode::Train)?;
            let (loss, dp) = bce_loss(&probs, &t)?;
            if !loss.is_finite() {
                return Err(ObaError::Numeric(format!(
                    "selector diverged at epoch {epoch}"
                )));
            }
            selector.zero_grad();
            selector.backward_params_only(&dp)?;
            step_params(&mut adam, &mut |f| selector.visit_params(f))?;
            total += loss * chunk.len() as f64;
        }
        curve.push(total / take as f64);
    }
    let acc = selector_accuracy(&mut selector, &holdout)?;
    Ok((selector, curve, acc))
}

/// Train the SRA baseline: the subnet architecture with a scalar head and the
/// Eq. 5 least-squares objective, on rain samples over frozen z.
pub fn train_sra(
    eda: &mut EdaModel,
    rain: &Dataset,
    cfg: &HeadTrainConfig,
) -> Result<(SraModel, Vec<f64>)> {
    if rain.is_empty() {
        return Err(ObaError::InvalidArg("SRA training data is empty".into()));
    }
    check_batch(cfg.batch)?;
    let labels = rain.labels();
    if labels.iter().any(|&y| y <= 0.0) {
        return Err(ObaError::InvalidArg(
            "SRA training expects rain samples only".into(),
        ));
    }
    let z_all = encode_dataset(eda, rain, 256)?;
    let prior_mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sra = SraModel::new(Z_CHANNELS, prior_mean, &mut rng)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let take = if cfg.sample_cap > 0 {
            cfg.sample_cap.min(n)
        } else {
            n
        };
        let mut total = 0.0;
        for chunk in order[..take].chunks(cfg.batch) {
            let zb = gather_rows(&z_all, chunk)?;
            let targets: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let preds = sra.forward(&zb, Mode::Train, &mut rng)?;
            let (loss, dp) = mse_scalar_loss(&preds, &targets)?;
            if !loss.is_finite() {
                return Err(ObaError::Numeric(format!("SRA diverged at epoch {epoch}")));
            }
            sra.zero_grad();
            sra.backward_params_only(&dp)?;
            step_params(&mut adam, &mut |f| sra.visit_params(f))?;
            total += loss * chunk.len() as f64;
        }
        curve.push(total / take as f64);
    }
    Ok((sra, curve))
}
