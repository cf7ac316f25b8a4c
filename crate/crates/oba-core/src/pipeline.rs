//! End-to-end training: carve off the test fraction, screen features,
//! normalize, train the four networks, and assemble a [`ModelBundle`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{normalize, pearson_screen, split_rain, train_test_split, Dataset};
use crate::error::{ObaError, Result};
use crate::models::{
    train_eda, train_ordinal, train_selector, train_sra, EdaModel, EdaTrainConfig, HeadTrainConfig,
    ModelBundle,
};
use crate::ordinal::{DecodeMode, RankPartition};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub eta: f64,
    pub xi: f64,
    /// Upper end of the rank partition; training labels must not exceed it.
    pub y_max: f64,
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub decode_mode: DecodeMode,
    pub pearson_threshold: f64,
    /// Fraction held out of training and reserved for evaluation (0 = none).
    pub test_fraction: f64,
    pub seed: u64,
    pub eda: StageConfig,
    pub selector: StageConfig,
    pub ordinal: StageConfig,
    pub sra: StageConfig,
    /// Per-epoch sample cap for the ordinal and SRA stages (0 = all). The
    /// selector is never capped; its accuracy is a quality gate.
    pub sample_cap: usize,
    /// Train the ordinal subnets concurrently (bit-identical to sequential).
    pub parallel: bool,
    pub train_sra: bool,
}

impl PipelineConfig {
    /// §4.3 defaults where stated (lr 1e-3/wd 1e-2 for the EDA, lr 1e-4 for
    /// the ordinal heads, batch 256); desk-scale epoch counts elsewhere.
    pub fn new(seed: u64) -> Self {
        Self {
            eta: 0.5,
            xi: 0.5,
            y_max: 25.0,
            gamma: 2.0,
            mu: 0.0,
            sigma: 0.01,
            decode_mode: DecodeMode::Sum,
            pearson_threshold: 0.3,
            test_fraction: 0.2,
            seed,
            eda: StageConfig {
                epochs: 5,
                lr: 1e-3,
                weight_decay: 1e-2,
                batch: 256,
            },
            selector: StageConfig {
                epochs: 2,
                lr: 1e-3,
                weight_decay: 1e-4,
                batch: 256,
            },
            ordinal: StageConfig {
                epochs: 2,
                lr: 1e-4,
                weight_decay: 1e-4,
                batch: 64,
            },
            sra: StageConfig {
                epochs: 2,
                lr: 1e-3,
                weight_decay: 1e-4,
                batch: 64,
            },
            sample_cap: 0,
            parallel: true,
            train_sra: true,
        }
    }
}

pub struct PipelineOutputs {
    pub bundle: ModelBundle,
    pub eda_curve: Vec<f64>,
    pub subnet_curves: Vec<Vec<f64>>,
    pub selector_curve: Vec<f64>,
    pub selector_accuracy: f64,
    pub sra_curve: Option<Vec<f64>>,
}

/// Split a dataset the way the pipeline does. Fraction 0 keeps everything on
/// both sides (in-sample evaluation of a bundle trained on the full file).
pub fn carve(raw: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if fraction == 0.0 {
        return Ok((raw.clone(), raw.clone()));
    }
    train_test_split(raw, fraction, seed)
}

fn head_config(
    stage: &StageConfig,
    seed: u64,
    sample_cap: usize,
    parallel: bool,
) -> HeadTrainConfig {
    HeadTrainConfig {
        epochs: stage.epochs,
        lr: stage.lr,
        weight_decay: stage.weight_decay,
        batch: stage.batch,
        seed,
        sample_cap,
        parallel,
    }
}

pub fn train_pipeline(raw: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(ObaError::InvalidArg(format!(
            "test fraction {} outside [0, 1)",
            cfg.test_fraction
        )));
    }
    let partition = RankPartition::new(cfg.eta, cfg.y_max)?;
    let (train_raw, _) = carve(raw, cfg.test_fraction, cfg.seed)?;

    // cheap checks before minutes of training
    let max_label = train_raw.labels().iter().fold(0.0f64, |a, &b| a.max(b));
    if max_label > cfg.y_max {
        return Err(ObaError::InvalidArg(format!(
            "training label {max_label} exceeds configured y_max {}",
            cfg.y_max
        )));
    }
    let selection = pearson_screen(&train_raw, cfg.pearson_threshold)?;
    if selection.kept.is_empty() {
        return Err(ObaError::InvalidArg(format!(
            "screening at threshold {} removed every feature",
            cfg.pearson_threshold
        )));
    }
    let selected = train_raw.select_channels(&selection.kept)?;
    let (norm, stats) = normalize(&selected)?;
    let (_, h, w) = norm.shape();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eda = EdaModel::new(selection.kept.len(), h, w, cfg.mu, cfg.sigma, &mut rng)?;
    let eda_curve = train_eda(
        &mut eda,
        &norm,
        &EdaTrainConfig {
            epochs: cfg.eda.epochs,
            lr: cfg.eda.lr,
            weight_decay: cfg.eda.weight_decay,
            batch: cfg.eda.batch,
            seed: cfg.seed,
        },
    )?;

    let (rain, _) = split_rain(&norm);
    if rain.is_empty() {
        return Err(ObaError::InvalidArg(
            "training data has no rain samples".into(),
        ));
    }
    let (subnets, subnet_curves) = train_ordinal(
        &mut eda,
        &rain,
        &partition,
        cfg.gamma,
        &head_config(&cfg.ordinal, cfg.seed, cfg.sample_cap, cfg.parallel),
    )?;
    let (selector, selector_curve, selector_accuracy) = train_selector(
        &norm,
        &head_config(&cfg.selector, cfg.seed.wrapping_sub(GOLDEN), 0, false),
    )?;
    let (sra, sra_curve) = if cfg.train_sra {
        let (model, curve) = train_sra(
            &mut eda,
            &rain,
            &head_config(
                &cfg.sra,
                cfg.seed.wrapping_sub(GOLDEN.wrapping_mul(2)),
                cfg.sample_cap,
                false,
            ),
        )?;
        (Some(model), Some(curve))
    } else {
        (None, None)
    };

    let feature_names = selected.feature_names.clone();
    Ok(PipelineOutputs {
        bundle: ModelBundle {
            eda,
            subnets,
            selector,
            sra,
            partition,
            stats,
            kept: selection.kept,
            feature_names,
            xi: cfg.xi,
            decode_mode: cfg.decode_mode,
            split_fraction: cfg.test_fraction,
            split_seed: cfg.seed,
        },
        eda_curve,
        subnet_curves,
        selector_curve,
        selector_accuracy,
        sra_curve,
    })
}
