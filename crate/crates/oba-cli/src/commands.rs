//! Subcommand bodies. Results go to files; everything chatty goes to stderr.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oba_core::data::{pearson_screen, read_dataset, selection_text, split_rain, write_dataset};
use oba_core::eval::{ablate_eta, ablate_sigma, ablation_csv, evaluate_methods, report_csv};
use oba_core::models::{
    load_bundle, save_bundle, train_eda, train_ordinal, train_selector, train_sra, EdaModel,
    EdaTrainConfig, HeadTrainConfig, ModelBundle,
};
use oba_core::pipeline::{carve, train_pipeline};
use oba_core::synthgen::generate_dataset;
use oba_core::{ObaError, Result};

use crate::config::{parse_config, RunConfig};
use crate::manifest::{output_dir, RunManifest};
use crate::plot::{
    ablation_svg, heatmap_svg, histogram_svg, parse_ablation_csv, HeatPanel, HeatRow,
};
use crate::{AblateParam, Command, PlotKind, Stage};

pub enum CliError {
    /// Bad command line (exit 1); file and numeric problems map from ObaError.
    Usage(String),
    Core(ObaError),
}

impl From<ObaError> for CliError {
    fn from(e: ObaError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(ObaError::Io(e))
    }
}

type CliResult = std::result::Result<(), CliError>;

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Gen { config, out, seed } => gen(config.as_deref(), &out, seed),
        Command::Screen { data, out, config } => screen(&data, &out, config.as_deref()),
        Command::Train {
            data,
            out,
            stage,
            config,
            seed,
        } => train(&data, &out, stage, config.as_deref(), seed),
        Command::Eval {
            data,
            model,
            report,
            config,
        } => eval(&data, &model, &report, config.as_deref()),
        Command::Predict {
            data,
            model,
            out,
            config,
        } => predict(&data, &model, &out, config.as_deref()),
        Command::Ablate {
            data,
            param,
            values,
            report,
            config,
            seed,
        } => ablate(&data, param, &values, &report, config.as_deref(), seed),
        Command::Plot {
            kind,
            input,
            out,
            model,
            samples,
            channel,
        } => plot(kind, &input, &out, model.as_deref(), &samples, channel),
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(parse_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn manifest_with_config(
    command: &str,
    config_path: Option<&Path>,
    cfg: &RunConfig,
) -> std::result::Result<RunManifest, CliError> {
    let mut m = RunManifest::new(command);
    if let Some(p) = config_path {
        m = m.input(p)?;
    }
    Ok(m.config(&cfg.to_text()))
}

fn gen(config_path: Option<&Path>, out: &Path, seed: u64) -> CliResult {
    let cfg = load_config(config_path)?;
    let dataset = generate_dataset(&cfg.gen_config(seed))?;
    write_dataset(&dataset, out)?;
    manifest_with_config("gen", config_path, &cfg)?
        .seed(seed)
        .write(&output_dir(out))?;
    let rain = dataset.labels().iter().filter(|&&y| y > 0.0).count();
    eprintln!(
        "gen: {} samples ({} rain) -> {}",
        dataset.len(),
        rain,
        out.display()
    );
    Ok(())
}

fn screen(data_path: &Path, out: &Path, config_path: Option<&Path>) -> CliResult {
    let cfg = load_config(config_path)?;
    let data = read_dataset(data_path)?;
    let selection = pearson_screen(&data, cfg.train.pearson_threshold)?;
    fs::write(out, selection_text(&selection, &data.feature_names)?)?;
    manifest_with_config("screen", config_path, &cfg)?
        .input(data_path)?
        .write(&output_dir(out))?;
    eprintln!(
        "screen: kept {}/{} features at |r| >= {} -> {}",
        selection.kept.len(),
        data.feature_names.len(),
        cfg.train.pearson_threshold,
        out.display()
    );
    Ok(())
}

fn curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, v) in curve.iter().enumerate() {
        s.push_str(&format!("{},{v:.6}\n", i + 1));
    }
    s
}

fn subnet_curve_csv(curves: &[Vec<f64>]) -> String {
    let mut s = String::from("subnet,epoch,loss\n");
    for (k, curve) in curves.iter().enumerate() {
        for (i, v) in curve.iter().enumerate() {
            s.push_str(&format!("{k},{},{v:.6}\n", i + 1));
        }
    }
    s
}

fn train(
    data_path: &Path,
    out: &Path,
    stage: Stage,
    config_path: Option<&Path>,
    seed: u64,
) -> CliResult {
    let cfg = load_config(config_path)?;
    let raw = read_dataset(data_path)?;
    fs::create_dir_all(out)?;
    match stage {
        Stage::All => {
            let outputs = train_pipeline(&raw, &cfg.pipeline_config(seed))?;
            save_bundle(&outputs.bundle, out)?;
            fs::write(out.join("curve_eda.csv"), curve_csv(&outputs.eda_curve))?;
            fs::write(
                out.join("curve_ordinal.csv"),
                subnet_curve_csv(&outputs.subnet_curves),
            )?;
            fs::write(
                out.join("curve_selector.csv"),
                curve_csv(&outputs.selector_curve),
            )?;
            if let Some(curve) = &outputs.sra_curve {
                fs::write(out.join("curve_sra.csv"), curve_csv(curve))?;
            }
            eprintln!(
                "train: {} subnets, selector held-out accuracy {:.4} -> {}",
                outputs.bundle.subnets.len(),
                outputs.selector_accuracy,
                out.display()
            );
        }
        stage => train_stage(&raw, out, stage, &cfg, seed)?,
    }
    manifest_with_config("train", config_path, &cfg)?
        .seed(seed)
        .input(data_path)?
        .write(out)?;
    Ok(())
}

/// Retrain one component of an existing bundle in place, reusing its stored
/// screening, normalization, partition and data split.
fn train_stage(
    raw: &oba_core::data::Dataset,
    out: &Path,
    stage: Stage,
    cfg: &RunConfig,
    seed: u64,
) -> CliResult {
    let mut bundle = load_bundle(out)?;
    let (train_raw, _) = carve(raw, bundle.split_fraction, bundle.split_seed)?;
    let norm = bundle.prepare(&train_raw)?;
    match stage {
        Stage::All => unreachable!("handled by the caller"),
        Stage::Eda => {
            let (_, h, w) = norm.shape();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bundle.eda = EdaModel::new(
                bundle.kept.len(),
                h,
                w,
                cfg.train.mu,
                cfg.train.sigma,
                &mut rng,
            )?;
            let curve = train_eda(
                &mut bundle.eda,
                &norm,
                &EdaTrainConfig {
                    epochs: cfg.train.epochs_eda,
                    lr: cfg.train.lr_eda,
                    weight_decay: cfg.train.wd_eda,
                    batch: cfg.train.batch,
                    seed,
                },
            )?;
            fs::write(out.join("curve_eda.csv"), curve_csv(&curve))?;
            eprintln!("train: EDA retrained; subnets/selector/sra still match the old trunk");
        }
        Stage::Ordinal => {
            let (rain, _) = split_rain(&norm);
            let (subnets, curves) = train_ordinal(
                &mut bundle.eda,
                &rain,
                &bundle.partition,
                cfg.ordinal.gamma,
                &HeadTrainConfig {
                    epochs: cfg.ordinal.epochs_ord,
                    lr: cfg.ordinal.lr_ord,
                    weight_decay: cfg.ordinal.wd_ord,
                    batch: cfg.ordinal.batch_ord,
                    seed,
                    sample_cap: cfg.ordinal.sample_cap,
                    parallel: cfg.train.parallel,
                },
            )?;
            bundle.subnets = subnets;
            fs::write(out.join("curve_ordinal.csv"), subnet_curve_csv(&curves))?;
            eprintln!("train: {} ordinal subnets retrained", bundle.subnets.len());
        }
        Stage::Selector => {
            let (selector, curve, accuracy) = train_selector(
                &norm,
                &HeadTrainConfig {
                    epochs: cfg.train.epochs_selector,
                    lr: cfg.train.lr_selector,
                    weight_decay: cfg.train.wd_selector,
                    batch: cfg.train.batch,
                    seed,
                    sample_cap: 0,
                    parallel: false,
                },
            )?;
            bundle.selector = selector;
            fs::write(out.join("curve_selector.csv"), curve_csv(&curve))?;
            eprintln!("train: selector retrained, held-out accuracy {accuracy:.4}");
        }
        Stage::Sra => {
            let (rain, _) = split_rain(&norm);
            let (sra, curve) = train_sra(
                &mut bundle.eda,
                &rain,
                &HeadTrainConfig {
                    epochs: cfg.train.epochs_sra,
                    lr: cfg.train.lr_sra,
                    weight_decay: cfg.train.wd_sra,
                    batch: cfg.ordinal.batch_ord,
                    seed,
                    sample_cap: cfg.ordinal.sample_cap,
                    parallel: false,
                },
            )?;
            bundle.sra = Some(sra);
            fs::write(out.join("curve_sra.csv"), curve_csv(&curve))?;
            eprintln!("train: SRA head retrained");
        }
    }
    save_bundle(&bundle, out)?;
    Ok(())
}

fn eval(data_path: &Path, model: &Path, report: &Path, config_path: Option<&Path>) -> CliResult {
    let cfg = load_config(config_path)?;
    let raw = read_dataset(data_path)?;
    let mut bundle = load_bundle(model)?;
    let (train_raw, test_raw) = carve(&raw, bundle.split_fraction, bundle.split_seed)?;
    let rows = evaluate_methods(
        &mut bundle,
        &train_raw,
        &test_raw,
        cfg.eval.bi_channel,
        cfg.eval.batch,
    )?;
    fs::write(report, report_csv(&rows))?;
    manifest_with_config("eval", config_path, &cfg)?
        .input(data_path)?
        .input(&model.join("manifest.txt"))?
        .write(&output_dir(report))?;
    eprintln!(
        "eval: {} test samples (split {} seed {}) -> {}",
        test_raw.len(),
        bundle.split_fraction,
        bundle.split_seed,
        report.display()
    );
    Ok(())
}

fn predict(data_path: &Path, model: &Path, out: &Path, config_path: Option<&Path>) -> CliResult {
    let cfg = load_config(config_path)?;
    let raw = read_dataset(data_path)?;
    let mut bundle = load_bundle(model)?;
    let preds = bundle.predict_raw(&raw, cfg.eval.batch)?;
    let mut csv = String::from("sample_index,prediction_mm\n");
    for (i, p) in preds.iter().enumerate() {
        csv.push_str(&format!("{i},{p:.6}\n"));
    }
    fs::write(out, csv)?;
    manifest_with_config("predict", config_path, &cfg)?
        .input(data_path)?
        .input(&model.join("manifest.txt"))?
        .write(&output_dir(out))?;
    eprintln!("predict: {} samples -> {}", preds.len(), out.display());
    Ok(())
}

fn parse_values(values: &str) -> std::result::Result<Vec<f64>, CliError> {
    let parsed: std::result::Result<Vec<f64>, _> =
        values.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match parsed {
        Ok(vs) if !vs.is_empty() => Ok(vs),
        _ => Err(CliError::Usage(format!(
            "--values must be comma-separated numbers, got '{values}'"
        ))),
    }
}

fn ablate(
    data_path: &Path,
    param: AblateParam,
    values: &str,
    report: &Path,
    config_path: Option<&Path>,
    seed: u64,
) -> CliResult {
    let cfg = load_config(config_path)?;
    let vs = parse_values(values)?;
    let raw = read_dataset(data_path)?;
    let base = cfg.pipeline_config(seed);
    let (name, rows) = match param {
        AblateParam::Sigma => ("sigma", ablate_sigma(&raw, &vs, &base, cfg.eval.batch)?),
        AblateParam::Eta => ("eta", ablate_eta(&raw, &vs, &base, cfg.eval.batch)?),
    };
    fs::write(report, ablation_csv(name, &rows))?;
    manifest_with_config("ablate", config_path, &cfg)?
        .seed(seed)
        .input(data_path)?
        .write(&output_dir(report))?;
    eprintln!(
        "ablate: {} points over {name} -> {}",
        rows.len(),
        report.display()
    );
    Ok(())
}

fn parse_indices(samples: &str) -> std::result::Result<Vec<usize>, CliError> {
    let parsed: std::result::Result<Vec<usize>, _> = samples
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect();
    match parsed {
        Ok(idx) if !idx.is_empty() => Ok(idx),
        _ => Err(CliError::Usage(format!(
            "--samples must be comma-separated indices, got '{samples}'"
        ))),
    }
}

fn heatmap_rows(
    data: &oba_core::data::Dataset,
    bundle: &mut ModelBundle,
    indices: &[usize],
    channel: usize,
) -> Result<Vec<HeatRow>> {
    let (c, h, w) = data.shape();
    if channel >= c {
        return Err(ObaError::InvalidArg(format!(
            "channel {channel} out of range for {c}-channel data"
        )));
    }
    let sub = data.subset(indices)?;
    let oba = bundle.predict_raw(&sub, 16)?;
    let sra = bundle.predict_raw_sra(&sub, 16)?;
    Ok(sub
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let grid = s.features.data()[channel * h * w..(channel + 1) * h * w].to_vec();
            HeatRow {
                label: format!("sample {}", indices[i]),
                panels: vec![
                    HeatPanel::grid("uncorrected", h, w, grid),
                    HeatPanel::uniform("SRA", h, w, sra[i]),
                    HeatPanel::uniform("OBA", h, w, oba[i]),
                    HeatPanel::uniform("truth", h, w, s.label),
                ],
            }
        })
        .collect())
}

fn plot(
    kind: PlotKind,
    input: &Path,
    out: &Path,
    model: Option<&Path>,
    samples: &str,
    channel: usize,
) -> CliResult {
    let mut manifest = RunManifest::new("plot").input(input)?;
    let svg = match kind {
        PlotKind::Histogram => histogram_svg(&read_dataset(input)?.labels())?,
        PlotKind::Ablation => {
            let text = fs::read_to_string(input)?;
            ablation_svg(&parse_ablation_csv(&text)?)?
        }
        PlotKind::Heatmap => {
            let model = model
                .ok_or_else(|| CliError::Usage("--model is required for --kind heatmap".into()))?;
            let data = read_dataset(input)?;
            let mut bundle = load_bundle(model)?;
            if bundle.sra.is_none() {
                return Err(ObaError::MissingComponent(
                    "sra.obawt (train with sra = true to enable the SRA panel)".into(),
                )
                .into());
            }
            let indices = parse_indices(samples)?;
            manifest = manifest.input(&model.join("manifest.txt"))?;
            heatmap_svg(&heatmap_rows(&data, &mut bundle, &indices, channel)?)?
        }
    };
    fs::write(out, svg)?;
    manifest.write(&output_dir(out))?;
    eprintln!("plot: {}", out.display());
    Ok(())
}
