//! Run configuration: `[section]` headers, `key = value` lines, `#`
//! comments. Every key has a default, unknown keys are rejected, and parse
//! errors carry line numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oba_core::ordinal::DecodeMode;
use oba_core::pipeline::{PipelineConfig, StageConfig};
use oba_core::synthgen::{default_feature_specs, GenConfig};
use oba_core::{ObaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GenSection {
    pub n_samples: usize,
    pub grid: usize,
    pub p0: f64,
    pub mu_ln: f64,
    pub sigma_ln: f64,
    pub y_max: f64,
    pub features: usize,
    pub obs_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub sigma: f64,
    pub mu: f64,
    pub lr_eda: f64,
    pub wd_eda: f64,
    pub epochs_eda: usize,
    pub batch: usize,
    pub lr_selector: f64,
    pub wd_selector: f64,
    pub epochs_selector: usize,
    pub lr_sra: f64,
    pub wd_sra: f64,
    pub epochs_sra: usize,
    pub pearson_threshold: f64,
    pub sra: bool,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalSection {
    pub eta: f64,
    pub xi: f64,
    /// Rank partition cap; `None` inherits `[gen] y_max`.
    pub y_max: Option<f64>,
    pub gamma: f64,
    pub lr_ord: f64,
    pub wd_ord: f64,
    pub epochs_ord: usize,
    pub batch_ord: usize,
    pub sample_cap: usize,
    pub decode: DecodeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub test_fraction: f64,
    pub bi_channel: usize,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gen: GenSection,
    pub train: TrainSection,
    pub ordinal: OrdinalSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gen: GenSection {
                n_samples: 5000,
                grid: 17,
                p0: 0.6,
                mu_ln: 0.0,
                sigma_ln: 1.25,
                y_max: 25.0,
                features: 12,
                obs_noise: 0.3,
            },
            train: TrainSection {
                sigma: 0.01,
                mu: 0.0,
                lr_eda: 1e-3,
                wd_eda: 1e-2,
                epochs_eda: 5,
                batch: 256,
                lr_selector: 1e-3,
                wd_selector: 1e-4,
                epochs_selector: 2,
                lr_sra: 1e-3,
                wd_sra: 1e-4,
                epochs_sra: 2,
                pearson_threshold: 0.3,
                sra: true,
                parallel: true,
            },
            ordinal: OrdinalSection {
                eta: 0.5,
                xi: 0.5,
                y_max: None,
                gamma: 2.0,
                lr_ord: 1e-4,
                wd_ord: 1e-4,
                epochs_ord: 2,
                batch_ord: 64,
                sample_cap: 0,
                decode: DecodeMode::Sum,
            },
            eval: EvalSection {
                test_fraction: 0.2,
                bi_channel: 0,
                batch: 256,
            },
        }
    }
}

impl RunConfig {
    /// Effective partition cap: explicit `[ordinal] y_max` or the label range
    /// of the generator.
    pub fn partition_y_max(&self) -> f64 {
        self.ordinal.y_max.unwrap_or(self.gen.y_max)
    }

    pub fn gen_config(&self, seed: u64) -> GenConfig {
        GenConfig {
            n_samples: self.gen.n_samples,
            grid: self.gen.grid,
            p0: self.gen.p0,
            mu_ln: self.gen.mu_ln,
            sigma_ln: self.gen.sigma_ln,
            y_min: 0.1,
            y_max: self.gen.y_max,
            features: default_feature_specs(self.gen.features),
            obs_noise: self.gen.obs_noise,
            seed,
        }
    }

    pub fn pipeline_config(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            eta: self.ordinal.eta,
            xi: self.ordinal.xi,
            y_max: self.partition_y_max(),
            gamma: self.ordinal.gamma,
            mu: self.train.mu,
            sigma: self.train.sigma,
            decode_mode: self.ordinal.decode,
            pearson_threshold: self.train.pearson_threshold,
            test_fraction: self.eval.test_fraction,
            seed,
            eda: StageConfig {
                epochs: self.train.epochs_eda,
                lr: self.train.lr_eda,
                weight_decay: self.train.wd_eda,
                batch: self.train.batch,
            },
            selector: StageConfig {
                epochs: self.train.epochs_selector,
                lr: self.train.lr_selector,
                weight_decay: self.train.wd_selector,
                batch: self.train.batch,
            },
            ordinal: StageConfig {
                epochs: self.ordinal.epochs_ord,
                lr: self.ordinal.lr_ord,
                weight_decay: self.ordinal.wd_ord,
                batch: self.ordinal.batch_ord,
            },
            sra: StageConfig {
                epochs: self.train.epochs_sra,
                lr: self.train.lr_sra,
                weight_decay: self.train.wd_sra,
                batch: self.ordinal.batch_ord,
            },
            sample_cap: self.ordinal.sample_cap,
            parallel: self.train.parallel,
            train_sra: self.train.sra,
        }
    }

    /// The effective configuration as text that `parse_config` accepts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[gen]");
        let _ = writeln!(s, "n_samples = {}", self.gen.n_samples);
        let _ = writeln!(s, "grid = {}", self.gen.grid);
        let _ = writeln!(s, "p0 = {}", self.gen.p0);
        let _ = writeln!(s, "mu_ln = {}", self.gen.mu_ln);
        let _ = writeln!(s, "sigma_ln = {}", self.gen.sigma_ln);
        let _ = writeln!(s, "y_max = {}", self.gen.y_max);
        let _ = writeln!(s, "features = {}", self.gen.features);
        let _ = writeln!(s, "obs_noise = {}", self.gen.obs_noise);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "sigma = {}", self.train.sigma);
        let _ = writeln!(s, "mu = {}", self.train.mu);
        let _ = writeln!(s, "lr_eda = {}", self.train.lr_eda);
        let _ = writeln!(s, "wd_eda = {}", self.train.wd_eda);
        let _ = writeln!(s, "epochs_eda = {}", self.train.epochs_eda);
        let _ = writeln!(s, "batch = {}", self.train.batch);
        let _ = writeln!(s, "lr_selector = {}", self.train.lr_selector);
        let _ = writeln!(s, "wd_selector = {}", self.train.wd_selector);
        let _ = writeln!(s, "epochs_selector = {}", self.train.epochs_selector);
        let _ = writeln!(s, "lr_sra = {}", self.train.lr_sra);
        let _ = writeln!(s, "wd_sra = {}", self.train.wd_sra);
        let _ = writeln!(s, "epochs_sra = {}", self.train.epochs_sra);
        let _ = writeln!(s, "pearson_threshold = {}", self.train.pearson_threshold);
        let _ = writeln!(s, "sra = {}", self.train.sra);
        let _ = writeln!(s, "parallel = {}", self.train.parallel);
        let _ = writeln!(s, "\n[ordinal]");
        let _ = writeln!(s, "eta = {}", self.ordinal.eta);
        let _ = writeln!(s, "xi = {}", self.ordinal.xi);
        let _ = writeln!(s, "y_max = {}", self.partition_y_max());
        let _ = writeln!(s, "gamma = {}", self.ordinal.gamma);
        let _ = writeln!(s, "lr_ord = {}", self.ordinal.lr_ord);
        let _ = writeln!(s, "wd_ord = {}", self.ordinal.wd_ord);
        let _ = writeln!(s, "epochs_ord = {}", self.ordinal.epochs_ord);
        let _ = writeln!(s, "batch_ord = {}", self.ordinal.batch_ord);
        let _ = writeln!(s, "sample_cap = {}", self.ordinal.sample_cap);
        let _ = writeln!(
            s,
            "decode = {}",
            match self.ordinal.decode {
                DecodeMode::Sum => "sum",
                DecodeMode::Prefix => "prefix",
            }
        );
        let _ = writeln!(s, "\n[eval]");
        let _ = writeln!(s, "test_fraction = {}", self.eval.test_fraction);
        let _ = writeln!(s, "bi_channel = {}", self.eval.bi_channel);
        let _ = writeln!(s, "batch = {}", self.eval.batch);
        s
    }
}

/// Raw `key -> (value, line)` map of one section.
struct RawSection {
    name: &'static str,
    entries: BTreeMap<String, (String, usize)>,
}

impl RawSection {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            entries: BTreeMap::new(),
        }
    }

    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if self
            .entries
            .insert(key.to_string(), (value.to_string(), line))
            .is_some()
        {
            return Err(ObaError::Format(format!(
                "config line {line}: duplicate key '{key}' in [{}]",
                self.name
            )));
        }
        Ok(())
    }

    fn take_raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str, default: T, what: &str) -> Result<T> {
        match self.take_raw(key) {
            None => Ok(default),
            Some((raw, line)) => raw.parse().map_err(|_| {
                ObaError::Format(format!(
                    "config line {line}: value for '{key}' is not {what}: {raw}"
                ))
            }),
        }
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        self.take(key, default, "a number")
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        self.take(key, default, "a non-negative integer")
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        self.take(key, default, "true or false")
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(ObaError::Format(format!(
                "config line {line}: unknown key '{key}' in [{}]",
                self.name
            )));
        }
        Ok(())
    }
}

pub fn parse_config_text(text: &str) -> Result<RunConfig> {
    let mut gen = RawSection::new("gen");
    let mut train = RawSection::new("train");
    let mut ordinal = RawSection::new("ordinal");
    let mut eval = RawSection::new("eval");
    let mut current: Option<&mut RawSection> = None;

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(match name.trim() {
                "gen" => &mut gen,
                "train" => &mut train,
                "ordinal" => &mut ordinal,
                "eval" => &mut eval,
                other => {
                    return Err(ObaError::Format(format!(
                        "config line {line_no}: unknown section [{other}]"
                    )))
                }
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ObaError::Format(format!(
                "config line {line_no}: expected 'key = value', got '{line}'"
            ))
        })?;
        let section = current.as_deref_mut().ok_or_else(|| {
            ObaError::Format(format!(
                "config line {line_no}: key before any [section] header"
            ))
        })?;
        section.insert(key.trim(), value.trim(), line_no)?;
    }

    let d = RunConfig::default();
    let cfg = RunConfig {
        gen: GenSection {
            n_samples: gen.take_usize("n_samples", d.gen.n_samples)?,
            grid: gen.take_usize("grid", d.gen.grid)?,
            p0: gen.take_f64("p0", d.gen.p0)?,
            mu_ln: gen.take_f64("mu_ln", d.gen.mu_ln)?,
            sigma_ln: gen.take_f64("sigma_ln", d.gen.sigma_ln)?,
            y_max: gen.take_f64("y_max", d.gen.y_max)?,
            features: gen.take_usize("features", d.gen.features)?,
            obs_noise: gen.take_f64("obs_noise", d.gen.obs_noise)?,
        },
        train: TrainSection {
            sigma: train.take_f64("sigma", d.train.sigma)?,
            mu: train.take_f64("mu", d.train.mu)?,
            lr_eda: train.take_f64("lr_eda", d.train.lr_eda)?,
            wd_eda: train.take_f64("wd_eda", d.train.wd_eda)?,
            epochs_eda: train.take_usize("epochs_eda", d.train.epochs_eda)?,
            batch: train.take_usize("batch", d.train.batch)?,
            lr_selector: train.take_f64("lr_selector", d.train.lr_selector)?,
            wd_selector: train.take_f64("wd_selector", d.train.wd_selector)?,
            epochs_selector: train.take_usize("epochs_selector", d.train.epochs_selector)?,
            lr_sra: train.take_f64("lr_sra", d.train.lr_sra)?,
            wd_sra: train.take_f64("wd_sra", d.train.wd_sra)?,
            epochs_sra: train.take_usize("epochs_sra", d.train.epochs_sra)?,
            pearson_threshold: train.take_f64("pearson_threshold", d.train.pearson_threshold)?,
            sra: train.take_bool("sra", d.train.sra)?,
            parallel: train.take_bool("parallel", d.train.parallel)?,
        },
        ordinal: OrdinalSection {
            eta: ordinal.take_f64("eta", d.ordinal.eta)?,
            xi: ordinal.take_f64("xi", d.ordinal.xi)?,
            y_max: match ordinal.take_raw("y_max") {
                None => None,
                Some((raw, line)) => Some(raw.parse().map_err(|_| {
                    ObaError::Format(format!(
                        "config line {line}: value for 'y_max' is not a number: {raw}"
                    ))
                })?),
            },
            gamma: ordinal.take_f64("gamma", d.ordinal.gamma)?,
            lr_ord: ordinal.take_f64("lr_ord", d.ordinal.lr_ord)?,
            wd_ord: ordinal.take_f64("wd_ord", d.ordinal.wd_ord)?,
            epochs_ord: ordinal.take_usize("epochs_ord", d.ordinal.epochs_ord)?,
            batch_ord: ordinal.take_usize("batch_ord", d.ordinal.batch_ord)?,
            sample_cap: ordinal.take_usize("sample_cap", d.ordinal.sample_cap)?,
            decode: match ordinal.take_raw("decode") {
                None => d.ordinal.decode,
                Some((raw, line)) => match raw.as_str() {
                    "sum" => DecodeMode::Sum,
                    "prefix" => DecodeMode::Prefix,
                    _ => {
                        return Err(ObaError::Format(format!(
                            "config line {line}: value for 'decode' must be sum or prefix: {raw}"
                        )))
                    }
                },
            },
        },
        eval: EvalSection {
            test_fraction: eval.take_f64("test_fraction", d.eval.test_fraction)?,
            bi_channel: eval.take_usize("bi_channel", d.eval.bi_channel)?,
            batch: eval.take_usize("batch", d.eval.batch)?,
        },
    };
    gen.finish()?;
    train.finish()?;
    ordinal.finish()?;
    eval.finish()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        ObaError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_paper_defaults() {
        let cfg = parse_config_text("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.ordinal.eta, 0.5);
        assert_eq!(cfg.ordinal.xi, 0.5);
        assert_eq!(cfg.train.sigma, 0.01);
        assert_eq!(cfg.train.batch, 256);
        assert_eq!(cfg.train.lr_eda, 1e-3);
        assert_eq!(cfg.train.wd_eda, 1e-2);
        assert_eq!(cfg.ordinal.lr_ord, 1e-4);
    }

    #[test]
    fn overrides_comments_and_spacing_are_accepted() {
        let cfg = parse_config_text(
            "# experiment A\n[ordinal]\neta = 0.25  # coarse\n[gen]\nn_samples=64\n",
        )
        .unwrap();
        assert_eq!(cfg.ordinal.eta, 0.25);
        assert_eq!(cfg.gen.n_samples, 64);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_config_text("[ordinal]\neta = abc\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("eta"), "{err}");

        let err = parse_config_text("[gen]\nfoo = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown key 'foo'"), "{err}");

        let err = parse_config_text("eta = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("before any [section]"), "{err}");

        let err = parse_config_text("[nope]\n").unwrap_err();
        assert!(err.to_string().contains("unknown section"), "{err}");

        let err = parse_config_text("[gen]\ngrid 17\n").unwrap_err();
        assert!(err.to_string().contains("expected 'key = value'"), "{err}");

        let err = parse_config_text("[gen]\ngrid = 17\ngrid = 19\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"), "{err}");
    }

    #[test]
    fn effective_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.ordinal.eta = 0.25;
        cfg.train.epochs_eda = 7;
        cfg.gen.p0 = 0.55;
        let reparsed = parse_config_text(&cfg.to_text()).unwrap();
        // y_max inheritance collapses to an explicit value in the echo
        assert_eq!(reparsed.partition_y_max(), cfg.partition_y_max());
        assert_eq!(reparsed.ordinal.eta, 0.25);
        assert_eq!(reparsed.train.epochs_eda, 7);
        assert_eq!(reparsed.gen.p0, 0.55);
        assert_eq!(parse_config_text(&reparsed.to_text()).unwrap(), reparsed);
    }

    #[test]
    fn ordinal_y_max_inherits_from_gen() {
        let cfg = parse_config_text("[gen]\ny_max = 8\n").unwrap();
        assert_eq!(cfg.partition_y_max(), 8.0);
        let cfg = parse_config_text("[gen]\ny_max = 8\n[ordinal]\ny_max = 4\n").unwrap();
        assert_eq!(cfg.partition_y_max(), 4.0);
    }

    #[test]
    fn decode_mode_is_validated() {
        let cfg = parse_config_text("[ordinal]\ndecode = prefix\n").unwrap();
        assert_eq!(cfg.ordinal.decode, DecodeMode::Prefix);
        assert!(parse_config_text("[ordinal]\ndecode = both\n").is_err());
    }
}
