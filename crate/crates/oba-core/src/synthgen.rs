//! Synthetic NWP-like data calibrated to the observed precipitation
//! statistics: ~60% dry samples, a log-normal rain tail with ~1% of samples
//! above 10 mm, labels quantized to the 0.1 mm sensor tick. Every feature is
//! a smooth Gaussian bump scaled by the true precipitation plus independent
//! noise, so screening, denoising and regression all have something real to
//! do. A per-sample log-normal factor shared by every signal channel plays
//! the model run's collective error against the observation: the fields are
//! internally consistent but only bound the label up to multiplicative
//! spread, which is what leaves bias correction an irreducible gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::{Dataset, GridSample};
use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// 2020-01-01T00:00:00Z; samples are stamped every 6 hours from here.
const BASE_TIMESTAMP: u64 = 1_577_836_800;
const STEP_SECONDS: u64 = 21_600;

/// One synthetic channel: `signal`·y·bump + N(0, `noise`²) per cell.
/// The channel at index 0 is special-cased as the biased precipitation field.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub signal: f64,
    pub noise: f64,
}

impl FeatureSpec {
    fn new(name: &str, signal: f64, noise: f64) -> Self {
        Self {
            name: name.to_string(),
            signal,
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_samples: usize,
    pub grid: usize,
    pub p0: f64,
    pub mu_ln: f64,
    pub sigma_ln: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub features: Vec<FeatureSpec>,
    /// Additive noise on the biased precipitation channel.
    pub obs_noise: f64,
    /// log-σ of the per-sample multiplicative error shared by all signal
    /// channels (the model-vs-observation gap). 0 makes the fields an exact
    /// function of the label up to cell noise.
    pub model_noise: f64,
    pub seed: u64,
}

impl GenConfig {
    /// Desk-scale default: 5000 samples of 12×17×17, dry probability 0.6,
    /// log-normal(0, 1.25) tail, clip at 25 mm.
    pub fn desk_default(seed: u64) -> Self {
        Self {
            n_samples: 5000,
            grid: 17,
            p0: 0.6,
            mu_ln: 0.0,
            sigma_ln: 1.25,
            y_min: 0.1,
            y_max: 25.0,
            features: default_feature_specs(12),
            obs_noise: 0.3,
            model_noise: 0.6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(ObaError::InvalidArg("n_samples must be positive".into()));
        }
        if self.grid < 3 || self.grid % 2 == 0 {
            return Err(ObaError::InvalidArg(format!(
                "grid must be odd and ≥ 3, got {}",
                self.grid
            )));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(ObaError::InvalidArg(format!(
                "p0 must be in [0,1], got {}",
                self.p0
            )));
        }
        if self.y_min != 0.1 {
            return Err(ObaError::InvalidArg(format!(
                "y_min is fixed at the 0.1 mm sensor tick, got {}",
                self.y_min
            )));
        }
        if !(self.y_max > self.y_min && self.y_max <= 151.0) {
            return Err(ObaError::InvalidArg(format!(
                "y_max must lie in (0.1, 151], got {}",
                self.y_max
            )));
        }
        if self.sigma_ln <= 0.0 {
            return Err(ObaError::InvalidArg(format!(
                "sigma_ln must be positive, got {}",
                self.sigma_ln
            )));
        }
        if self.features.len() < 2 {
            return Err(ObaError::InvalidArg(
                "need at least the biased channel plus one feature".into(),
            ));
        }
        if self.obs_noise < 0.0 || self.model_noise < 0.0 || self.features.iter().any(|f| f.noise < 0.0)
        {
            return Err(ObaError::InvalidArg("noise scales must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// The curated 12-channel set (biased precipitation, correlated fields at
/// mixed altitudes — including a same-name pair for the screening rule — and
/// three pure-noise channels). Other counts cycle a generic pattern where
/// every fourth channel is noise.
pub fn default_feature_specs(c: usize) -> Vec<FeatureSpec> {
    if c == 12 {
        return vec![
            FeatureSpec::new("tp@sfc", 1.0, 0.0),
            FeatureSpec::new("t@500", 0.8, 0.25),
            FeatureSpec::new("t@850", 0.8, 0.5),
            FeatureSpec::new("q@700", 0.6, 0.3),
            FeatureSpec::new("cape@sfc", 1.0, 0.2),
            FeatureSpec::new("u@500", 0.0, 1.0),
            FeatureSpec::new("v@850", 0.0, 1.0),
            FeatureSpec::new("z@500", 0.5, 0.4),
            FeatureSpec::new("rh@700", 0.9, 0.25),
            FeatureSpec::new("w@500", 0.0, 1.0),
            FeatureSpec::new("pw@sfc", 0.7, 0.3),
            FeatureSpec::new("k@sfc", 0.4, 0.5),
        ];
    }
    let mut specs = vec![FeatureSpec::new("tp@sfc", 1.0, 0.0)];
    let pattern = [(1.0, 0.2), (0.8, 0.3), (0.5, 0.4), (0.0, 1.0)];
    for i in 1..c {
        let (signal, noise) = pattern[(i - 1) % pattern.len()];
        specs.push(FeatureSpec::new(&format!("f{i}@sfc"), signal, noise));
    }
    specs
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Draw one 6-hour precipitation label: dry with probability p0, otherwise a
/// log-normal rain amount clipped to [0.1, y_max] and rounded to 0.1 mm.
pub fn sample_label(rng: &mut ChaCha8Rng, config: &GenConfig) -> f64 {
    if rng.gen::<f64>() < config.p0 {
        return 0.0;
    }
    let draw = LogNormal::new(config.mu_ln, config.sigma_ln)
        .expect("validated sigma")
        .sample(rng);
    let clipped = draw.clamp(config.y_min, config.y_max);
    let mut y = quantize((clipped * 10.0).round() / 10.0);
    // float32 quantization may tip a boundary multiple just past y_max
    while y > config.y_max {
        y = quantize(((y - 0.1) * 10.0).round() / 10.0);
    }
    y
}

/// Build the grids for one sample around a jittered Gaussian bump.
pub fn generate_sample(rng: &mut ChaCha8Rng, y: f64, config: &GenConfig) -> Result<GridSample> {
    let h = config.grid;
    let c = config.features.len();
    let lat = quantize(rng.gen_range(25.0..35.0));
    let lon = quantize(rng.gen_range(115.0..125.0));
    let mid = (h - 1) as f64 / 2.0;
    let cy = mid + rng.gen_range(-2.0..2.0);
    let cx = mid + rng.gen_range(-2.0..2.0);
    let rho = rng.gen_range(2.5..4.5);
    let bias = LogNormal::new(1.2_f64.ln(), 0.25)
        .expect("fixed sigma")
        .sample(rng);
    // One error factor per run, common to every signal channel: the model's
    // fields agree with each other, not with the observation.
    let wet = LogNormal::new(0.0, config.model_noise)
        .expect("validated scale")
        .sample(rng);
    let y_model = wet * y;
    let mut bump = vec![0.0; h * h];
    for r in 0..h {
        for col in 0..h {
            let d2 = (r as f64 - cy).powi(2) + (col as f64 - cx).powi(2);
            bump[r * h + col] = (-d2 / (2.0 * rho * rho)).exp();
        }
    }
    let mut data = Vec::with_capacity(c * h * h);
    for (i, spec) in config.features.iter().enumerate() {
        let (amp, noise_scale) = if i == 0 {
            (bias * spec.signal, config.obs_noise)
        } else {
            (spec.signal, spec.noise)
        };
        if noise_scale == 0.0 {
            for &b in &bump {
                data.push(quantize(amp * y_model * b));
            }
        } else {
            let noise = Normal::new(0.0, noise_scale).expect("validated scale");
            for &b in &bump {
                data.push(quantize(amp * y_model * b + noise.sample(rng)));
            }
        }
    }
    GridSample::new(Tensor::from_vec(&[c, h, h], data)?, y, lat, lon, 0)
}

/// Generate the full dataset. Each sample draws from its own
/// seed ⊕ index stream, so content is independent of generation order.
pub fn generate_dataset(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let names: Vec<String> = config.features.iter().map(|f| f.name.clone()).collect();
    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (i as u64));
        let y = sample_label(&mut rng, config);
        let mut sample = generate_sample(&mut rng, y, config)?;
        sample.timestamp = BASE_TIMESTAMP + i as u64 * STEP_SECONDS;
        samples.push(sample);
    }
    Dataset::new(
        names,
        samples,
        (config.features.len(), config.grid, config.grid),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pearson_screen;

    #[test]
    fn deterministic_per_seed() {
        let mut cfg = GenConfig::desk_default(77);
        cfg.n_samples = 40;
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 78;
        let c = generate_dataset(&cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn label_distribution_calibration() {
        let cfg = GenConfig::desk_default(123);
        let mut dry = 0usize;
        let mut heavy = 0usize;
        let n = 10_000;
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64));
            let y = sample_label(&mut rng, &cfg);
            assert!(y == 0.0 || (0.1..=25.0).contains(&y), "label {y}");
            if y == 0.0 {
                dry += 1;
            }
            if y > 10.0 {
                heavy += 1;
            }
        }
        let dry_frac = dry as f64 / n as f64;
        let heavy_frac = heavy as f64 / n as f64;
        assert!((dry_frac - 0.6).abs() < 0.02, "dry fraction {dry_frac}");
        assert!((heavy_frac - 0.01).abs() < 0.005, "P(y>10) {heavy_frac}");
    }

    #[test]
    fn p0_one_is_always_dry() {
        let mut cfg = GenConfig::desk_default(5);
        cfg.p0 = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(sample_label(&mut rng, &cfg), 0.0);
        }
    }

    #[test]
    fn zero_noise_dry_sample_is_all_zero() {
        let mut cfg = GenConfig::desk_default(1);
        cfg.obs_noise = 0.0;
        for f in &mut cfg.features {
            f.noise = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = generate_sample(&mut rng, 0.0, &cfg).unwrap();
        assert!(s.features.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn screening_separates_signal_from_noise() {
        let mut cfg = GenConfig::desk_default(31);
        cfg.n_samples = 3000;
        let ds = generate_dataset(&cfg).unwrap();
        let sel = pearson_screen(&ds, 0.2).unwrap();
        // pure-noise channels (u@500, v@850, w@500) fall below the threshold
        for idx in [5, 6, 9] {
            assert!(
                sel.coefficients[idx].abs() < 0.2,
                "noise channel {idx} scored {}",
                sel.coefficients[idx]
            );
            assert!(!sel.kept.contains(&idx));
        }
        // the strong channels clear it comfortably
        for idx in [0, 4] {
            assert!(
                sel.coefficients[idx] > 0.5,
                "signal channel {idx} scored {}",
                sel.coefficients[idx]
            );
        }
        assert!(sel.kept.contains(&0));
        // t@500 beats its noisier 850 hPa duplicate
        assert!(sel.kept.contains(&1));
        assert!(!sel.kept.contains(&2));
    }

    #[test]
    fn labels_survive_format_quantization() {
        let mut cfg = GenConfig::desk_default(2);
        cfg.n_samples = 200;
        let ds = generate_dataset(&cfg).unwrap();
        for s in &ds.samples {
            assert_eq!(s.label, s.label as f32 as f64);
            assert!(s.label == 0.0 || s.label >= 0.1);
            assert!(s.label <= cfg.y_max);
        }
    }

    #[test]
    fn boundary_y_max_quantization_stays_inside() {
        let mut cfg = GenConfig::desk_default(3);
        cfg.y_max = 0.3; // f32(0.3) > 0.3, exercising the boundary pull-back
        cfg.p0 = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let y = sample_label(&mut rng, &cfg);
            assert!(y <= 0.3 && y >= 0.1, "label {y}");
        }
    }
}
