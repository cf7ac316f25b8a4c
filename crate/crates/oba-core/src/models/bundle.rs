use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::gather_rows;
use super::{EdaModel, OrdinalSubnet, SelectorModel, SraModel, StateMap, Z_CHANNELS};
use crate::data::{apply_stats, Dataset, Stats};
use crate::error::{ObaError, Result};
use crate::nn::{read_tensor_map, write_tensor_map, Mode};
use crate::ordinal::{decode, DecodeMode, RankPartition};
use crate::tensor::Tensor;

pub const BUNDLE_FORMAT: &str = "OBA-BUNDLE-1";

const MANIFEST: &str = "manifest.txt";
const STATS_FILE: &str = "stats.obawt";

/// A trained pipeline plus everything needed to run it on raw data: channel
/// selection, normalization statistics, the rank partition and the decode
/// gate. Saved as a directory of OBAWT001 files under a small manifest.
pub struct ModelBundle {
    pub eda: EdaModel,
    pub subnets: Vec<OrdinalSubnet>,
    pub selector: SelectorModel,
    pub sra: Option<SraModel>,
    pub partition: RankPartition,
    pub stats: Stats,
    /// Indices of the raw channels the models were trained on.
    pub kept: Vec<usize>,
    /// Names of the kept channels, in model input order.
    pub feature_names: Vec<String>,
    pub xi: f64,
    pub decode_mode: DecodeMode,
    /// Train/test carve applied at training time (0 = trained on everything),
    /// kept here so evaluation can rebuild the held-out part of the same
    /// data file.
    pub split_fraction: f64,
    pub split_seed: u64,
}

impl ModelBundle {
    /// Project a raw dataset onto the bundle's channels and statistics.
    pub fn prepare(&self, raw: &Dataset) -> Result<Dataset> {
        let selected = raw.select_channels(&self.kept)?;
        apply_stats(&selected, &self.stats)
    }

    /// Full OBA prediction for a prepared batch: the selector gates each
    /// sample at 0.5; dry samples get exactly 0 and rain samples get the
    /// decoded ordinal amount, floored at η. Every output is 0 or ≥ η.
    pub fn predict(&mut self, x: &Tensor) -> Result<Vec<f64>> {
        let rain_rows = self.rain_rows(x)?;
        let mut out = vec![0.0; x.shape()[0]];
        if rain_rows.is_empty() {
            return Ok(out);
        }
        let z = self.eda.encode_eval(&gather_rows(x, &rain_rows)?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0); // Eval forward never samples
        let mut probs = vec![vec![0.0; self.subnets.len()]; rain_rows.len()];
        for (k, subnet) in self.subnets.iter_mut().enumerate() {
            let p = subnet.forward(&z, Mode::Eval, &mut rng)?;
            for (row, slot) in probs.iter_mut().enumerate() {
                slot[k] = p.data()[row];
            }
        }
        for (row, &i) in rain_rows.iter().enumerate() {
            let dec = decode(&probs[row], &self.partition, self.xi, self.decode_mode)?;
            out[i] = dec.max(self.partition.eta());
        }
        Ok(out)
    }

    /// SRA baseline prediction under the same selector gate.
    pub fn predict_sra(&mut self, x: &Tensor) -> Result<Vec<f64>> {
        let rain_rows = self.rain_rows(x)?;
        let mut out = vec![0.0; x.shape()[0]];
        if rain_rows.is_empty() {
            return Ok(out);
        }
        let sra = self
            .sra
            .as_mut()
            .ok_or_else(|| ObaError::MissingComponent("sra.obawt".into()))?;
        let z = self.eda.encode_eval(&gather_rows(x, &rain_rows)?)?;
        for (row, &i) in rain_rows.iter().enumerate() {
            out[i] = sra.predict(&z)?[row];
        }
        Ok(out)
    }

    fn rain_rows(&mut self, x: &Tensor) -> Result<Vec<usize>> {
        let p = self.selector.forward(x, Mode::Eval)?;
        Ok((0..x.shape()[0]).filter(|&i| p.data()[i] >= 0.5).collect())
    }

    /// Predict a whole raw dataset: prepare it, then run batched inference.
    pub fn predict_raw(&mut self, raw: &Dataset, batch: usize) -> Result<Vec<f64>> {
        self.predict_prepared(&self.prepare(raw)?, batch, false)
    }

    /// SRA predictions for a whole raw dataset.
    pub fn predict_raw_sra(&mut self, raw: &Dataset, batch: usize) -> Result<Vec<f64>> {
        self.predict_prepared(&self.prepare(raw)?, batch, true)
    }

    fn predict_prepared(&mut self, data: &Dataset, batch: usize, sra: bool) -> Result<Vec<f64>> {
        if batch == 0 {
            return Err(ObaError::InvalidArg("batch size must be positive".into()));
        }
        let indices: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len());
        for chunk in indices.chunks(batch) {
            let x = data.batch(chunk)?;
            out.extend(if sra {
                self.predict_sra(&x)?
            } else {
                self.predict(&x)?
            });
        }
        Ok(out)
    }
}

fn fmt_f64(v: f64) -> String {
    // Display prints the shortest string that parses back to the same f64,
    // so the manifest echo is lossless.
    format!("{v}")
}

pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    if bundle.subnets.len() != bundle.partition.n_ranks() {
        return Err(ObaError::InvalidArg(format!(
            "{} subnets for {} ranks",
            bundle.subnets.len(),
            bundle.partition.n_ranks()
        )));
    }
    let channels = bundle.eda.channels();
    if bundle.kept.len() != channels
        || bundle.feature_names.len() != channels
        || bundle.stats.mean.len() != channels
    {
        return Err(ObaError::InvalidArg(
            "kept channels, feature names and stats must all match the model width".into(),
        ));
    }
    if bundle
        .feature_names
        .iter()
        .any(|n| n.contains(',') || n.contains('\n'))
    {
        return Err(ObaError::InvalidArg(
            "feature names must not contain commas or newlines".into(),
        ));
    }
    if !(0.0..1.0).contains(&bundle.split_fraction) {
        return Err(ObaError::InvalidArg(format!(
            "split fraction {} outside [0, 1)",
            bundle.split_fraction
        )));
    }
    fs::create_dir_all(dir)?;

    let (h, w) = bundle.eda.grid();
    let mut manifest = String::new();
    manifest.push_str(&format!("format = {BUNDLE_FORMAT}\n"));
    manifest.push_str(&format!("eta = {}\n", fmt_f64(bundle.partition.eta())));
    manifest.push_str(&format!("xi = {}\n", fmt_f64(bundle.xi)));
    manifest.push_str(&format!("y_max = {}\n", fmt_f64(bundle.partition.y_max())));
    manifest.push_str(&format!("n_subnets = {}\n", bundle.subnets.len()));
    manifest.push_str(&format!("mu = {}\n", fmt_f64(bundle.eda.mu())));
    manifest.push_str(&format!("sigma = {}\n", fmt_f64(bundle.eda.sigma())));
    manifest.push_str(&format!("channels = {channels}\n"));
    manifest.push_str(&format!("grid = {h}x{w}\n"));
    manifest.push_str(&format!("split = {}\n", fmt_f64(bundle.split_fraction)));
    manifest.push_str(&format!("split_seed = {}\n", bundle.split_seed));
    manifest.push_str(&format!(
        "sra = {}\n",
        if bundle.sra.is_some() { "yes" } else { "no" }
    ));
    manifest.push_str(&format!("stats_file = {STATS_FILE}\n"));
    manifest.push_str(&format!("features = {}\n", bundle.feature_names.join(",")));
    fs::write(dir.join(MANIFEST), manifest)?;

    let stats_entries = vec![
        (
            "mean".to_string(),
            Tensor::from_vec(&[channels], bundle.stats.mean.clone())?,
        ),
        (
            "std".to_string(),
            Tensor::from_vec(&[channels], bundle.stats.std.clone())?,
        ),
        (
            "kept".to_string(),
            Tensor::from_vec(&[channels], bundle.kept.iter().map(|&i| i as f64).collect())?,
        ),
        ("eta".to_string(), Tensor::scalar(bundle.partition.eta())),
        (
            "y_max".to_string(),
            Tensor::scalar(bundle.partition.y_max()),
        ),
        ("xi".to_string(), Tensor::scalar(bundle.xi)),
        ("mu".to_string(), Tensor::scalar(bundle.eda.mu())),
        ("sigma".to_string(), Tensor::scalar(bundle.eda.sigma())),
        ("grid_h".to_string(), Tensor::scalar(h as f64)),
        ("grid_w".to_string(), Tensor::scalar(w as f64)),
        (
            "decode_sum".to_string(),
            Tensor::scalar(f64::from(bundle.decode_mode == DecodeMode::Sum)),
        ),
        (
            "split_fraction".to_string(),
            Tensor::scalar(bundle.split_fraction),
        ),
    ];
    write_tensor_map(&dir.join(STATS_FILE), &stats_entries)?;

    write_tensor_map(&dir.join("eda.obawt"), &bundle.eda.export_state()?)?;
    for (k, subnet) in bundle.subnets.iter().enumerate() {
        write_tensor_map(
            &dir.join(format!("subnet_{k}.obawt")),
            &subnet.export_state()?,
        )?;
    }
    write_tensor_map(
        &dir.join("selector.obawt"),
        &bundle.selector.export_state()?,
    )?;
    if let Some(sra) = &bundle.sra {
        write_tensor_map(&dir.join("sra.obawt"), &sra.export_state()?)?;
    }
    Ok(())
}

fn read_component(dir: &Path, name: &str) -> Result<Vec<(String, Tensor)>> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(ObaError::MissingComponent(name.into()));
    }
    read_tensor_map(&path)
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line.split_once(" = ").ok_or_else(|| {
            ObaError::Format(format!(
                "manifest line {}: expected 'key = value'",
                lineno + 1
            ))
        })?;
        if map
            .insert(key.trim().to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(ObaError::Format(format!(
                "manifest line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn manifest_take(map: &mut BTreeMap<String, String>, key: &str) -> Result<String> {
    map.remove(key)
        .ok_or_else(|| ObaError::Format(format!("manifest is missing key '{key}'")))
}

fn manifest_f64(map: &mut BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = manifest_take(map, key)?;
    raw.parse()
        .map_err(|_| ObaError::Format(format!("manifest key '{key}' is not a number: {raw}")))
}

fn scalar(map: &mut StateMap, name: &str) -> Result<f64> {
    let t = map.take(name)?;
    if t.len() != 1 {
        return Err(ObaError::Format(format!(
            "stats entry '{name}' should be a scalar"
        )));
    }
    Ok(t.data()[0])
}

fn vector(map: &mut StateMap, name: &str) -> Result<Vec<f64>> {
    let t = map.take(name)?;
    if t.rank() != 1 {
        return Err(ObaError::Format(format!(
            "stats entry '{name}' should be rank 1"
        )));
    }
    Ok(t.into_vec())
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(ObaError::MissingComponent(MANIFEST.into()));
    }
    let mut manifest = parse_manifest(&fs::read_to_string(manifest_path)?)?;
    let format = manifest_take(&mut manifest, "format")?;
    if format != BUNDLE_FORMAT {
        return Err(ObaError::Format(format!(
            "unsupported bundle format '{format}', expected {BUNDLE_FORMAT}"
        )));
    }
    let stats_file = manifest_take(&mut manifest, "stats_file")?;

    let mut stats_map = StateMap::new(read_component(dir, &stats_file)?, &stats_file)?;
    let mean = vector(&mut stats_map, "mean")?;
    let std = vector(&mut stats_map, "std")?;
    let kept_raw = vector(&mut stats_map, "kept")?;
    let eta = scalar(&mut stats_map, "eta")?;
    let y_max = scalar(&mut stats_map, "y_max")?;
    let xi = scalar(&mut stats_map, "xi")?;
    let mu = scalar(&mut stats_map, "mu")?;
    let sigma = scalar(&mut stats_map, "sigma")?;
    let grid_h = scalar(&mut stats_map, "grid_h")? as usize;
    let grid_w = scalar(&mut stats_map, "grid_w")? as usize;
    let decode_sum = scalar(&mut stats_map, "decode_sum")?;
    let split_fraction = scalar(&mut stats_map, "split_fraction")?;
    stats_map.finish()?;

    let mut kept = Vec::with_capacity(kept_raw.len());
    for v in kept_raw {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(ObaError::Format(format!("bad kept channel index {v}")));
        }
        kept.push(v as usize);
    }
    let decode_mode = match decode_sum {
        v if v == 1.0 => DecodeMode::Sum,
        v if v == 0.0 => DecodeMode::Prefix,
        v => return Err(ObaError::Format(format!("bad decode_sum flag {v}"))),
    };
    let partition = RankPartition::new(eta, y_max)?;
    let channels = mean.len();
    if std.len() != channels || kept.len() != channels {
        return Err(ObaError::Format(
            "stats mean, std and kept disagree on channel count".into(),
        ));
    }

    // The manifest echoes the key numbers; a disagreement means the bundle
    // was hand-edited or mixed from two runs.
    if manifest_f64(&mut manifest, "eta")? != eta
        || manifest_f64(&mut manifest, "xi")? != xi
        || manifest_f64(&mut manifest, "y_max")? != y_max
        || manifest_f64(&mut manifest, "mu")? != mu
        || manifest_f64(&mut manifest, "sigma")? != sigma
        || manifest_f64(&mut manifest, "split")? != split_fraction
    {
        return Err(ObaError::Format(
            "manifest numbers disagree with the stats file".into(),
        ));
    }
    let split_seed: u64 = {
        let raw = manifest_take(&mut manifest, "split_seed")?;
        raw.parse().map_err(|_| {
            ObaError::Format(format!("manifest split_seed is not an integer: {raw}"))
        })?
    };
    if manifest_take(&mut manifest, "n_subnets")? != partition.n_ranks().to_string() {
        return Err(ObaError::Format(
            "manifest n_subnets disagrees with the rank partition".into(),
        ));
    }
    if manifest_take(&mut manifest, "channels")? != channels.to_string() {
        return Err(ObaError::Format(
            "manifest channels disagree with the stats file".into(),
        ));
    }
    if manifest_take(&mut manifest, "grid")? != format!("{grid_h}x{grid_w}") {
        return Err(ObaError::Format(
            "manifest grid disagrees with the stats file".into(),
        ));
    }
    let has_sra = match manifest_take(&mut manifest, "sra")?.as_str() {
        "yes" => true,
        "no" => false,
        v => return Err(ObaError::Format(format!("bad sra flag '{v}'"))),
    };
    let feature_names: Vec<String> = manifest_take(&mut manifest, "features")?
        .split(',')
        .map(str::to_string)
        .collect();
    if feature_names.len() != channels {
        return Err(ObaError::Format(format!(
            "{} feature names for {channels} channels",
            feature_names.len()
        )));
    }
    if let Some(key) = manifest.keys().next() {
        return Err(ObaError::Format(format!("unknown manifest key '{key}'")));
    }

    // Weights import into freshly built models; the init rng is irrelevant
    // because every parameter is overwritten.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut eda = EdaModel::new(channels, grid_h, grid_w, mu, sigma, &mut rng)?;
    eda.import_state(read_component(dir, "eda.obawt")?, "eda.obawt")?;
    let mut subnets = Vec::with_capacity(partition.n_ranks());
    for k in 0..partition.n_ranks() {
        let file = format!("subnet_{k}.obawt");
        let mut subnet = OrdinalSubnet::new(Z_CHANNELS, 0.5, &mut rng)?;
        subnet.import_state(read_component(dir, &file)?, &file)?;
        subnets.push(subnet);
    }
    let mut selector = SelectorModel::new(channels, &mut rng)?;
    selector.import_state(read_component(dir, "selector.obawt")?, "selector.obawt")?;
    let sra = if has_sra {
        let mut sra = SraModel::new(Z_CHANNELS, 0.0, &mut rng)?;
        sra.import_state(read_component(dir, "sra.obawt")?, "sra.obawt")?;
        Some(sra)
    } else {
        None
    };

    Ok(ModelBundle {
        eda,
        subnets,
        selector,
        sra,
        partition,
        stats: Stats { mean, std },
        kept,
        feature_names,
        xi,
        decode_mode,
        split_fraction,
        split_seed,
    })
}
