//! Dataset model: gridded NWP feature windows with one station label each,
//! the OBADS001 binary format, Pearson feature screening, window slicing,
//! normalization and splits.

mod format;
mod screen;

pub use format::{read_dataset, write_dataset};
pub use screen::{pearson_screen, selection_text, FeatureSelection};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ObaError, Result};
use crate::tensor::Tensor;

/// One station-centered sample: a C×H×W window of predicted fields plus the
/// observed 6-hour precipitation at the center station.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSample {
    pub features: Tensor,
    pub label: f64,
    pub station_lat: f64,
    pub station_lon: f64,
    pub timestamp: u64,
}

impl GridSample {
    pub fn new(
        features: Tensor,
        label: f64,
        station_lat: f64,
        station_lon: f64,
        timestamp: u64,
    ) -> Result<Self> {
        if features.rank() != 3 {
            return Err(ObaError::Shape(format!(
                "sample features must be C×H×W, got {:?}",
                features.shape()
            )));
        }
        check_label(label)?;
        Ok(Self {
            features,
            label,
            station_lat,
            station_lon,
            timestamp,
        })
    }
}

/// The 0.1 mm measurement floor: labels are either exactly zero or at least
/// one sensor tick.
pub fn check_label(label: f64) -> Result<()> {
    if !label.is_finite() || (label != 0.0 && label < 0.1) {
        return Err(ObaError::InvalidArg(format!(
            "label must be 0 or ≥ 0.1 mm, got {label}"
        )));
    }
    Ok(())
}

/// Per-feature normalization statistics fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<GridSample>,
    pub stats: Option<Stats>,
    shape: (usize, usize, usize),
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        samples: Vec<GridSample>,
        shape: (usize, usize, usize),
    ) -> Result<Self> {
        if feature_names.len() != shape.0 {
            return Err(ObaError::Shape(format!(
                "{} feature names for {} channels",
                feature_names.len(),
                shape.0
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.shape() != [shape.0, shape.1, shape.2] {
                return Err(ObaError::Shape(format!(
                    "sample {i} has shape {:?}, dataset expects {:?}",
                    s.features.shape(),
                    [shape.0, shape.1, shape.2]
                )));
            }
        }
        Ok(Self {
            feature_names,
            samples,
            stats: None,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// (C, H, W)
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Stack the given samples into a B×C×H×W batch tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let (c, h, w) = self.shape;
        let mut out = Tensor::zeros(&[indices.len(), c, h, w]);
        let plane = c * h * w;
        for (bi, &i) in indices.iter().enumerate() {
            let s = self.samples.get(i).ok_or_else(|| {
                ObaError::InvalidArg(format!("sample index {i} out of range ({})", self.len()))
            })?;
            out.data_mut()[bi * plane..(bi + 1) * plane].copy_from_slice(s.features.data());
        }
        Ok(out)
    }

    /// New dataset containing the selected samples (cloned, order given).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or_else(|| {
                    ObaError::InvalidArg(format!("sample index {i} out of range ({})", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            samples,
            stats: self.stats.clone(),
            shape: self.shape,
        })
    }

    /// New dataset restricted to the given feature channels (cloned, order
    /// given). Any fitted stats are dropped: they refer to the old channels.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Dataset> {
        let (c, h, w) = self.shape;
        if channels.is_empty() {
            return Err(ObaError::InvalidArg("no channels selected".into()));
        }
        for &ch in channels {
            if ch >= c {
                return Err(ObaError::InvalidArg(format!(
                    "channel {ch} out of range ({c})"
                )));
            }
        }
        let names = channels
            .iter()
            .map(|&ch| self.feature_names[ch].clone())
            .collect();
        let plane = h * w;
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut data = Vec::with_capacity(channels.len() * plane);
                for &ch in channels {
                    data.extend_from_slice(&s.features.data()[ch * plane..(ch + 1) * plane]);
                }
                Ok(GridSample {
                    features: Tensor::from_vec(&[channels.len(), h, w], data)?,
                    ..s.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            feature_names: names,
            samples,
            stats: None,
            shape: (channels.len(), h, w),
        })
    }

    /// Per-sample spatial mean of one feature channel.
    pub fn channel_means(&self, channel: usize) -> Result<Vec<f64>> {
        let (c, h, w) = self.shape;
        if channel >= c {
            return Err(ObaError::InvalidArg(format!(
                "channel {channel} out of range ({c})"
            )));
        }
        let cells = (h * w) as f64;
        Ok(self
            .samples
            .iter()
            .map(|s| {
                s.features.data()[channel * h * w..(channel + 1) * h * w]
                    .iter()
                    .sum::<f64>()
                    / cells
            })
            .collect())
    }
}

/// Fit per-feature mean/std over all samples and cells, and return the
/// standardized dataset along with the stats.
pub fn normalize(dataset: &Dataset) -> Result<(Dataset, Stats)> {
    if dataset.len() < 2 {
        return Err(ObaError::InvalidArg(
            "normalization needs at least 2 samples".into(),
        ));
    }
    let (c, h, w) = dataset.shape();
    let cells = h * w;
    let n = (dataset.len() * cells) as f64;
    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    for s in &dataset.samples {
        for ci in 0..c {
            mean[ci] += s.features.data()[ci * cells..(ci + 1) * cells]
                .iter()
                .sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for s in &dataset.samples {
        for ci in 0..c {
            std[ci] += s.features.data()[ci * cells..(ci + 1) * cells]
                .iter()
                .map(|v| (v - mean[ci]) * (v - mean[ci]))
                .sum::<f64>();
        }
    }
    for v in &mut std {
        *v = (*v / n).sqrt();
    }
    let stats = Stats { mean, std };
    let out = apply_stats(dataset, &stats)?;
    Ok((out, stats))
}

/// Standardize a dataset with previously fitted stats (train-time stats are
/// reused on test data). Features with vanishing std are centered only.
pub fn apply_stats(dataset: &Dataset, stats: &Stats) -> Result<Dataset> {
    let (c, h, w) = dataset.shape();
    if stats.mean.len() != c || stats.std.len() != c {
        return Err(ObaError::Shape(format!(
            "stats cover {} features, dataset has {c}",
            stats.mean.len()
        )));
    }
    let cells = h * w;
    let samples = dataset
        .samples
        .iter()
        .map(|s| {
            let mut f = s.features.clone();
            for ci in 0..c {
                let m = stats.mean[ci];
                let d = if stats.std[ci] < STD_FLOOR {
                    1.0
                } else {
                    stats.std[ci]
                };
                for v in &mut f.data_mut()[ci * cells..(ci + 1) * cells] {
                    *v = (*v - m) / d;
                }
            }
            GridSample {
                features: f,
                ..s.clone()
            }
        })
        .collect();
    Ok(Dataset {
        feature_names: dataset.feature_names.clone(),
        samples,
        stats: Some(stats.clone()),
        shape: dataset.shape,
    })
}

/// Partition into (rain: label ≥ 0.1, dry: label == 0), order preserved.
pub fn split_rain(dataset: &Dataset) -> (Dataset, Dataset) {
    let (rain, dry): (Vec<_>, Vec<_>) =
        dataset.samples.iter().cloned().partition(|s| s.label > 0.0);
    let make = |samples| Dataset {
        feature_names: dataset.feature_names.clone(),
        samples,
        stats: dataset.stats.clone(),
        shape: dataset.shape,
    };
    (make(rain), make(dry))
}

/// Seeded disjoint split; the test side gets round(n · test_fraction) samples.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 5 {
        return Err(ObaError::InvalidArg(format!(
            "train/test split needs at least 5 samples, got {}",
            dataset.len()
        )));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(ObaError::InvalidArg(format!(
            "test fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut test_idx = indices[..n_test].to_vec();
    let mut train_idx = indices[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((dataset.subset(&train_idx)?, dataset.subset(&test_idx)?))
}

/// Cut a (2·half_extent+1)-per-side window centered at `center` out of a full
/// C×H×W grid. Windows that would cross the boundary are rejected.
pub fn slice_window(
    full_grid: &Tensor,
    center: (usize, usize),
    half_extent: usize,
) -> Result<Tensor> {
    let (c, h, w) = match full_grid.shape() {
        [c, h, w] => (*c, *h, *w),
        s => {
            return Err(ObaError::Shape(format!(
                "slice_window expects C×H×W, got {s:?}"
            )))
        }
    };
    let (cy, cx) = center;
    let side = 2 * half_extent + 1;
    if cy < half_extent || cx < half_extent || cy + half_extent >= h || cx + half_extent >= w {
        return Err(ObaError::InvalidArg(format!(
            "window of half-extent {half_extent} at ({cy}, {cx}) leaves the {h}×{w} grid"
        )));
    }
    let mut out = Tensor::zeros(&[c, side, side]);
    for ci in 0..c {
        for r in 0..side {
            let src = (ci * h + cy - half_extent + r) * w + cx - half_extent;
            let dst = (ci * side + r) * side;
            out.data_mut()[dst..dst + side].copy_from_slice(&full_grid.data()[src..src + side]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_dataset(labels: &[f64]) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let data = (0..2 * 3 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                GridSample::new(
                    Tensor::from_vec(&[2, 3, 3], data).unwrap(),
                    y,
                    30.0,
                    120.0,
                    i as u64,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(vec!["a@sfc".into(), "b@sfc".into()], samples, (2, 3, 3)).unwrap()
    }

    #[test]
    fn label_floor_enforced() {
        assert!(check_label(0.0).is_ok());
        assert!(check_label(0.1).is_ok());
        assert!(check_label(0.05).is_err());
        assert!(check_label(-1.0).is_err());
        assert!(check_label(f64::NAN).is_err());
    }

    #[test]
    fn normalize_standardizes_each_feature() {
        let ds = toy_dataset(&[0.0, 0.5, 1.0, 0.0, 2.5, 0.0, 0.1, 7.5]);
        let (norm, stats) = normalize(&ds).unwrap();
        let (c, h, w) = norm.shape();
        let n = (norm.len() * h * w) as f64;
        for ci in 0..c {
            let mut mean = 0.0;
            let mut var = 0.0;
            for s in &norm.samples {
                for v in &s.features.data()[ci * h * w..(ci + 1) * h * w] {
                    mean += v;
                }
            }
            mean /= n;
            for s in &norm.samples {
                for v in &s.features.data()[ci * h * w..(ci + 1) * h * w] {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= n;
            assert!(mean.abs() < 1e-10, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-10, "std {}", var.sqrt());
            assert!(stats.std[ci] > 0.0);
        }
        // idempotence: re-applying the same stats to the raw data changes nothing
        let again = apply_stats(&ds, &stats).unwrap();
        for (a, b) in again.samples.iter().zip(&norm.samples) {
            for (x, y) in a.features.data().iter().zip(b.features.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_feature_is_centered_only() {
        let mut ds = toy_dataset(&[0.0, 0.5, 1.0]);
        for s in &mut ds.samples {
            s.features.data_mut()[0..9].fill(4.2);
        }
        let (norm, stats) = normalize(&ds).unwrap();
        assert!(stats.std[0] < STD_FLOOR);
        for s in &norm.samples {
            assert!(s.features.data()[0..9].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn select_channels_reorders_planes() {
        let ds = toy_dataset(&[0.0, 1.0, 2.0]);
        let picked = ds.select_channels(&[1]).unwrap();
        assert_eq!(picked.shape(), (1, 3, 3));
        assert_eq!(picked.feature_names, vec!["b@sfc".to_string()]);
        for (orig, sel) in ds.samples.iter().zip(&picked.samples) {
            assert_eq!(&orig.features.data()[9..18], sel.features.data());
            assert_eq!(orig.label, sel.label);
            assert_eq!(orig.timestamp, sel.timestamp);
        }
        assert!(ds.select_channels(&[2]).is_err());
        assert!(ds.select_channels(&[]).is_err());
    }

    #[test]
    fn rain_split_partitions() {
        let ds = toy_dataset(&[0.0, 0.1, 3.0, 0.0, 25.0]);
        let (rain, dry) = split_rain(&ds);
        assert_eq!(rain.len(), 3);
        assert_eq!(dry.len(), 2);
        assert_eq!(rain.len() + dry.len(), ds.len());
        assert!(rain.labels().iter().all(|&y| y >= 0.1));
        assert!(dry.labels().iter().all(|&y| y == 0.0));
        assert_eq!(rain.labels(), vec![0.1, 3.0, 25.0]);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let ds = toy_dataset(&[0.0; 10].map(|_| 0.5));
        let (tr1, te1) = train_test_split(&ds, 0.2, 42).unwrap();
        let (tr2, te2) = train_test_split(&ds, 0.2, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.len(), 8);
        assert_eq!(te1.len(), 2);
        let mut stamps: Vec<u64> = tr1
            .samples
            .iter()
            .chain(&te1.samples)
            .map(|s| s.timestamp)
            .collect();
        stamps.sort_unstable();
        assert_eq!(stamps, (0..10).collect::<Vec<_>>());
        let (tr3, _) = train_test_split(&ds, 0.2, 43).unwrap();
        assert_ne!(tr1, tr3);
    }

    #[test]
    fn window_centering() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..37 * 41 * 41)
            .map(|_| rng.gen_range(-5.0..5.0))
            .collect();
        let grid = Tensor::from_vec(&[37, 41, 41], data).unwrap();
        let win = slice_window(&grid, (20, 20), 8).unwrap();
        assert_eq!(win.shape(), &[37, 17, 17]);
        for ci in 0..37 {
            assert_eq!(win.at3(ci, 8, 8), grid.at3(ci, 20, 20));
            for r in 0..17 {
                for c in 0..17 {
                    assert_eq!(win.at3(ci, r, c), grid.at3(ci, 12 + r, 12 + c));
                }
            }
        }
        let tiny = slice_window(&grid, (5, 7), 0).unwrap();
        assert_eq!(tiny.shape(), &[37, 1, 1]);
        assert_eq!(tiny.at3(0, 0, 0), grid.at3(0, 5, 7));
        assert!(slice_window(&grid, (3, 20), 8).is_err());
    }
}
