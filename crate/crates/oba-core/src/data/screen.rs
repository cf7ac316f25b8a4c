//! Pearson-correlation feature screening: each feature grid is reduced to its
//! spatial mean per sample, correlated against the labels, thresholded on
//! |r|, and deduplicated across altitude levels of the same parameter.

use std::collections::BTreeMap;

use super::Dataset;
use crate::error::{ObaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    /// Indices of kept features, strictly increasing.
    pub kept: Vec<usize>,
    /// Pearson coefficient of every feature (not only the kept ones).
    pub coefficients: Vec<f64>,
}

/// Base parameter name: the part before the `@altitude` tag.
fn base_name(name: &str) -> &str {
    name.split('@').next().unwrap_or(name)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn pearson_screen(dataset: &Dataset, threshold: f64) -> Result<FeatureSelection> {
    if dataset.len() < 2 {
        return Err(ObaError::InvalidArg(
            "pearson screening needs at least 2 samples".into(),
        ));
    }
    let labels = dataset.labels();
    let my = labels.iter().sum::<f64>() / labels.len() as f64;
    if labels.iter().all(|y| (y - my).abs() < 1e-15) {
        return Err(ObaError::InvalidArg(
            "pearson screening needs label variance > 0".into(),
        ));
    }
    let (c, _, _) = dataset.shape();
    let mut coefficients = Vec::with_capacity(c);
    for ci in 0..c {
        let means = dataset.channel_means(ci)?;
        coefficients.push(pearson(&means, &labels));
    }
    // one survivor per base name: the altitude with the largest |r|
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in dataset.feature_names.iter().enumerate() {
        let base = base_name(name);
        match best.get(&base) {
            Some(&j) if coefficients[j].abs() >= coefficients[i].abs() => {}
            _ => {
                best.insert(base, i);
            }
        }
    }
    let mut kept: Vec<usize> = best
        .values()
        .copied()
        .filter(|&i| coefficients[i].abs() >= threshold)
        .collect();
    kept.sort_unstable();
    Ok(FeatureSelection { kept, coefficients })
}

/// Text form of a selection: one `index<TAB>name<TAB>coefficient` line per
/// kept feature.
pub fn selection_text(selection: &FeatureSelection, names: &[String]) -> Result<String> {
    let mut out = String::new();
    for &i in &selection.kept {
        let name = names.get(i).ok_or_else(|| {
            ObaError::InvalidArg(format!("kept index {i} beyond {} names", names.len()))
        })?;
        out.push_str(&format!("{i}\t{name}\t{:.6}\n", selection.coefficients[i]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GridSample;
    use crate::reference;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dataset whose features are constant grids: feature value = prescribed
    /// per-sample scalar, so the spatial mean is that scalar exactly.
    fn scalar_dataset(names: &[&str], columns: &[Vec<f64>], labels: &[f64]) -> Dataset {
        let n = labels.len();
        let c = names.len();
        let samples = (0..n)
            .map(|i| {
                let mut data = Vec::with_capacity(c * 4);
                for col in columns {
                    data.extend(std::iter::repeat(col[i]).take(4));
                }
                GridSample::new(
                    Tensor::from_vec(&[c, 2, 2], data).unwrap(),
                    labels[i],
                    0.0,
                    0.0,
                    i as u64,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(
            names.iter().map(|s| s.to_string()).collect(),
            samples,
            (c, 2, 2),
        )
        .unwrap()
    }

    #[test]
    fn exact_copy_of_label_scores_one() {
        let labels = vec![0.0, 0.5, 1.0, 2.0, 4.0];
        let ds = scalar_dataset(
            &["copy@sfc", "flat@sfc"],
            &[labels.clone(), vec![3.3; 5]],
            &labels,
        );
        let sel = pearson_screen(&ds, 0.2).unwrap();
        assert!((sel.coefficients[0] - 1.0).abs() < 1e-12);
        assert_eq!(sel.coefficients[1], 0.0);
        assert_eq!(sel.kept, vec![0]);
    }

    #[test]
    fn altitude_duplicates_keep_strongest() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<f64> = (0..200)
            .map(|_| (rng.gen_range(0..100) as f64) / 10.0 + 0.1)
            .collect();
        // t@500 tracks labels closely, t@850 is a noisier copy, u@300 anticorrelates
        let t500: Vec<f64> = labels
            .iter()
            .map(|y| y + rng.gen_range(-0.1..0.1))
            .collect();
        let t850: Vec<f64> = labels
            .iter()
            .map(|y| y + rng.gen_range(-8.0..8.0))
            .collect();
        let u300: Vec<f64> = labels
            .iter()
            .map(|y| -y + rng.gen_range(-0.5..0.5))
            .collect();
        let ds = scalar_dataset(
            &["t@500", "t@850", "u@300"],
            &[t500.clone(), t850.clone(), u300.clone()],
            &labels,
        );
        let sel = pearson_screen(&ds, 0.2).unwrap();
        // oracle coefficients via the independent naive implementation
        for (i, col) in [&t500, &t850, &u300].iter().enumerate() {
            let want = reference::pearson_naive(col, &labels);
            assert!((sel.coefficients[i] - want).abs() < 1e-12);
        }
        assert!(sel.coefficients[0].abs() > sel.coefficients[1].abs());
        assert!(sel.coefficients[2] < -0.2, "anticorrelated kept via |r|");
        assert_eq!(sel.kept, vec![0, 2]);
    }

    #[test]
    fn reorder_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0f64..5.0)).collect();
        let labels: Vec<f64> = labels
            .iter()
            .map(|&y| {
                if y < 1.0 {
                    0.0
                } else {
                    (y * 10.0).round() / 10.0
                }
            })
            .collect();
        let col: Vec<f64> = labels
            .iter()
            .map(|y| 2.0 * y + rng.gen_range(-1.0..1.0))
            .collect();
        let ds = scalar_dataset(&["a@sfc"], &[col], &labels);
        let sel = pearson_screen(&ds, 0.2).unwrap();
        let mut perm: Vec<usize> = (0..ds.len()).collect();
        perm.reverse();
        let shuffled = ds.subset(&perm).unwrap();
        let sel2 = pearson_screen(&shuffled, 0.2).unwrap();
        assert!((sel.coefficients[0] - sel2.coefficients[0]).abs() < 1e-12);
        assert_eq!(sel.kept, sel2.kept);
    }

    #[test]
    fn too_few_samples_rejected() {
        let ds = scalar_dataset(&["a@sfc"], &[vec![1.0]], &[0.5]);
        assert!(pearson_screen(&ds, 0.2).is_err());
        let flat = scalar_dataset(&["a@sfc"], &[vec![1.0, 2.0]], &[0.5, 0.5]);
        assert!(pearson_screen(&flat, 0.2).is_err());
    }

    #[test]
    fn selection_text_format() {
        let sel = FeatureSelection {
            kept: vec![0, 2],
            coefficients: vec![0.9123456789, 0.1, -0.25],
        };
        let names = vec!["tp@sfc".to_string(), "x@1".to_string(), "u@300".to_string()];
        let text = selection_text(&sel, &names).unwrap();
        assert_eq!(text, "0\ttp@sfc\t0.912346\n2\tu@300\t-0.250000\n");
    }
}
