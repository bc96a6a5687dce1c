//! Utility evaluation: k-nearest-neighbour accuracy under stratified k-fold
//! cross-validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{Dataset, NormalizationParams, Record};
use crate::error::{Error, Result};
use crate::grouping::squared_distance;
use crate::method::PerturbMethod;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvConfig {
    pub folds: usize,
    pub knn_k: usize,
    pub seed: u64,
    /// Z-normalize features with training-fold parameters before kNN.
    pub normalize: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            knn_k: 1,
            seed: 0,
            normalize: false,
        }
    }
}

impl CvConfig {
    pub fn with_seed(seed: u64) -> Self {
        CvConfig {
            seed,
            ..Default::default()
        }
    }
}

/// Majority label among the `k` nearest training records.
///
/// Vote ties go to the label with the smaller summed distance, then to the
/// lexicographically smaller label. Neighbour ties at equal distance go to
/// the lower training index.
pub fn knn_classify(train: &Dataset, query: &Record, k: usize) -> Result<String> {
    let rows: Vec<(&[f64], &str)> = train
        .records()
        .iter()
        .map(|r| r.label.as_deref().map(|l| (r.values.as_slice(), l)).ok_or(Error::NoLabels))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::NoLabels);
    }
    if query.arity() != train.n_attributes() {
        return Err(Error::ArityMismatch {
            left: query.arity(),
            right: train.n_attributes(),
        });
    }
    Ok(knn_vote(&rows, &query.values, k).to_string())
}

fn knn_vote<'a>(train: &[(&[f64], &'a str)], query: &[f64], k: usize) -> &'a str {
    let k = k.clamp(1, train.len());
    if k == 1 {
        let mut best = (f64::INFINITY, 0);
        for (i, (v, _)) in train.iter().enumerate() {
            let d = squared_distance(v, query);
            if d < best.0 {
                best = (d, i);
            }
        }
        return train[best.1].1;
    }
    let mut dists: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, (v, _))| (squared_distance(v, query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, cmp);
        dists.truncate(k);
    }
    let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (d, i) in dists {
        let e = votes.entry(train[i].1).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d.sqrt();
    }
    // BTreeMap iterates labels in lexicographic order, so the first maximum wins
    let mut best: Option<(&str, usize, f64)> = None;
    for (label, (count, dist)) in votes {
        let better = match best {
            None => true,
            Some((_, bc, bd)) => count > bc || (count == bc && dist < bd),
        };
        if better {
            best = Some((label, count, dist));
        }
    }
    best.expect("at least one neighbour").0
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    /// Correct predictions over all records.
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub correct: usize,
}

/// Seeded stratified assignment of records to folds: each class's records
/// are shuffled and dealt round-robin, continuing the deal across classes.
pub fn stratified_folds(labels: &[&str], folds: usize, seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = seed::rng(seed, "cv-folds", 0);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    fold_of
}

pub fn cross_validate(d: &Dataset, cfg: &CvConfig) -> Result<UtilityReport> {
    if cfg.folds < 2 || cfg.knn_k == 0 {
        return Err(Error::InvalidConfig(format!(
            "folds must be >= 2 and knn_k >= 1 (got {} and {})",
            cfg.folds, cfg.knn_k
        )));
    }
    if !d.has_labels() {
        return Err(Error::NoLabels);
    }
    if d.len() < cfg.folds {
        return Err(Error::TooFewRecords {
            records: d.len(),
            folds: cfg.folds,
        });
    }
    let labels: Vec<&str> = d.records().iter().map(|r| r.label.as_deref().unwrap()).collect();
    let fold_of = stratified_folds(&labels, cfg.folds, cfg.seed);
    let n = d.n_attributes();

    let per_fold: Vec<(usize, usize)> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| -> Result<(usize, usize)> {
            let train_idx: Vec<usize> = (0..d.len()).filter(|&i| fold_of[i] != f).collect();
            let test_idx: Vec<usize> = (0..d.len()).filter(|&i| fold_of[i] == f).collect();
            let params = if cfg.normalize {
                Some(NormalizationParams::fit_rows(
                    train_idx.iter().map(|&i| d.records()[i].values.as_slice()),
                    n,
                )?)
            } else {
                None
            };
            let features = |i: usize| -> Vec<f64> {
                match &params {
                    Some(p) => p.normalize_values(&d.records()[i].values),
                    None => d.records()[i].values.clone(),
                }
            };
            let train_vals: Vec<Vec<f64>> = train_idx.iter().map(|&i| features(i)).collect();
            let train: Vec<(&[f64], &str)> = train_idx
                .iter()
                .zip(&train_vals)
                .map(|(&i, v)| (v.as_slice(), labels[i]))
                .collect();
            let correct = test_idx
                .iter()
                .filter(|&&i| knn_vote(&train, &features(i), cfg.knn_k) == labels[i])
                .count();
            Ok((correct, test_idx.len()))
        })
        .collect::<Result<_>>()?;

    let correct: usize = per_fold.iter().map(|p| p.0).sum();
    Ok(UtilityReport {
        accuracy: correct as f64 / d.len() as f64,
        fold_accuracies: per_fold
            .iter()
            .map(|&(c, s)| if s == 0 { 0.0 } else { c as f64 / s as f64 })
            .collect(),
        fold_sizes: per_fold.iter().map(|p| p.1).collect(),
        correct,
    })
}

/// Accuracy of the original data followed by one column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    pub columns: Vec<String>,
    pub accuracies: Vec<f64>,
    pub reports: Vec<UtilityReport>,
}

impl UtilityTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        let vals: Vec<String> = self.accuracies.iter().map(|a| format!("{a:.6}")).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(8)).collect();
        let mut out = String::new();
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "{c:>w$}  ");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        for (a, w) in self.accuracies.iter().zip(&widths) {
            let _ = write!(out, "{:>w$}  ", format!("{:.2}%", a * 100.0));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}

/// Cross-validates the original data and each method's output with the same
/// fold seed. Each method perturbs the full dataset once.
pub fn utility_comparison(d: &Dataset, methods: &[PerturbMethod], cfg: &CvConfig) -> Result<UtilityTable> {
    let mut columns = vec!["original".to_string()];
    let mut reports = vec![cross_validate(d, cfg)?];
    for m in methods {
        let p = m.apply(d)?;
        columns.push(m.name());
        reports.push(cross_validate(&p.data, cfg)?);
    }
    Ok(UtilityTable {
        columns,
        accuracies: reports.iter().map(|r| r.accuracy).collect(),
        reports,
    })
}
