//! Attack-resilience harness: naive inference, known input/output
//! reconstruction and ICA-based reconstruction.
//!
//! Every metric is a per-attribute standard deviation of a difference between
//! z-normalized data, summarized by its minimum and mean across attributes.
//! Rows of the perturbed data are matched to the originals through the
//! provenance map, which hands the adversary correct pairings.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::dataset::{Dataset, NormalizationParams, Record};
use crate::error::{Error, Result};
use crate::ica::{self, FastIcaConfig};
use crate::perturb::{self, aligned_originals, normalized_difference_std, DisplacementStats, PerturbedDataset};
use crate::seed;

pub const DEFAULT_KNOWN_FRACTION: f64 = 0.10;

/// (original, perturbed) pairs known to the adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownPairs {
    pub fraction: f64,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl KnownPairs {
    /// Samples `ceil(fraction·m)` perturbed rows uniformly without
    /// replacement and pairs each with its original.
    pub fn sample(d: &Dataset, p: &PerturbedDataset, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "known fraction must be in (0, 1], got {fraction}"
            )));
        }
        let orig = aligned_originals(d, p)?;
        let m = p.data.len();
        let count = ((fraction * m as f64).ceil() as usize).clamp(1, m);
        let mut picked = index::sample(&mut seed::rng(seed, "known-pairs", 0), m, count).into_vec();
        picked.sort_unstable();
        let pairs = picked
            .into_iter()
            .map(|i| (orig[i].to_vec(), p.data.records()[i].values.clone()))
            .collect();
        Ok(KnownPairs { fraction, pairs })
    }
}

/// Std of (normalized original − normalized perturbed); each side uses its
/// own z-score parameters.
pub fn naive_inference_metric(d: &Dataset, p: &PerturbedDataset) -> Result<DisplacementStats> {
    perturb::perturbation_displacement(d, p)
}

/// Reconstruction error of `recon` against the aligned originals, both
/// normalized with the originals' parameters.
fn reconstruction_error(orig: &[&[f64]], recon: &[Vec<f64>], n: usize) -> Result<DisplacementStats> {
    let params = NormalizationParams::fit_rows(orig.iter().copied(), n)?;
    let recon_rows: Vec<&[f64]> = recon.iter().map(Vec::as_slice).collect();
    Ok(normalized_difference_std(orig, &params, &recon_rows, &params))
}

#[derive(Debug, Clone)]
pub struct KnownIoOutcome {
    pub reconstructed: Dataset,
    pub stats: DisplacementStats,
    /// Fitted forward map `y ≈ M·x + b`.
    pub map: DMatrix<f64>,
    pub offset: Vec<f64>,
}

/// Fits one global affine map from the known pairs by least squares and
/// inverts it (pseudo-inverse) on every perturbed row.
pub fn known_io_attack(d: &Dataset, p: &PerturbedDataset, known: &KnownPairs) -> Result<KnownIoOutcome> {
    if known.pairs.is_empty() {
        return Err(Error::InvalidConfig("no known pairs".into()));
    }
    let n = p.data.n_attributes();
    if known.pairs.iter().any(|(x, y)| x.len() != n || y.len() != n) {
        return Err(Error::ArityMismatch { left: known.pairs[0].0.len(), right: n });
    }
    let q = known.pairs.len();
    let x_aug = DMatrix::from_fn(q, n + 1, |i, j| if j < n { known.pairs[i].0[j] } else { 1.0 });
    let y = DMatrix::from_fn(q, n, |i, j| known.pairs[i].1[j]);
    let svd = x_aug.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let coef = svd.solve(&y, eps).map_err(|e| Error::DegenerateSystem(e.to_string()))?;
    // coef is (n+1)×n: rows 0..n hold Mᵀ, row n holds b
    let map = coef.rows(0, n).transpose();
    let offset: Vec<f64> = coef.row(n).iter().copied().collect();
    let msvd = map.clone().svd(true, true);
    let meps = 1e-12 * msvd.singular_values.max().max(f64::MIN_POSITIVE);
    let inverse = msvd
        .pseudo_inverse(meps)
        .map_err(|e| Error::DegenerateSystem(e.to_string()))?;

    let recon: Vec<Vec<f64>> = p
        .data
        .records()
        .iter()
        .map(|r| {
            let shifted = nalgebra::DVector::from_iterator(n, r.values.iter().zip(&offset).map(|(v, b)| v - b));
            (&inverse * shifted).iter().copied().collect()
        })
        .collect();
    let orig = aligned_originals(d, p)?;
    let stats = reconstruction_error(&orig, &recon, n)?;
    let reconstructed = p.data.with_records(
        recon
            .iter()
            .zip(p.data.records())
            .map(|(v, r)| Record { values: v.clone(), label: r.label.clone() })
            .collect(),
    )?;
    Ok(KnownIoOutcome {
        reconstructed,
        stats,
        map,
        offset,
    })
}

#[derive(Debug, Clone)]
pub struct IcaAttackOutcome {
    pub stats: DisplacementStats,
    /// `assignment[a]` is the component matched to attribute `a`, if any.
    pub assignment: Vec<Option<usize>>,
    /// False when FastICA hit its iteration cap on some component; the
    /// metric is still reported.
    pub converged: bool,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Greedy bijection by descending |correlation|; ties go to the lowest
/// (attribute, component) pair.
fn greedy_alignment(corr: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (attrs, comps) = corr.shape();
    let mut cells: Vec<(f64, usize, usize)> = (0..attrs)
        .flat_map(|a| (0..comps).map(move |c| (a, c)))
        .map(|(a, c)| (corr[(a, c)].abs(), a, c))
        .collect();
    cells.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut assignment = vec![None; attrs];
    let mut used = vec![false; comps];
    for (_, a, c) in cells {
        if assignment[a].is_none() && !used[c] {
            assignment[a] = Some(c);
            used[c] = true;
        }
    }
    assignment
}

/// Runs FastICA on the perturbed data, matches components to original
/// attributes, rescales each to the attribute's mean and std, and measures
/// the reconstruction error.
pub fn ica_attack(d: &Dataset, p: &PerturbedDataset, seed: u64) -> Result<IcaAttackOutcome> {
    let n = p.data.n_attributes();
    if n < 2 {
        return Err(Error::InvalidConfig("ICA attack needs at least 2 attributes".into()));
    }
    let orig = aligned_originals(d, p)?;
    let m = p.data.len();
    let x = DMatrix::from_fn(m, n, |i, j| p.data.records()[i].values[j]);
    let res = ica::fast_ica(&x, &FastIcaConfig::new(n, seed::derive(seed, "ica-attack", 0)))?;
    let comps = res.sources.ncols();

    let orig_cols: Vec<Vec<f64>> = (0..n).map(|a| orig.iter().map(|r| r[a]).collect()).collect();
    let corr = DMatrix::from_fn(n, comps, |a, c| pearson(&orig_cols[a], res.sources.column(c).as_slice()));
    let assignment = greedy_alignment(&corr);

    let params = NormalizationParams::fit_rows(orig.iter().copied(), n)?;
    let mut recon = vec![vec![0.0; n]; m];
    for a in 0..n {
        let (mean, std) = (params.means[a], params.stds[a]);
        match assignment[a] {
            Some(c) => {
                let col = res.sources.column(c);
                let cm = col.mean();
                let cs = col.variance().sqrt();
                let sign = if corr[(a, c)] < 0.0 { -1.0 } else { 1.0 };
                for (i, row) in recon.iter_mut().enumerate() {
                    let s = if cs > 0.0 { (col[i] - cm) / cs } else { 0.0 };
                    row[a] = mean + sign * std * s;
                }
            }
            None => recon.iter_mut().for_each(|row| row[a] = mean),
        }
    }
    Ok(IcaAttackOutcome {
        stats: reconstruction_error(&orig, &recon, n)?,
        assignment,
        converged: res.converged.iter().all(|&c| c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub known_fraction: f64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(seed: u64) -> Self {
        AttackConfig {
            known_fraction: DEFAULT_KNOWN_FRACTION,
            seed,
        }
    }
}

/// One row of the resilience table.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub method: String,
    pub ni_min: f64,
    pub ni_avg: f64,
    pub ica_min: f64,
    pub ica_avg: f64,
    pub io_min: f64,
    pub io_avg: f64,
    pub ica_converged: bool,
}

impl AttackReport {
    pub fn values(&self) -> [f64; 6] {
        [self.ni_min, self.ni_avg, self.ica_min, self.ica_avg, self.io_min, self.io_avg]
    }
}

pub const REPORT_COLUMNS: [&str; 6] = ["NImin", "NIavg", "ICAmin", "ICAavg", "IOmin", "IOavg"];

/// Runs all three attacks against one perturbed dataset.
pub fn attack_report(method: &str, d: &Dataset, p: &PerturbedDataset, cfg: &AttackConfig) -> Result<AttackReport> {
    let ni = naive_inference_metric(d, p)?;
    let known = KnownPairs::sample(d, p, cfg.known_fraction, cfg.seed)?;
    let io = known_io_attack(d, p, &known)?;
    let ica = ica_attack(d, p, cfg.seed)?;
    Ok(AttackReport {
        method: method.to_string(),
        ni_min: ni.min,
        ni_avg: ni.avg,
        ica_min: ica.stats.min,
        ica_avg: ica.stats.avg,
        io_min: io.stats.min,
        io_avg: io.stats.avg,
        ica_converged: ica.converged,
    })
}

pub fn reports_to_csv(reports: &[AttackReport]) -> String {
    let mut out = format!("method,{},ica_converged\n", REPORT_COLUMNS.join(","));
    for r in reports {
        let vals: Vec<String> = r.values().iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{},{},{}", r.method, vals.join(","), r.ica_converged);
    }
    out
}

/// Aligned plain-text table in the column order of the CSV.
pub fn reports_to_table(reports: &[AttackReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("{:<width$}", "Method");
    for c in REPORT_COLUMNS {
        let _ = write!(out, "  {c:>8}");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<width$}", r.method);
        for v in r.values() {
            let _ = write!(out, "  {v:>8.4}");
        }
        if !r.ica_converged {
            out.push_str("  (ICA not converged)");
        }
        out.push('\n');
    }
    out
}
