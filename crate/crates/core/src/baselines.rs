//! Comparison methods: data condensation (DC) and random rotation
//! perturbation (RP).

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::{Dataset, NormalizationParams, Record};
use crate::error::{Error, Result};
use crate::grouping;
use crate::perturb::{normalized_difference_std, PerturbedDataset};
use crate::seed;
use crate::spectral::{self, RotationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CondensationConfig {
    pub group_size: usize,
    pub seed: u64,
}

impl CondensationConfig {
    pub fn new(group_size: usize, seed: u64) -> Self {
        CondensationConfig { group_size, seed }
    }
}

/// Replaces each size-k′ group with synthetic records drawn uniformly along
/// the group's eigenvectors, with variance λ_j along eigenvector j.
///
/// Output row `i` is the synthetic stand-in for the i-th member of its
/// group; provenance is always kept since no shuffle is applied.
pub fn perturb_condensation(d: &Dataset, cfg: &CondensationConfig) -> Result<PerturbedDataset> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grouping = grouping::group_by_size(d, cfg.group_size, cfg.seed)?;
    let n = d.n_attributes();
    let mut rows = Vec::with_capacity(d.len());
    let mut provenance = Vec::with_capacity(d.len());
    for (gi, g) in grouping.groups.iter().enumerate() {
        let mut rng = seed::rng(cfg.seed, "condensation-group", gi as u64);
        let size = g.len() as f64;
        let centroid: Vec<f64> = g.stats.sums.iter().map(|s| s / size).collect();
        let eig = spectral::eigendecompose(&spectral::covariance_from_stats(&g.stats))?;
        let half_widths: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&l| (3.0 * l.max(0.0)).sqrt())
            .collect();
        let mut labels: Vec<Option<String>> = g
            .members
            .iter()
            .map(|&i| d.records()[i].label.clone())
            .collect();
        labels.shuffle(&mut rng);
        for (&member, label) in g.members.iter().zip(labels) {
            let mut values = centroid.clone();
            for (j, &h) in half_widths.iter().enumerate() {
                if h == 0.0 {
                    continue;
                }
                let u = rng.random_range(-h..=h);
                for (a, v) in values.iter_mut().enumerate() {
                    *v += u * eig.eigenvectors[(a, j)];
                }
            }
            debug_assert_eq!(values.len(), n);
            rows.push(Record { values, label });
            provenance.push(member);
        }
    }
    Ok(PerturbedDataset {
        data: d.with_records(rows)?,
        provenance: Some(provenance),
    })
}

pub const DEFAULT_RP_ITERATIONS: usize = 10;
pub const DEFAULT_RP_SIGMA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomRotationConfig {
    pub iterations: usize,
    /// Scale of the Gaussian perturbation of the identity that each candidate
    /// is orthonormalized from.
    pub sigma: f64,
    pub seed: u64,
    /// Rotate z-normalized data (and map back); otherwise rotate raw values.
    pub normalize: bool,
}

impl Default for RandomRotationConfig {
    fn default() -> Self {
        RandomRotationConfig {
            iterations: DEFAULT_RP_ITERATIONS,
            sigma: DEFAULT_RP_SIGMA,
            seed: 0,
            normalize: true,
        }
    }
}

impl RandomRotationConfig {
    pub fn with_seed(seed: u64) -> Self {
        RandomRotationConfig {
            seed,
            ..Default::default()
        }
    }
}

/// Outcome of a random rotation run, including every scored candidate.
#[derive(Debug, Clone)]
pub struct RandomRotationRun {
    pub perturbed: PerturbedDataset,
    pub rotation: RotationMatrix,
    /// NImin of each candidate, in draw order.
    pub candidate_scores: Vec<f64>,
    pub winner: usize,
}

/// Scale used for the RP coordinate change; zero-variance attributes keep
/// scale 1 so the map stays invertible.
fn rp_params(d: &Dataset, normalize: bool) -> Result<NormalizationParams> {
    let n = d.n_attributes();
    if !normalize {
        return Ok(NormalizationParams {
            means: vec![0.0; n],
            stds: vec![1.0; n],
        });
    }
    let mut p = NormalizationParams::fit(d)?;
    for s in &mut p.stds {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    Ok(p)
}

pub fn perturb_random_rotation(d: &Dataset, cfg: &RandomRotationConfig) -> Result<PerturbedDataset> {
    random_rotation_run(d, cfg).map(|r| r.perturbed)
}

/// Best-of-N random rotation: each candidate is scored by the NImin of the
/// rotated normalized data; the highest score wins, ties to the earliest.
pub fn random_rotation_run(d: &Dataset, cfg: &RandomRotationConfig) -> Result<RandomRotationRun> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.iterations == 0 {
        return Err(Error::InvalidConfig("RP iterations must be positive".into()));
    }
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("RP sigma must be non-negative, got {}", cfg.sigma)));
    }
    let n = d.n_attributes();
    let params = rp_params(d, cfg.normalize)?;
    let z: Vec<Vec<f64>> = d
        .records()
        .iter()
        .map(|r| params.normalize_values(&r.values))
        .collect();
    let z_rows: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let z_params = NormalizationParams::fit_rows(z_rows.iter().copied(), n)?;

    let mut rng = seed::rng(cfg.seed, "random-rotation", 0);
    let mut best: Option<(f64, usize, RotationMatrix)> = None;
    let mut scores = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let r = RotationMatrix::from_matrix(spectral::random_orthogonal(n, cfg.sigma, &mut rng));
        let rotated: Vec<Vec<f64>> = z.iter().map(|v| r.rotate(v)).collect::<Result<_>>()?;
        let rot_rows: Vec<&[f64]> = rotated.iter().map(Vec::as_slice).collect();
        let rot_params = NormalizationParams::fit_rows(rot_rows.iter().copied(), n)?;
        let score = normalized_difference_std(&z_rows, &z_params, &rot_rows, &rot_params).min;
        scores.push(score);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, it, r));
        }
    }
    let (_, winner, rotation) = best.expect("at least one iteration");

    let rows = d
        .records()
        .iter()
        .zip(&z)
        .map(|(rec, zv)| {
            let rz = rotation.rotate(zv)?;
            let values = rz
                .iter()
                .enumerate()
                .map(|(a, v)| v * params.stds[a] + params.means[a])
                .collect();
            Ok(Record {
                values,
                label: rec.label.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomRotationRun {
        perturbed: PerturbedDataset {
            data: d.with_records(rows)?,
            provenance: Some((0..d.len()).collect()),
        },
        rotation,
        candidate_scores: scores,
        winner,
    })
}
