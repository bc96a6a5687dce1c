//! Covariance, symmetric eigendecomposition and rotation matrices.
//!
//! A group's covariance is built from its sufficient statistics and
//! diagonalized as `C = P·Δ·Pᵀ` with a cyclic Jacobi solver. Shuffling the
//! columns of `P` gives the group's rotation matrix.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{GroupStats, Record};
use crate::error::{Error, Result};
use crate::seed;

/// Sweep cap for the Jacobi solver.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal convergence threshold, relative to ‖C‖_F.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub entries: DMatrix<f64>,
    pub group_size: usize,
}

impl CovarianceMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// True when every entry is negligible next to the raw second moments,
    /// i.e. the group has no spread (singleton or duplicated records).
    pub fn is_zero(&self, scale: f64) -> bool {
        let tol = 1e-12 * scale.max(1.0);
        self.entries.iter().all(|v| v.abs() <= tol)
    }
}

/// Population covariance from sufficient statistics. A singleton group gives
/// the zero matrix.
pub fn covariance_from_stats(stats: &GroupStats) -> CovarianceMatrix {
    let n = stats.n();
    let s = stats.count.max(1) as f64;
    let mut c = DMatrix::zeros(n, n);
    if stats.count > 1 {
        for a in 0..n {
            for b in a..n {
                let v = stats.product_sum(a, b) / s - (stats.sums[a] / s) * (stats.sums[b] / s);
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
    }
    CovarianceMatrix {
        entries: c,
        group_size: stats.count,
    }
}

/// Largest mean second moment Σx²/s, the scale that rounding errors in
/// [`covariance_from_stats`] are relative to.
pub(crate) fn moment_scale(stats: &GroupStats) -> f64 {
    let n = stats.n();
    let s = stats.count.max(1) as f64;
    (0..n)
        .map(|a| stats.product_sum(a, a).abs() / s)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Descending.
    pub eigenvalues: DVector<f64>,
    /// Unit eigenvectors as columns; the first non-negligible entry of each
    /// column is positive.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let p = &self.eigenvectors;
        p * DMatrix::from_diagonal(&self.eigenvalues) * p.transpose()
    }
}

pub fn eigendecompose(c: &CovarianceMatrix) -> Result<EigenSystem> {
    eigendecompose_symmetric(&c.entries)
}

/// Cyclic Jacobi diagonalization of a real symmetric matrix.
///
/// Only the upper triangle is trusted; the input is symmetrized first.
pub fn eigendecompose_symmetric(c: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = c.nrows();
    assert_eq!(n, c.ncols(), "matrix must be square");
    let mut a = DMatrix::from_fn(n, n, |i, j| if i <= j { c[(i, j)] } else { c[(j, i)] });
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = OFF_DIAGONAL_TOLERANCE * a.norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        let new_rp = cos * arp - sin * arq;
                        let new_rq = sin * arp + cos * arq;
                        a[(r, p)] = new_rp;
                        a[(p, r)] = new_rp;
                        a[(r, q)] = new_rq;
                        a[(q, r)] = new_rq;
                    }
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = cos * vrp - sin * vrq;
                    v[(r, q)] = sin * vrp + cos * vrq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(Error::ConvergenceFailure { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = v.select_columns(&order);
    for mut col in eigenvectors.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            s += 2.0 * a[(p, q)] * a[(p, q)];
        }
    }
    s.sqrt()
}

/// An orthogonal matrix used to rotate the records of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMatrix {
    pub entries: DMatrix<f64>,
    /// `source_shuffle[j]` is the eigenvector column placed at column `j`.
    /// Empty when the matrix did not come from a shuffle.
    pub source_shuffle: Vec<usize>,
}

impl RotationMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        RotationMatrix {
            entries,
            source_shuffle: Vec::new(),
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let n = self.n();
        (self.entries.clone() - DMatrix::<f64>::identity(n, n)).amax() <= tol
    }

    /// max(‖R·Rᵀ − I‖∞, ‖Rᵀ·R − I‖∞), entrywise.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.entries)
    }

    pub fn rotate(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch {
                matrix: self.n(),
                record: values.len(),
            });
        }
        let n = self.n();
        Ok((0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)] * values[j]).sum())
            .collect())
    }
}

pub fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a = (m * m.transpose() - &id).amax();
    let b = (m.transpose() * m - &id).amax();
    a.max(b)
}

/// Applies a seeded uniform permutation to the eigenvector columns.
///
/// If the shuffled matrix would be the identity, the permutation is cycled
/// by one position (or, for n = 1, the axis is reflected) so that no group
/// is released unrotated.
pub fn shuffle_columns(e: &EigenSystem, seed: u64) -> RotationMatrix {
    let n = e.eigenvectors.ncols();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed, "column-shuffle", 0));
    let mut r = RotationMatrix {
        entries: e.eigenvectors.select_columns(&perm),
        source_shuffle: perm,
    };
    if r.is_identity(1e-9) {
        if n >= 2 {
            r.source_shuffle.rotate_left(1);
            r.entries = e.eigenvectors.select_columns(&r.source_shuffle);
        } else {
            r.entries.neg_mut();
        }
    }
    r
}

/// Rotates every record (`x ↦ R·x`); order and labels are kept.
pub fn apply_rotation(r: &RotationMatrix, group: &[Record]) -> Result<Vec<Record>> {
    group
        .iter()
        .map(|rec| {
            Ok(Record {
                values: r.rotate(&rec.values)?,
                label: rec.label.clone(),
            })
        })
        .collect()
}

/// Orthonormalizes `I + sigma·G` where `G` has i.i.d. standard normal
/// entries. QR signs are fixed so the result depends continuously on `G`.
///
/// `sigma = 0` gives the identity; large `sigma` approaches a Haar-random
/// orthogonal matrix.
pub fn random_orthogonal(n: usize, sigma: f64, rng: &mut seed::Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let seedm = DMatrix::<f64>::identity(n, n) + g * sigma;
    orthonormalize(seedm)
}

/// Haar-distributed random orthogonal matrix.
pub fn haar_orthogonal(n: usize, rng: &mut seed::Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    orthonormalize(g)
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
