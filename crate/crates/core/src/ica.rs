//! FastICA: deflationary fixed-point iteration with the `tanh` contrast.
//!
//! Observations are centered and whitened with the eigendecomposition of
//! their covariance, then independent directions are extracted one at a time,
//! each decorrelated against those already found.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectral;

pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastIcaConfig {
    pub components: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl FastIcaConfig {
    pub fn new(components: usize, seed: u64) -> Self {
        FastIcaConfig {
            components,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

/// Centering and whitening of an observation matrix.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub mean: DVector<f64>,
    /// `components × n`; `z = K·(x − mean)`.
    pub matrix: DMatrix<f64>,
    /// `n × components`, pseudo-inverse of `matrix`.
    pub dewhitening: DMatrix<f64>,
}

impl Whitening {
    /// Fits whitening for the rows of `x` (`rows × n`), keeping the
    /// `components` leading principal directions. Directions with variance
    /// below `1e-12` of the largest are dropped.
    pub fn fit(x: &DMatrix<f64>, components: usize) -> Result<Self> {
        let (rows, n) = x.shape();
        let mean = x.row_mean().transpose();
        let centered = DMatrix::from_fn(rows, n, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / rows as f64;
        let eig = spectral::eigendecompose_symmetric(&cov)?;
        let top = eig.eigenvalues.get(0).copied().unwrap_or(0.0).max(0.0);
        let keep = (0..components.min(n))
            .take_while(|&j| eig.eigenvalues[j] > 1e-12 * top && eig.eigenvalues[j] > 0.0)
            .count();
        let mut matrix = DMatrix::zeros(keep, n);
        let mut dewhitening = DMatrix::zeros(n, keep);
        for j in 0..keep {
            let l = eig.eigenvalues[j];
            let v = eig.eigenvectors.column(j);
            matrix.row_mut(j).copy_from(&(v.transpose() / l.sqrt()));
            dewhitening.column_mut(j).copy_from(&(v * l.sqrt()));
        }
        Ok(Whitening {
            mean,
            matrix,
            dewhitening,
        })
    }

    /// Whitened observations, `rows × components`.
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (rows, n) = x.shape();
        let centered = DMatrix::from_fn(rows, n, |i, j| x[(i, j)] - self.mean[j]);
        centered * self.matrix.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult {
    /// Estimated sources, `rows × components`, unit variance.
    pub sources: DMatrix<f64>,
    /// Unmixing matrix in the original coordinates, `components × n`.
    pub unmixing: DMatrix<f64>,
    /// Mixing estimate, `n × components`: `x ≈ mean + mixing·s`.
    pub mixing: DMatrix<f64>,
    /// Per component: did the fixed-point iteration meet `tol`?
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl IcaResult {
    /// Errors with [`Error::NonConvergence`] when any component hit the
    /// iteration cap.
    pub fn require_converged(&self) -> Result<()> {
        let failed: Vec<usize> = (0..self.converged.len()).filter(|&i| !self.converged[i]).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::NonConvergence { components: failed })
        }
    }
}

/// Runs FastICA on the rows of `x` (`rows × n`).
///
/// Non-converged components are still returned; check
/// [`IcaResult::converged`] or call [`IcaResult::require_converged`].
pub fn fast_ica(x: &DMatrix<f64>, cfg: &FastIcaConfig) -> Result<IcaResult> {
    let (rows, n) = x.shape();
    if cfg.components == 0 || cfg.components > n {
        return Err(Error::InvalidConfig(format!(
            "component count {} must be in 1..={n}",
            cfg.components
        )));
    }
    if rows < cfg.components.max(2) {
        return Err(Error::InvalidConfig(format!(
            "{rows} observations are too few for {} components",
            cfg.components
        )));
    }
    let white = Whitening::fit(x, cfg.components)?;
    let z = white.transform(x);
    let c = z.ncols();
    let mut rng = seed::rng(cfg.seed, "fast-ica", 0);
    let mut w_rows: Vec<DVector<f64>> = Vec::with_capacity(c);
    let mut converged = Vec::with_capacity(c);
    let mut iterations = Vec::with_capacity(c);
    let inv_rows = 1.0 / rows as f64;

    for _ in 0..c {
        let mut w = DVector::from_fn(c, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        decorrelate(&mut w, &w_rows);
        w.normalize_mut();
        let mut ok = false;
        let mut it = 0;
        while it < cfg.max_iter {
            it += 1;
            let proj = &z * &w;
            let mut expect_zg = DVector::zeros(c);
            let mut expect_dg = 0.0;
            for i in 0..rows {
                let g = proj[i].tanh();
                expect_dg += 1.0 - g * g;
                for j in 0..c {
                    expect_zg[j] += z[(i, j)] * g;
                }
            }
            let mut next = expect_zg * inv_rows - &w * (expect_dg * inv_rows);
            decorrelate(&mut next, &w_rows);
            let norm = next.norm();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            next /= norm;
            let delta = (next.dot(&w).abs() - 1.0).abs();
            w = next;
            if delta < cfg.tol {
                ok = true;
                break;
            }
        }
        w_rows.push(w);
        converged.push(ok);
        iterations.push(it);
    }

    let w = DMatrix::from_fn(c, c, |i, j| w_rows[i][j]);
    let sources = &z * w.transpose();
    let unmixing = &w * &white.matrix;
    let mixing = &white.dewhitening * w.transpose();
    Ok(IcaResult {
        sources,
        unmixing,
        mixing,
        converged,
        iterations,
    })
}

fn decorrelate(w: &mut DVector<f64>, found: &[DVector<f64>]) {
    for f in found {
        let p = w.dot(f);
        w.axpy(-p, f, 1.0);
    }
}
