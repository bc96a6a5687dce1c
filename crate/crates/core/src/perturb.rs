//! Static rotation-based condensation perturbation.
//!
//! The dataset is grouped, each group with spread is rotated by the
//! column-shuffled eigenvector matrix of its own covariance, groups without
//! spread borrow the most recent rotation of a group that had one, and the
//! merged rows are shuffled before release.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{Dataset, NormalizationParams, Record};
use crate::error::{Error, Result};
use crate::grouping::{self, Grouping, GroupingConfig};
use crate::seed;
use crate::spectral::{self, RotationMatrix};

/// Smallest group that gets its own rotation matrix.
pub const DEFAULT_FALLBACK_MIN_GROUP_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbConfig {
    pub grouping: GroupingConfig,
    /// Seeds rotations and the release shuffle.
    pub seed: u64,
    /// Groups smaller than this use the fallback rotation.
    pub fallback_min_group_size: usize,
    /// When every group needs a fallback and none exists, draw a random
    /// orthogonal matrix instead of failing with
    /// [`Error::NoFallbackAvailable`].
    pub random_fallback: bool,
    /// Keep the output-row → input-row map. Off for production output.
    pub keep_provenance: bool,
}

impl PerturbConfig {
    pub fn new(grouping: GroupingConfig, seed: u64) -> Self {
        PerturbConfig {
            grouping,
            seed,
            fallback_min_group_size: DEFAULT_FALLBACK_MIN_GROUP_SIZE,
            random_fallback: true,
            keep_provenance: false,
        }
    }

    pub fn with_provenance(mut self) -> Self {
        self.keep_provenance = true;
        self
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        self.grouping.validate(m)?;
        if self.fallback_min_group_size < 2 {
            return Err(Error::InvalidConfig(
                "fallback_min_group_size must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDataset {
    pub data: Dataset,
    /// `provenance[i]` is the index of the input row behind output row `i`.
    pub provenance: Option<Vec<usize>>,
}

impl PerturbedDataset {
    pub fn provenance(&self) -> Result<&[usize]> {
        self.provenance.as_deref().ok_or(Error::ProvenanceMissing)
    }

    pub fn without_provenance(mut self) -> Self {
        self.provenance = None;
        self
    }
}

/// How a group's rotation was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationSource {
    /// From the group's own covariance.
    Own,
    /// Borrowed from an earlier group (or carried over from a previous chunk).
    Fallback,
    /// Random orthogonal matrix; no group had spread.
    Random,
}

/// Per-run detail kept for inspection: the grouping and, for each group, the
/// index of the rotation applied to it.
#[derive(Debug, Clone)]
pub struct PerturbTrace {
    pub grouping: Grouping,
    pub rotations: Vec<RotationMatrix>,
    pub group_rotation: Vec<usize>,
    pub group_source: Vec<RotationSource>,
}

/// Rotated rows in group order, before any release shuffle.
#[derive(Debug, Clone)]
pub(crate) struct RotatedGroups {
    pub rows: Vec<Record>,
    pub origin: Vec<usize>,
    pub trace: PerturbTrace,
}

impl RotatedGroups {
    pub fn last_rotation(&self) -> Option<&RotationMatrix> {
        self.trace
            .group_source
            .iter()
            .zip(&self.trace.group_rotation)
            .rev()
            .find(|(s, _)| **s == RotationSource::Own)
            .map(|(_, &i)| &self.trace.rotations[i])
    }
}

/// Rotates every group of `grouping`.
///
/// `carried` is the most recent own-rotation from earlier data (the previous
/// stream chunk); it serves as the fallback until this call produces one.
pub(crate) fn rotate_groups(
    d: &Dataset,
    grouping: Grouping,
    cfg: &PerturbConfig,
    carried: Option<&RotationMatrix>,
) -> Result<RotatedGroups> {
    let own: Vec<Option<RotationMatrix>> = grouping
        .groups
        .par_iter()
        .enumerate()
        .map(|(gi, g)| -> Result<Option<RotationMatrix>> {
            if g.len() < cfg.fallback_min_group_size {
                return Ok(None);
            }
            let cov = spectral::covariance_from_stats(&g.stats);
            if cov.is_zero(spectral::moment_scale(&g.stats)) {
                return Ok(None);
            }
            let eig = spectral::eigendecompose(&cov)?;
            let rseed = seed::derive(cfg.seed, "group-rotation", gi as u64);
            Ok(Some(spectral::shuffle_columns(&eig, rseed)))
        })
        .collect::<Result<_>>()?;

    let mut rotations: Vec<RotationMatrix> = Vec::new();
    let mut group_rotation = vec![usize::MAX; grouping.groups.len()];
    let mut group_source = vec![RotationSource::Fallback; grouping.groups.len()];
    let mut last: Option<usize> = None;
    if let Some(r) = carried {
        rotations.push(r.clone());
        last = Some(0);
    }
    let mut deferred = Vec::new();
    for (gi, r) in own.into_iter().enumerate() {
        match (r, last) {
            (Some(r), _) => {
                rotations.push(r);
                last = Some(rotations.len() - 1);
                group_rotation[gi] = rotations.len() - 1;
                group_source[gi] = RotationSource::Own;
            }
            (None, Some(l)) => group_rotation[gi] = l,
            (None, None) => deferred.push(gi),
        }
    }
    if !deferred.is_empty() {
        let idx = match last {
            Some(l) => l,
            None if cfg.random_fallback => {
                let mut rng = seed::rng(cfg.seed, "fallback-orthogonal", 0);
                let q = spectral::haar_orthogonal(d.n_attributes(), &mut rng);
                rotations.push(RotationMatrix::from_matrix(q));
                for &gi in &deferred {
                    group_source[gi] = RotationSource::Random;
                }
                rotations.len() - 1
            }
            None => return Err(Error::NoFallbackAvailable),
        };
        for gi in deferred {
            group_rotation[gi] = idx;
        }
    }

    let recs = d.records();
    let mut rows = Vec::with_capacity(d.len());
    let mut origin = Vec::with_capacity(d.len());
    for (g, &ri) in grouping.groups.iter().zip(&group_rotation) {
        let r = &rotations[ri];
        for &i in &g.members {
            rows.push(Record {
                values: r.rotate(&recs[i].values)?,
                label: recs[i].label.clone(),
            });
            origin.push(i);
        }
    }
    Ok(RotatedGroups {
        rows,
        origin,
        trace: PerturbTrace {
            grouping,
            rotations,
            group_rotation,
            group_source,
        },
    })
}

/// Perturbs a static dataset. See the module docs for the procedure.
pub fn perturb_static(d: &Dataset, cfg: &PerturbConfig) -> Result<PerturbedDataset> {
    perturb_static_traced(d, cfg).map(|(p, _)| p)
}

/// As [`perturb_static`], also returning the grouping and rotations used.
pub fn perturb_static_traced(
    d: &Dataset,
    cfg: &PerturbConfig,
) -> Result<(PerturbedDataset, PerturbTrace)> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(d.len())?;
    let grouping = grouping::group(d, &cfg.grouping)?;
    let rotated = rotate_groups(d, grouping, cfg, None)?;
    let (rows, origin) = shuffle_rows(rotated.rows, rotated.origin, cfg.seed, 0);
    let data = d.with_records(rows)?;
    let provenance = cfg.keep_provenance.then_some(origin);
    Ok((PerturbedDataset { data, provenance }, rotated.trace))
}

/// Seeded uniform shuffle applied jointly to rows and their origins.
pub(crate) fn shuffle_rows<T>(
    rows: Vec<Record>,
    origin: Vec<T>,
    seed: u64,
    index: u64,
) -> (Vec<Record>, Vec<T>) {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut seed::rng(seed, "release-shuffle", index));
    let mut rows: Vec<Option<Record>> = rows.into_iter().map(Some).collect();
    let mut origin: Vec<Option<T>> = origin.into_iter().map(Some).collect();
    let out_rows = order.iter().map(|&i| rows[i].take().unwrap()).collect();
    let out_origin = order.iter().map(|&i| origin[i].take().unwrap()).collect();
    (out_rows, out_origin)
}

/// Per-attribute standard deviation of a normalized difference, with its
/// minimum and mean across attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementStats {
    pub per_attribute: Vec<f64>,
    pub min: f64,
    pub avg: f64,
}

impl DisplacementStats {
    pub(crate) fn from_per_attribute(per_attribute: Vec<f64>) -> Self {
        let min = per_attribute.iter().copied().fold(f64::INFINITY, f64::min);
        let avg = per_attribute.iter().sum::<f64>() / per_attribute.len().max(1) as f64;
        DisplacementStats {
            per_attribute,
            min: if min.is_finite() { min } else { 0.0 },
            avg,
        }
    }
}

/// Population std over rows of `left_params(left) − right_params(right)`,
/// per attribute.
pub(crate) fn normalized_difference_std(
    left: &[&[f64]],
    left_params: &NormalizationParams,
    right: &[&[f64]],
    right_params: &NormalizationParams,
) -> DisplacementStats {
    let n = left_params.means.len();
    let m = left.len() as f64;
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let diffs: Vec<Vec<f64>> = left
        .iter()
        .zip(right)
        .map(|(l, r)| {
            let a = left_params.normalize_values(l);
            let b = right_params.normalize_values(r);
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        })
        .collect();
    for d in &diffs {
        for a in 0..n {
            sum[a] += d[a];
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    for d in &diffs {
        for a in 0..n {
            let e = d[a] - mean[a];
            sq[a] += e * e;
        }
    }
    DisplacementStats::from_per_attribute(sq.into_iter().map(|s| (s / m).sqrt()).collect())
}

/// Rows of `d` reordered to line up with the rows of `p`.
pub(crate) fn aligned_originals<'a>(d: &'a Dataset, p: &PerturbedDataset) -> Result<Vec<&'a [f64]>> {
    let prov = p.provenance()?;
    if prov.len() != p.data.len() || prov.iter().any(|&i| i >= d.len()) {
        return Err(Error::InvalidConfig(
            "provenance does not match the datasets".into(),
        ));
    }
    if d.n_attributes() != p.data.n_attributes() {
        return Err(Error::ArityMismatch {
            left: d.n_attributes(),
            right: p.data.n_attributes(),
        });
    }
    Ok(prov.iter().map(|&i| d.records()[i].values.as_slice()).collect())
}

/// Std of (normalized original − normalized perturbed) per attribute. Each
/// dataset is z-normalized with its own parameters; rows are aligned through
/// the provenance map.
pub fn perturbation_displacement(d: &Dataset, p: &PerturbedDataset) -> Result<DisplacementStats> {
    let orig = aligned_originals(d, p)?;
    let pert: Vec<&[f64]> = p.data.records().iter().map(|r| r.values.as_slice()).collect();
    let n = d.n_attributes();
    let op = NormalizationParams::fit_rows(orig.iter().copied(), n)?;
    let pp = NormalizationParams::fit_rows(pert.iter().copied(), n)?;
    Ok(normalized_difference_std(&orig, &op, &pert, &pp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::GroupingConfig;
    use crate::synth;

    fn pairs_off_origin() -> Dataset {
        Dataset::from_records(vec![
            Record::labeled(vec![1.0, 2.0], "a"),
            Record::labeled(vec![1.1, 2.3], "a"),
            Record::labeled(vec![10.0, 13.0], "b"),
            Record::labeled(vec![10.2, 13.1], "b"),
        ])
        .unwrap()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        crate::grouping::squared_distance(a, b).sqrt()
    }

    #[test]
    fn pairs_are_rotated_isometrically() {
        let d = pairs_off_origin();
        for s in 0..20 {
            let cfg = PerturbConfig::new(GroupingConfig::by_group_size(2, s), s).with_provenance();
            let (p, trace) = perturb_static_traced(&d, &cfg).unwrap();
            let prov = p.provenance().unwrap();
            let mut pos = [0; 4];
            for (o, &i) in prov.iter().enumerate() {
                pos[i] = o;
            }
            for g in &trace.grouping.groups {
                let (i, j) = (g.members[0], g.members[1]);
                let before = dist(&d.records()[i].values, &d.records()[j].values);
                let after = dist(&p.data.records()[pos[i]].values, &p.data.records()[pos[j]].values);
                assert!((before - after).abs() <= 1e-9 * before);
            }
            for (o, &i) in prov.iter().enumerate() {
                assert_ne!(p.data.records()[o].values, d.records()[i].values, "seed {s}");
                assert_eq!(p.data.records()[o].label, d.records()[i].label);
            }
        }
    }

    #[test]
    fn remainder_singleton_uses_previous_rotation() {
        let d = Dataset::from_records(
            [[0.0, 1.0], [0.5, 1.7], [5.0, 3.0], [5.2, 3.9], [9.0, -4.0]]
                .iter()
                .map(|r| Record::new(r.to_vec()))
                .collect(),
        )
        .unwrap();
        let cfg = PerturbConfig::new(GroupingConfig::by_group_size(2, 3), 3).with_provenance();
        let (p, t) = perturb_static_traced(&d, &cfg).unwrap();
        assert_eq!(p.data.len(), 5);
        assert_eq!(t.grouping.sizes(), vec![2, 2, 1]);
        assert_eq!(t.group_source[2], RotationSource::Fallback);
        assert_eq!(t.group_rotation[2], t.group_rotation[1]);
        assert!(!t.rotations[t.group_rotation[2]].is_identity(1e-9));
    }

    #[test]
    fn singletons_before_any_rotation_are_deferred() {
        // k = m: every cluster is a singleton, so a random matrix is drawn
        let d = pairs_off_origin();
        let cfg = PerturbConfig::new(GroupingConfig::by_cluster_count(4, 1), 1);
        let (p, t) = perturb_static_traced(&d, &cfg).unwrap();
        assert!(t.group_source.iter().all(|&s| s == RotationSource::Random));
        assert_eq!(p.data.len(), 4);
        assert!(t.rotations[0].orthogonality_error() < 1e-12);

        let mut strict = cfg;
        strict.random_fallback = false;
        assert!(matches!(perturb_static(&d, &strict), Err(Error::NoFallbackAvailable)));
    }

    #[test]
    fn duplicate_groups_borrow_rotation() {
        let d = Dataset::from_records(
            [[3.0, 3.0], [3.0, 3.0], [1.0, 0.0], [1.5, 0.8]]
                .iter()
                .map(|r| Record::new(r.to_vec()))
                .collect(),
        )
        .unwrap();
        let cfg = PerturbConfig::new(GroupingConfig::by_group_size(2, 0), 0);
        let (_, t) = perturb_static_traced(&d, &cfg).unwrap();
        let dup = t.grouping.assignment[0];
        assert_ne!(t.group_source[dup], RotationSource::Own);
        assert_eq!(t.group_rotation[dup], t.group_rotation[1 - dup]);
        assert_eq!(t.group_source[1 - dup], RotationSource::Own);
    }

    #[test]
    fn shuffle_conserves_rows_and_is_deterministic() {
        let d = synth::gaussian_blobs(&synth::BlobSpec::default().with_size(300, 4), 5);
        let cfg = PerturbConfig::new(GroupingConfig::by_group_size(10, 5), 5).with_provenance();
        let (p, t) = perturb_static_traced(&d, &cfg).unwrap();
        // pre-shuffle rows rebuilt from the trace
        let mut pre: Vec<String> = Vec::new();
        for (g, &ri) in t.grouping.groups.iter().zip(&t.group_rotation) {
            for &i in &g.members {
                let v = t.rotations[ri].rotate(&d.records()[i].values).unwrap();
                pre.push(format!("{v:?}{:?}", d.records()[i].label));
            }
        }
        let mut post: Vec<String> = p
            .data
            .records()
            .iter()
            .map(|r| format!("{:?}{:?}", r.values, r.label))
            .collect();
        pre.sort();
        post.sort();
        assert_eq!(pre, post);
        assert_eq!(perturb_static(&d, &cfg).unwrap(), p);
    }

    #[test]
    fn displacement_properties() {
        let d = synth::gaussian_blobs(&synth::BlobSpec::default().with_size(500, 5), 2);
        let identity = PerturbedDataset {
            data: d.clone(),
            provenance: Some((0..d.len()).collect()),
        };
        let s = perturbation_displacement(&d, &identity).unwrap();
        assert!(s.per_attribute.iter().all(|&v| v == 0.0));

        let cfg = PerturbConfig::new(GroupingConfig::by_group_size(10, 4), 4).with_provenance();
        let p = perturb_static(&d, &cfg).unwrap();
        let s = perturbation_displacement(&d, &p).unwrap();
        assert!(s.min <= s.avg);
        assert!(s.avg > 0.1, "avg displacement {}", s.avg);

        assert!(matches!(
            perturbation_displacement(&d, &p.clone().without_provenance()),
            Err(Error::ProvenanceMissing)
        ));
    }
}
