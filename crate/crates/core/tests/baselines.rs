use procal::attacks::{self, KnownPairs};
use procal::baselines::{self, CondensationConfig, RandomRotationConfig};
use procal::nalgebra::{DMatrix, SymmetricEigen};
use procal::synth::{self, BlobSpec};
use procal::{Dataset, NormalizationParams};

fn single_group(m: usize, seed: u64) -> Dataset {
    let spec = BlobSpec {
        classes: 1,
        ..BlobSpec::default().with_size(m, 3)
    };
    let d = synth::gaussian_blobs(&spec, seed);
    // stretch the attributes so the eigenvalues are distinct
    let recs = d
        .records()
        .iter()
        .map(|r| {
            let v = &r.values;
            procal::Record::labeled(vec![3.0 * v[0] + v[1], v[1] - 0.5 * v[2], 0.3 * v[2]], "c0")
        })
        .collect();
    Dataset::from_records(recs).unwrap()
}

/// Population covariance and its eigensystem, computed independently with
/// nalgebra.
fn oracle_eigen(d: &Dataset) -> (Vec<f64>, SymmetricEigen<f64, procal::nalgebra::Dyn>) {
    let (m, n) = (d.len(), d.n_attributes());
    let x = DMatrix::from_fn(m, n, |i, j| d.records()[i].values[j]);
    let mean: Vec<f64> = (0..n).map(|j| x.column(j).mean()).collect();
    let c = DMatrix::from_fn(m, n, |i, j| x[(i, j)] - mean[j]);
    let cov = c.transpose() * &c / m as f64;
    (mean, cov.symmetric_eigen())
}

fn project(d: &Dataset, center: &[f64], v: &[f64]) -> Vec<f64> {
    d.records()
        .iter()
        .map(|r| r.values.iter().zip(center).zip(v).map(|((x, c), e)| (x - c) * e).sum())
        .collect()
}

#[test]
fn condensation_mean_stays_near_centroid() {
    let d = single_group(20, 1);
    let (centroid, eig) = oracle_eigen(&d);
    let lmax = eig.eigenvalues.max();
    let bound = 3.0 * (lmax / 20.0).sqrt();
    let mut violations = 0;
    for s in 0..1000 {
        let p = baselines::perturb_condensation(&d, &CondensationConfig::new(20, s)).unwrap();
        for j in 0..3 {
            let v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            let proj = project(&p.data, &centroid, &v);
            let mean = proj.iter().sum::<f64>() / 20.0;
            if mean.abs() > bound {
                violations += 1;
            }
        }
    }
    // the bound is three standard errors in the widest direction
    assert!(violations <= 10, "{violations} of 3000 exceed the bound");
}

#[test]
fn condensation_matches_eigen_variances() {
    let d = single_group(10_000, 2);
    let (centroid, eig) = oracle_eigen(&d);
    let p = baselines::perturb_condensation(&d, &CondensationConfig::new(10_000, 3)).unwrap();
    for j in 0..3 {
        let v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let proj = project(&p.data, &centroid, &v);
        let var = proj.iter().map(|x| x * x).sum::<f64>() / proj.len() as f64;
        let want = eig.eigenvalues[j];
        assert!((var - want).abs() <= 0.2 * want, "direction {j}: {var} vs {want}");
    }
}

#[test]
fn random_rotation_falls_to_known_io() {
    let d = synth::gaussian_blobs(&BlobSpec::default().with_size(500, 6), 4);
    let p = baselines::perturb_random_rotation(&d, &RandomRotationConfig::with_seed(4)).unwrap();
    // n + 1 pairs determine an affine map in n dimensions
    let known = KnownPairs::sample(&d, &p, 7.0 / 500.0, 1).unwrap();
    assert_eq!(known.pairs.len(), 7);
    let out = attacks::known_io_attack(&d, &p, &known).unwrap();
    assert!(out.stats.avg <= 1e-6, "{:?}", out.stats);
}

#[test]
fn random_rotation_preserves_normalized_distances() {
    let d = synth::gaussian_blobs(&BlobSpec::default().with_size(300, 4), 5);
    let p = baselines::perturb_random_rotation(&d, &RandomRotationConfig::with_seed(5)).unwrap();
    let params = NormalizationParams::fit(&d).unwrap();
    let a = params.apply(&d).unwrap();
    let b = params.apply(&p.data).unwrap();
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    for i in 0..300 {
        for j in (i + 1..300).step_by(13) {
            let before = dist(&a.records()[i].values, &a.records()[j].values);
            let after = dist(&b.records()[i].values, &b.records()[j].values);
            assert!((before - after).abs() <= 1e-9 * before.max(1.0));
        }
    }
}
