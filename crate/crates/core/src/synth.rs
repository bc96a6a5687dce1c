//! Synthetic data generators used by tests, benchmarks and the CLI.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Record};
use crate::seed;

/// Isotropic Gaussian blobs, one per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub records: usize,
    pub attributes: usize,
    pub classes: usize,
    /// Class centers are uniform on `[-center_range, center_range]^n`.
    pub center_range: f64,
    /// Per-attribute standard deviation inside a blob.
    pub spread: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            records: 5000,
            attributes: 10,
            classes: 5,
            center_range: 4.0,
            spread: 1.0,
        }
    }
}

impl BlobSpec {
    pub fn with_size(mut self, records: usize, attributes: usize) -> Self {
        self.records = records;
        self.attributes = attributes;
        self
    }

    pub fn with_classes(mut self, classes: usize) -> Self {
        self.classes = classes;
        self
    }
}

/// Records are assigned to classes round-robin, so class sizes differ by at
/// most one. Labels are `c0`, `c1`, ...
pub fn gaussian_blobs(spec: &BlobSpec, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed, "blobs", 0);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.attributes)
                .map(|_| rng.random_range(-spec.center_range..=spec.center_range))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.spread).expect("spread must be finite and non-negative");
    let records = (0..spec.records)
        .map(|i| {
            let c = i % spec.classes;
            let values = centers[c].iter().map(|mu| mu + noise.sample(&mut rng)).collect();
            Record::labeled(values, format!("c{c}"))
        })
        .collect();
    Dataset::from_records(records).expect("generated records are well formed")
}

/// `rows × sources` matrix of independent zero-mean uniform signals with unit
/// variance, returned row-major.
pub fn uniform_sources(rows: usize, sources: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed, "uniform-sources", 0);
    let h = 3f64.sqrt();
    (0..rows)
        .map(|_| (0..sources).map(|_| rng.random_range(-h..h)).collect())
        .collect()
}
