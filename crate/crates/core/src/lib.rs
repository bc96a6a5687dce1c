//! Rotation-based condensation perturbation (P²RoCAl) for static datasets and
//! data streams.
//!
//! Records are partitioned into homogeneous groups, each group is rotated by a
//! column-shuffled eigenvector matrix of its own covariance, and the rotated
//! groups are merged and shuffled before release. The crate also carries the
//! comparison baselines (data condensation and random rotation), the
//! reconstruction attacks used to judge resilience, and a 1-NN
//! cross-validation harness used to judge utility.

pub mod attacks;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod grouping;
pub mod ica;
pub mod method;
pub mod perturb;
pub mod seed;
pub mod spectral;
pub mod stream;
pub mod synth;
pub mod utility;

pub use nalgebra;

pub use dataset::{Dataset, NormalizationParams, Record};
pub use error::{Error, Result};
pub use method::PerturbMethod;
pub use perturb::{PerturbConfig, PerturbedDataset};
