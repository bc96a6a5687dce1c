//! A single entry point over all perturbation methods.

use crate::baselines::{self, CondensationConfig, RandomRotationConfig};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::grouping::GroupingMode;
use crate::perturb::{self, PerturbConfig, PerturbedDataset};
use crate::stream::{self, StreamConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbMethod {
    Procal(PerturbConfig),
    ProcalStream(StreamConfig),
    Condensation(CondensationConfig),
    RandomRotation(RandomRotationConfig),
}

impl PerturbMethod {
    pub fn apply(&self, d: &Dataset) -> Result<PerturbedDataset> {
        match self {
            PerturbMethod::Procal(cfg) => perturb::perturb_static(d, cfg),
            PerturbMethod::ProcalStream(cfg) => stream::perturb_stream_dataset(d, cfg),
            PerturbMethod::Condensation(cfg) => baselines::perturb_condensation(d, cfg),
            PerturbMethod::RandomRotation(cfg) => baselines::perturb_random_rotation(d, cfg),
        }
    }

    /// Short column name, e.g. `procal(k'=100)`.
    pub fn name(&self) -> String {
        let grouping = |mode: &GroupingMode| match mode {
            GroupingMode::ByGroupSize(k) => format!("k'={k}"),
            GroupingMode::ByClusterCount(k) => format!("k={k}"),
        };
        match self {
            PerturbMethod::Procal(cfg) => format!("procal({})", grouping(&cfg.grouping.mode)),
            PerturbMethod::ProcalStream(cfg) => format!("procal-stream({})", grouping(&cfg.grouping.mode)),
            PerturbMethod::Condensation(cfg) => format!("dc(k'={})", cfg.group_size),
            PerturbMethod::RandomRotation(cfg) => format!("rp(it={})", cfg.iterations),
        }
    }
}
