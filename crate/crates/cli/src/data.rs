use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use longsurv::cohort::{generate_synthetic_cohort, ingest_cohort, stratified_split, truncate_cohort};
use longsurv::model::{EncodedInput, RiskScorer, SurvivalPredictor};
use longsurv::{Cohort, ParametricModel, TrainedCoxModel};

use crate::artifacts::Meta;
use crate::config::{ExperimentConfig, Subset};
use crate::UsageError;

/// Cohort from, in order: an encoded cohort file, raw records, or the
/// synthetic generator.
pub fn load_cohort(config: &ExperimentConfig) -> anyhow::Result<Cohort> {
    if let Some(path) = &config.cohort {
        return Cohort::from_path(path).with_context(|| format!("loading cohort {}", path.display()));
    }
    if let (Some(records), Some(schema), Some(spec)) = (&config.records, &config.schema, &config.event_spec) {
        return ingest_cohort(records, schema, spec).context("ingesting records");
    }
    generate_synthetic_cohort(&config.synthetic).context("generating synthetic cohort")
}

pub struct Splits {
    pub train: Cohort,
    pub val: Cohort,
    pub test: Cohort,
    pub all: Cohort,
}

impl Splits {
    pub fn new(cohort: Cohort, config: &ExperimentConfig) -> anyhow::Result<Self> {
        let (train, val, test) = stratified_split(&cohort, config.split, config.seed).context("splitting cohort")?;
        Ok(Self { train, val, test, all: cohort })
    }

    pub fn get(&self, subset: Subset) -> &Cohort {
        match subset {
            Subset::Train => &self.train,
            Subset::Val => &self.val,
            Subset::Test => &self.test,
            Subset::All => &self.all,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Cox(TrainedCoxModel),
    Parametric(ParametricModel),
}

impl RiskScorer for FittedModel {
    fn risk(&self, input: &EncodedInput) -> longsurv::Result<f64> {
        match self {
            Self::Cox(m) => m.risk(input),
            Self::Parametric(m) => m.risk(input),
        }
    }
}

impl SurvivalPredictor for FittedModel {
    fn survival(&self, input: &EncodedInput, t: f64) -> longsurv::Result<f64> {
        match self {
            Self::Cox(m) => m.survival(input, t),
            Self::Parametric(m) => m.survival(input, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub meta: Meta,
    pub name: String,
    /// Observation truncation applied to evaluation cohorts.
    pub evaluation_truncation: Option<Truncation>,
    #[serde(flatten)]
    pub fitted: FittedModel,
}

impl ModelBundle {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        if !path.is_file() {
            return Err(UsageError(format!("model bundle not found: {}", path.display())).into());
        }
        crate::config::read_json(path)
    }

    pub fn prepare(&self, cohort: &Cohort) -> anyhow::Result<Cohort> {
        Ok(match self.evaluation_truncation {
            Some(t) => truncate_cohort(cohort, t.k, t.seed)?,
            None => cohort.clone(),
        })
    }
}
