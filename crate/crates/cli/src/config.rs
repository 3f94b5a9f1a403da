//! Experiment configuration. Precedence: command-line flags, then the JSON
//! config file, then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use longsurv::cohort::SyntheticConfig;
use longsurv::metrics::ConcordanceKind;
use longsurv::model::ModelKind;
use longsurv::parametric::Family;
use longsurv::{EventSpec, TrainingConfig};

use crate::UsageError;

/// Cox risk model or parametric baseline, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Cox(ModelKind),
    Parametric { kind: Family },
}

impl Default for ModelChoice {
    fn default() -> Self {
        Self::Cox(ModelKind::Linear)
    }
}

impl ModelChoice {
    pub fn parse(name: &str) -> Result<Self, UsageError> {
        Ok(match name {
            "linear" => Self::Cox(ModelKind::Linear),
            "mlp" => Self::Cox(ModelKind::mlp()),
            "composite" => Self::Cox(ModelKind::composite()),
            "weibull" => Self::Parametric { kind: Family::Weibull },
            "gompertz" => Self::Parametric { kind: Family::Gompertz },
            other => return Err(UsageError(format!("unknown model {other:?}"))),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Cox(ModelKind::Linear) => "linear",
            Self::Cox(ModelKind::Mlp { .. }) => "mlp",
            Self::Cox(ModelKind::Composite { .. }) => "composite",
            Self::Parametric { kind: Family::Weibull } => "weibull",
            Self::Parametric { kind: Family::Gompertz } => "gompertz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// `None` entries mean the whole training cohort.
    pub batch_sizes: Vec<Option<usize>>,
    pub k_values: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { batch_sizes: vec![Some(20), Some(40), Some(80), None], k_values: vec![1, 2, 4, 8] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub repeats: usize,
    /// Feature names; empty means every feature in the schema.
    pub features: Vec<String>,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self { repeats: 10, features: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Val,
    #[default]
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            "all" => Ok(Self::All),
            _ => Err(UsageError(format!("unknown subset {s:?}; expected train, val, test or all"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Encoded cohort written by `simulate`.
    pub cohort: Option<PathBuf>,
    /// Raw JSON-lines records, ingested with `schema` and `event_spec`.
    pub records: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub event_spec: Option<EventSpec>,
    /// Generated in memory when no cohort or records are given.
    pub synthetic: SyntheticConfig,
    pub split: [f64; 3],
    pub model: ModelChoice,
    /// Label used in metric files and reports; defaults to the model kind.
    pub name: Option<String>,
    pub training: TrainingConfig,
    pub grid: Vec<f64>,
    pub concordance: ConcordanceKind,
    pub subset: Subset,
    pub sweep: SweepConfig,
    pub importance: ImportanceConfig,
    /// Model names `report` expects under the metrics directory.
    pub report_models: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            cohort: None,
            records: None,
            schema: None,
            event_spec: None,
            synthetic: SyntheticConfig::default(),
            split: [0.6, 0.2, 0.2],
            model: ModelChoice::default(),
            name: None,
            training: TrainingConfig::default(),
            grid: (0..=10).map(f64::from).collect(),
            concordance: ConcordanceKind::default(),
            subset: Subset::default(),
            sweep: SweepConfig::default(),
            importance: ImportanceConfig::default(),
            report_models: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }

    /// Copies the top-level seed into every component that takes one.
    pub fn propagate_seed(&mut self) {
        self.synthetic.seed = self.seed;
        self.training.seed = self.seed;
    }

    pub fn model_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.model.label().to_string())
    }

    /// SHA-256 of the serialized configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        self.training.validate().map_err(|e| UsageError(e.to_string()))?;
        if self.grid.windows(2).any(|w| w[0] > w[1]) || self.grid.iter().any(|t| !(*t >= 0.0)) {
            return Err(UsageError("grid must be ascending and non-negative".into()));
        }
        for p in [&self.cohort, &self.records, &self.schema].into_iter().flatten() {
            if !p.exists() {
                return Err(UsageError(format!("file not found: {}", p.display())));
            }
        }
        if self.records.is_some() != self.schema.is_some() {
            return Err(UsageError("records and schema must be given together".into()));
        }
        if self.records.is_some() && self.event_spec.is_none() {
            return Err(UsageError("records need an event_spec".into()));
        }
        Ok(())
    }
}

/// `"20,40,all"` style lists.
pub fn parse_list<T, F>(text: &str, mut item: F) -> Result<Vec<T>, UsageError>
where
    F: FnMut(&str) -> Result<T, UsageError>,
{
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(&mut item).collect()
}

pub fn parse_batch_size(s: &str) -> Result<Option<usize>, UsageError> {
    match s {
        "all" | "full" => Ok(None),
        n => n.parse().map(Some).map_err(|_| UsageError(format!("invalid batch size {n:?}"))),
    }
}

pub fn parse_number<T: std::str::FromStr>(s: &str) -> Result<T, UsageError> {
    s.parse().map_err(|_| UsageError(format!("invalid number {s:?}")))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_choice_json() {
        let c: ModelChoice = serde_json::from_str(r#"{"kind":"mlp","hidden":[8]}"#).unwrap();
        assert_eq!(c, ModelChoice::Cox(ModelKind::Mlp { hidden: vec![8] }));
        let p: ModelChoice = serde_json::from_str(r#"{"kind":"gompertz"}"#).unwrap();
        assert_eq!(p, ModelChoice::Parametric { kind: Family::Gompertz });
        assert!(serde_json::from_str::<ModelChoice>(r#"{"kind":"forest"}"#).is_err());
        assert_eq!(ModelChoice::parse("composite").unwrap().label(), "composite");
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: "elsewhere".into(), ..ExperimentConfig::default() };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 1, ..ExperimentConfig::default() };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"seed": 4, "training": {"epochs": 2}}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.training.epochs, 2);
        assert_eq!(c.training.batch_size, Some(40));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede": 4}"#).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("20, 40,all", parse_batch_size).unwrap(), vec![Some(20), Some(40), None]);
        assert!(parse_list("x", parse_batch_size).is_err());
        assert_eq!(parse_list("1,2", parse_number::<usize>).unwrap(), vec![1, 2]);
    }
}
