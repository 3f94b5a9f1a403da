use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::concordance::concordance_error;
use crate::cohort::{Cohort, FeatureSchema};
use crate::error::{Error, Result};
use crate::model::{score_all, RiskScorer};
use crate::seed;

/// A longitudinal feature (every day of it) or a time-fixed feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum FeatureSelector {
    Longitudinal(usize),
    TimeFixed(usize),
}

impl FeatureSelector {
    /// Resolves a feature name, longitudinal names first.
    pub fn by_name(schema: &FeatureSchema, name: &str) -> Result<Self> {
        if let Some(i) = schema.longitudinal_index(name) {
            Ok(Self::Longitudinal(i))
        } else if let Some(i) = schema.time_fixed_index(name) {
            Ok(Self::TimeFixed(i))
        } else {
            Err(Error::Schema(format!("unknown feature {name:?}")))
        }
    }

    pub fn name<'a>(&self, schema: &'a FeatureSchema) -> &'a str {
        match *self {
            Self::Longitudinal(i) => &schema.longitudinal[i].name,
            Self::TimeFixed(i) => &schema.time_fixed[i].name,
        }
    }

    pub fn all(schema: &FeatureSchema) -> Vec<Self> {
        (0..schema.longitudinal.len())
            .map(Self::Longitudinal)
            .chain((0..schema.time_fixed.len()).map(Self::TimeFixed))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Concordance-error increase for each repeat.
    pub increases: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single repeat.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_error: f64,
    pub repeats: usize,
    pub seed: u64,
    pub features: Vec<FeatureImportance>,
}

/// Copy of the cohort with `feature` taken from patient `perm[j]` for each `j`.
pub fn permute_feature(cohort: &Cohort, feature: &FeatureSelector, perm: &[usize]) -> Result<Cohort> {
    let src = cohort.patients();
    if perm.len() != src.len() {
        return Err(Error::Shape { expected: src.len(), actual: perm.len() });
    }
    let patients = src
        .iter()
        .zip(perm)
        .map(|(p, &k)| {
            let mut q = p.clone();
            match *feature {
                FeatureSelector::Longitudinal(w) => q.longitudinal.copy_feature_from(&src[k].longitudinal, w),
                FeatureSelector::TimeFixed(f) => q.time_fixed[f] = src[k].time_fixed[f],
            }
            q
        })
        .collect();
    cohort.with_patients(patients)
}

fn check_feature(schema: &FeatureSchema, feature: &FeatureSelector) -> Result<()> {
    let ok = match *feature {
        FeatureSelector::Longitudinal(w) => w < schema.longitudinal.len(),
        FeatureSelector::TimeFixed(f) => f < schema.time_fixed.len(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Schema(format!("feature {feature:?} not in schema")))
    }
}

fn summarize(feature: String, increases: Vec<f64>) -> FeatureImportance {
    let n = increases.len() as f64;
    let mean = increases.iter().sum::<f64>() / n;
    let std = if increases.len() > 1 {
        (increases.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    FeatureImportance { feature, increases, mean, std }
}

/// Importance with caller-chosen permutations, one per repeat.
pub fn permutation_importance_with<S, F>(
    scorer: &S,
    cohort: &Cohort,
    feature: &FeatureSelector,
    repeats: usize,
    mut permutation: F,
) -> Result<FeatureImportance>
where
    S: RiskScorer + Sync + ?Sized,
    F: FnMut(usize) -> Vec<usize>,
{
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    check_feature(cohort.schema(), feature)?;
    let (times, events) = (cohort.times(), cohort.events());
    let base = concordance_error(&times, &events, &score_all(scorer, &cohort.inputs())?)?.error;
    let mut increases = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let permuted = permute_feature(cohort, feature, &permutation(r))?;
        let err = concordance_error(&times, &events, &score_all(scorer, &permuted.inputs())?)?.error;
        increases.push(err - base);
    }
    Ok(summarize(feature.name(cohort.schema()).to_string(), increases))
}

/// Seeded random permutations; repeat `r` of feature `f` uses stream
/// `(seed, f, r)`.
pub fn permutation_importance<S: RiskScorer + Sync + ?Sized>(
    scorer: &S,
    cohort: &Cohort,
    features: &[FeatureSelector],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    let (times, events) = (cohort.times(), cohort.events());
    let baseline_error = concordance_error(&times, &events, &score_all(scorer, &cohort.inputs())?)?.error;
    let features = features
        .iter()
        .enumerate()
        .map(|(f, sel)| {
            permutation_importance_with(scorer, cohort, sel, repeats, |r| {
                let mut perm: Vec<usize> = (0..cohort.len()).collect();
                perm.shuffle(&mut seed::rng(seed::derive(seed, &[f as u64, r as u64])));
                perm
            })
        })
        .collect::<Result<_>>()?;
    Ok(ImportanceReport { baseline_error, repeats, seed, features })
}
