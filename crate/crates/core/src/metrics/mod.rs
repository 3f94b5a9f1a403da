//! Evaluation metrics for right-censored predictions.

mod brier;
mod concordance;
mod importance;
mod km;

pub use brier::{brier_curve, brier_score, brier_score_from, BrierCurve};
pub use concordance::{
    concordance_error, concordance_error_of, uno_concordance_error, ConcordanceKind, ConcordanceResult,
};
pub use importance::{
    permutation_importance, permutation_importance_with, permute_feature, FeatureImportance, FeatureSelector,
    ImportanceReport,
};
pub use km::KaplanMeier;

/// Lower bound applied to the censoring survival curve before inverting it.
pub const G_FLOOR: f64 = 1e-4;
