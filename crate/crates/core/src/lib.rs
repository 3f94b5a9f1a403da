//! Cox proportional-hazards machinery for right-censored longitudinal data.
//!
//! The crate is organised around the life cycle of a survival experiment:
//!
//! - [`cohort`]: patient records, the event pipeline that turns raw dated
//!   observations into `D x 2W` longitudinal matrices, stratified splitting
//!   and a synthetic proportional-hazards generator.
//! - [`model`]: differentiable risk functions `r(x)` (linear, feed-forward,
//!   and a recurrent composite model) with exact reverse-mode gradients.
//! - [`cox`]: Efron-tie partial likelihood and its gradient, stratified
//!   mini-batch training with Adam, Efron baseline hazard and survival
//!   prediction.
//! - [`parametric`]: Weibull and Gompertz proportional-hazards baselines.
//! - [`metrics`]: concordance error, IPCW time-dependent Brier score and
//!   permutation feature importance.
//!
//! Censoring is assumed non-informative: conditional on the features, the
//! censoring time carries no information about the event time.

pub mod cohort;
pub mod cox;
pub mod error;
pub mod metrics;
pub mod model;
pub mod parametric;
pub mod seed;

pub use cohort::{Cohort, EventSpec, FeatureSchema, LongitudinalMatrix, PatientRecord};
pub use cox::{BaselineHazardCurve, RiskSetIndex, TrainedCoxModel, TrainingConfig};
pub use error::{Error, Result};
pub use model::{EncodedInput, RiskModel, RiskModelSpec, RiskScorer, SurvivalPredictor};
pub use parametric::ParametricModel;
