//! Cox proportional-hazards engine: risk sets, the Efron partial likelihood,
//! minibatch training and the baseline hazard.

mod adam;
mod baseline;
mod efron;
mod index;
mod sampler;
mod train;

pub use adam::{Adam, AdamConfig};
pub use baseline::{calibration_totals, estimate_baseline_hazard, BaselineHazardCurve, HazardStep};
pub use efron::{efron_nll, efron_nll_and_gradient, efron_nll_gradient};
pub use index::RiskSetIndex;
pub use sampler::{batch_counts, StratifiedSampler};
pub use train::{train, BaselineSource, EpochLog, Selection, TrainedCoxModel, TrainingConfig};
