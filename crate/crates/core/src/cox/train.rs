use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::baseline::{estimate_baseline_hazard, BaselineHazardCurve};
use super::efron::efron_nll_and_gradient;
use super::sampler::StratifiedSampler;
use super::RiskSetIndex;
use crate::cohort::{truncate_cohort, truncate_observations, Cohort, LongitudinalMatrix};
use crate::error::{Error, Result};
use crate::metrics::concordance_error;
use crate::model::{score_all, EncodedInput, RiskModel, RiskModelSpec, RiskScorer, SurvivalPredictor};
use crate::seed;

/// Which epoch's parameters the trained model keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    BestValidation,
    LastEpoch,
}

/// Which patients the baseline hazard is estimated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSource {
    #[default]
    FullTraining,
    /// The minibatch of the selected epoch with the lowest concordance error.
    BestMinibatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// `None` trains on the whole cohort at every step.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches_per_epoch: usize,
    /// Observed days kept per patient per epoch; `None` keeps all.
    pub k_max_observations: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub selection: Selection,
    pub baseline_source: BaselineSource,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: Some(40),
            learning_rate: adam.learning_rate,
            epochs: 30,
            minibatches_per_epoch: 20,
            k_max_observations: Some(4),
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            selection: Selection::default(),
            baseline_source: BaselineSource::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(b) = self.batch_size {
            if b < 2 {
                return bad(format!("batch_size must be at least 2, got {b}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("adam epsilon must be positive".into());
        }
        if self.minibatches_per_epoch == 0 {
            return bad("minibatches_per_epoch must be at least 1".into());
        }
        if self.k_max_observations == Some(0) {
            return bad("k_max_observations must be at least 1".into());
        }
        Ok(())
    }

    /// Seed of the fixed k-truncation applied to evaluation cohorts.
    pub fn evaluation_seed(&self) -> u64 {
        seed::derive(self.seed, &[EVALUATION_STREAM])
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean minibatch negative log partial likelihood.
    pub train_nll: f64,
    pub val_concordance_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Bundle", into = "Bundle")]
pub struct TrainedCoxModel {
    pub risk_model: RiskModel,
    pub baseline: BaselineHazardCurve,
    pub training_log: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept; `None` without training.
    pub selected_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    spec: RiskModelSpec,
    params: Vec<f64>,
    baseline: BaselineHazardCurve,
    training_log: Vec<EpochLog>,
    selected_epoch: Option<usize>,
}

impl From<TrainedCoxModel> for Bundle {
    fn from(m: TrainedCoxModel) -> Self {
        Bundle {
            spec: m.risk_model.spec,
            params: m.risk_model.params.values,
            baseline: m.baseline,
            training_log: m.training_log,
            selected_epoch: m.selected_epoch,
        }
    }
}

impl TryFrom<Bundle> for TrainedCoxModel {
    type Error = Error;

    fn try_from(b: Bundle) -> Result<Self> {
        let layout = b.spec.layout();
        let params = crate::model::ParamVector::new(b.params, layout)?;
        Ok(Self {
            risk_model: RiskModel::new(b.spec, params)?,
            baseline: b.baseline,
            training_log: b.training_log,
            selected_epoch: b.selected_epoch,
        })
    }
}

impl TrainedCoxModel {
    pub fn predict_survival(&self, input: &EncodedInput, t: f64) -> Result<f64> {
        Ok(self.baseline.survival(t, self.risk_model.forward(input)?))
    }

    /// `epoch,train_nll,val_concordance_error` rows with a header.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,train_nll,val_concordance_error\n");
        for e in &self.training_log {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_nll, e.val_concordance_error));
        }
        out
    }
}

impl RiskScorer for TrainedCoxModel {
    fn risk(&self, input: &EncodedInput) -> Result<f64> {
        self.risk_model.forward(input)
    }
}

impl SurvivalPredictor for TrainedCoxModel {
    fn survival(&self, input: &EncodedInput, t: f64) -> Result<f64> {
        self.predict_survival(input, t)
    }
}

const TRUNCATION_STREAM: u64 = 1;
const SAMPLING_STREAM: u64 = 2;
const EVALUATION_STREAM: u64 = 3;
/// Patients per gradient-accumulation chunk. Fixed so the summation order
/// does not depend on the thread count.
const CHUNK: usize = 16;

/// Batch-restricted NLL and its gradient with respect to the parameters.
fn batch_gradient(
    model: &RiskModel,
    params: &[f64],
    inputs: &[EncodedInput],
    times: &[u32],
    events: &[bool],
    batch: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let risks: Vec<f64> = batch.par_iter().map(|&j| model.forward_with(params, &inputs[j])).collect::<Result<_>>()?;
    let bt: Vec<u32> = batch.iter().map(|&j| times[j]).collect();
    let be: Vec<bool> = batch.iter().map(|&j| events[j]).collect();
    let index = RiskSetIndex::new(&bt, &be)?;
    let (nll, dr) = efron_nll_and_gradient(&risks, &index)?;
    let partials: Vec<Vec<f64>> = batch
        .par_chunks(CHUNK)
        .zip(dr.par_chunks(CHUNK))
        .map(|(js, gs)| {
            let mut acc = vec![0.0; params.len()];
            for (&j, &g) in js.iter().zip(gs) {
                model.backward_into(params, &inputs[j], g, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; params.len()];
    for p in partials {
        for (a, b) in grad.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok((nll, grad))
}

fn with_params(model: &RiskModel, params: &[f64]) -> RiskModel {
    let mut m = model.clone();
    m.params.values.copy_from_slice(params);
    m
}

/// Minimizes the batch-restricted Efron NLL with Adam, keeping the epoch
/// with the lowest validation concordance error, then estimates the
/// baseline hazard with the kept parameters.
///
/// Training matrices are re-truncated to `k` observed days every epoch;
/// validation and baseline cohorts get one fixed truncation seeded by
/// [`TrainingConfig::evaluation_seed`].
pub fn train(model: RiskModel, train: &Cohort, val: &Cohort, config: &TrainingConfig) -> Result<TrainedCoxModel> {
    config.validate()?;
    if train.schema() != val.schema() {
        return Err(Error::Schema("training and validation schemas differ".into()));
    }
    let times = train.times();
    let events = train.events();
    let sampler = match config.batch_size {
        Some(b) => Some(StratifiedSampler::new(&events, b)?),
        None => None,
    };
    let full_batch: Vec<usize> = (0..train.len()).collect();
    let val = match config.k_max_observations {
        Some(k) => truncate_cohort(val, k, config.evaluation_seed())?,
        None => val.clone(),
    };
    let val_inputs = val.inputs();
    let (val_times, val_events) = (val.times(), val.events());

    let mut params = model.params.values.clone();
    let mut adam = Adam::new(config.adam(), params.len());
    let mut sample_rng = seed::rng(seed::derive(config.seed, &[SAMPLING_STREAM]));
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>, Vec<Vec<usize>>)> = None;

    for epoch in 0..config.epochs {
        let truncated: Vec<LongitudinalMatrix> = match config.k_max_observations {
            Some(k) => train
                .patients()
                .par_iter()
                .enumerate()
                .map(|(j, p)| {
                    truncate_observations(
                        &p.longitudinal,
                        k,
                        seed::derive(config.seed, &[TRUNCATION_STREAM, epoch as u64, j as u64]),
                    )
                })
                .collect(),
            None => train.patients().iter().map(|p| p.longitudinal.clone()).collect(),
        };
        let inputs: Vec<EncodedInput> = truncated
            .iter()
            .zip(train.patients())
            .map(|(m, p)| EncodedInput { longitudinal: m, time_fixed: &p.time_fixed })
            .collect();

        let mut batches = Vec::with_capacity(config.minibatches_per_epoch);
        let mut loss_sum = 0.0;
        for step in 0..config.minibatches_per_epoch {
            let global_step = epoch * config.minibatches_per_epoch + step;
            let batch = match &sampler {
                Some(s) => s.sample(&mut sample_rng),
                None => full_batch.clone(),
            };
            let fail = |message: String| Error::Training { step: global_step, message };
            let (nll, grad) = batch_gradient(&model, &params, &inputs, &times, &events, &batch)
                .map_err(|e| fail(e.to_string()))?;
            if !nll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(fail(format!("non-finite loss or gradient (loss {nll})")));
            }
            adam.step(&mut params, &grad);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(fail("parameters diverged".into()));
            }
            loss_sum += nll;
            batches.push(batch);
        }

        let current = with_params(&model, &params);
        let val_risks = score_all(&current, &val_inputs)?;
        let val_error = concordance_error(&val_times, &val_events, &val_risks)?.error;
        log.push(EpochLog {
            epoch: epoch + 1,
            train_nll: loss_sum / config.minibatches_per_epoch as f64,
            val_concordance_error: val_error,
        });
        let keep = match config.selection {
            Selection::BestValidation => best.as_ref().is_none_or(|b| val_error < b.0),
            Selection::LastEpoch => true,
        };
        if keep {
            best = Some((val_error, epoch + 1, params.clone(), batches));
        }
    }

    let (selected_epoch, final_params, best_batches) = match best {
        Some((_, e, p, b)) => (Some(e), p, b),
        None => (None, params, Vec::new()),
    };
    let risk_model = with_params(&model, &final_params);
    let train = match config.k_max_observations {
        Some(k) => truncate_cohort(train, k, config.evaluation_seed())?,
        None => train.clone(),
    };
    let baseline = match config.baseline_source {
        BaselineSource::BestMinibatch if !best_batches.is_empty() => {
            best_minibatch_baseline(&risk_model, &train, &best_batches)?
        }
        _ => {
            let risks = score_all(&risk_model, &train.inputs())?;
            estimate_baseline_hazard(&risks, &RiskSetIndex::new(&times, &events)?)?
        }
    };
    Ok(TrainedCoxModel { risk_model, baseline, training_log: log, selected_epoch })
}

fn best_minibatch_baseline(model: &RiskModel, train: &Cohort, batches: &[Vec<usize>]) -> Result<BaselineHazardCurve> {
    let inputs = train.inputs();
    let (times, events) = (train.times(), train.events());
    let mut best: Option<(f64, Vec<f64>, Vec<u32>, Vec<bool>)> = None;
    for batch in batches {
        let bi: Vec<EncodedInput> = batch.iter().map(|&j| inputs[j]).collect();
        let risks = score_all(model, &bi)?;
        let bt: Vec<u32> = batch.iter().map(|&j| times[j]).collect();
        let be: Vec<bool> = batch.iter().map(|&j| events[j]).collect();
        let Ok(c) = concordance_error(&bt, &be, &risks) else { continue };
        if best.as_ref().is_none_or(|b| c.error < b.0) {
            best = Some((c.error, risks, bt, be));
        }
    }
    let (_, risks, bt, be) = best.ok_or_else(|| Error::UndefinedMetric("no minibatch has a comparable pair".into()))?;
    estimate_baseline_hazard(&risks, &RiskSetIndex::new(&bt, &be)?)
}
