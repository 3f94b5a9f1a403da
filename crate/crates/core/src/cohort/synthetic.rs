//! Synthetic proportional-hazards cohorts with known ground truth.
//!
//! Day-0 feature values are uniform on `[0, 1]`; event times are exponential
//! with rate `h0 * exp(r*)`; censoring times are independent uniforms, so
//! censoring is non-informative by construction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    BaselineRule, Cohort, EventSpec, FeatureSchema, LongitudinalFeature, LongitudinalMatrix,
    PatientRecord, TimeFixedFeature,
};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearRisk {
    #[default]
    None,
    /// `r* = s * (2 x0 - 1)(2 x1 - 1)`: an interaction no linear score can rank.
    ProductOfFirstTwo,
    /// `r* = s * sin(2 pi x0)`.
    SineOfFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_patients: usize,
    pub seed: u64,
    /// One coefficient per longitudinal feature, applied to day-0 values.
    pub true_linear_coefficients: Vec<f64>,
    pub nonlinear_risk: NonlinearRisk,
    /// Scale `s` of the nonlinear risk.
    pub nonlinear_strength: f64,
    /// Target fraction of censored patients, hit within +-0.05.
    pub censoring_rate: f64,
    /// Event times are rounded up to multiples of this many days.
    pub tie_granularity: u32,
    pub cutoff_days: u32,
    /// Levels of an optional uninformative time-fixed feature (0 = none).
    pub noise_time_fixed_levels: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_patients: 200,
            seed: 0,
            true_linear_coefficients: vec![1.0, -0.5],
            nonlinear_risk: NonlinearRisk::None,
            nonlinear_strength: 3.0,
            censoring_rate: 0.3,
            tie_granularity: 1,
            cutoff_days: 10,
            noise_time_fixed_levels: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 2 {
            return Err(Error::Config("n_patients must be at least 2".into()));
        }
        if !(self.censoring_rate > 0.0 && self.censoring_rate < 1.0) {
            return Err(Error::Config("censoring_rate must lie in (0, 1)".into()));
        }
        if self.tie_granularity < 1 || self.tie_granularity > self.cutoff_days {
            return Err(Error::Config("tie_granularity must lie in [1, cutoff_days]".into()));
        }
        let needed = match self.nonlinear_risk {
            NonlinearRisk::None => 0,
            NonlinearRisk::SineOfFirst => 1,
            NonlinearRisk::ProductOfFirstTwo => 2,
        };
        if self.true_linear_coefficients.len() < needed.max(1) {
            return Err(Error::Config(format!(
                "need at least {} longitudinal features",
                needed.max(1)
            )));
        }
        if self.true_linear_coefficients.iter().any(|b| !b.is_finite()) || !self.nonlinear_strength.is_finite() {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn true_risk(&self, x: &[f64]) -> f64 {
        match self.nonlinear_risk {
            NonlinearRisk::None => self.true_linear_coefficients.iter().zip(x).map(|(b, v)| b * v).sum(),
            NonlinearRisk::ProductOfFirstTwo => {
                self.nonlinear_strength * (2.0 * x[0] - 1.0) * (2.0 * x[1] - 1.0)
            }
            NonlinearRisk::SineOfFirst => {
                self.nonlinear_strength * (2.0 * std::f64::consts::PI * x[0]).sin()
            }
        }
    }
}

/// A generated cohort together with the quantities it was generated from.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// `r*` per patient, aligned with `cohort.patients()`.
    pub true_risks: Vec<f64>,
    /// Baseline hazard rate `h0` of the exponential event times.
    pub baseline_rate: f64,
    /// Upper end of the uniform censoring distribution.
    pub censoring_horizon: f64,
    pub realized_censoring_rate: f64,
}

pub fn generate_synthetic_cohort(config: &SyntheticConfig) -> Result<Cohort> {
    generate_synthetic(config).map(|s| s.cohort)
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticCohort> {
    config.validate()?;
    let n = config.n_patients;
    let width = config.true_linear_coefficients.len();
    let cutoff = f64::from(config.cutoff_days);
    let g = config.tie_granularity;
    let mut rng = seed::rng(config.seed);

    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..width).map(|_| rng.gen::<f64>()).collect()).collect();
    let groups: Vec<usize> = (0..n)
        .map(|_| if config.noise_time_fixed_levels > 0 { rng.gen_range(0..config.noise_time_fixed_levels) } else { 0 })
        .collect();
    let true_risks: Vec<f64> = features.iter().map(|x| config.true_risk(x)).collect();
    let rel_hazard: Vec<f64> = true_risks.iter().map(|r| r.exp()).collect();

    // h0 such that half the cohort would have an event by cutoff / 2.
    let frac_by_half = |log_h0: f64| {
        let h0 = log_h0.exp();
        rel_hazard.iter().map(|e| 1.0 - (-h0 * e * cutoff / 2.0).exp()).sum::<f64>() / n as f64
    };
    let log_h0 = bisect(-30.0, 30.0, |l| frac_by_half(l) - 0.5);
    let h0 = log_h0.exp();

    let event_times: Vec<f64> = rel_hazard.iter().map(|e| -(1.0 - rng.gen::<f64>()).ln() / (h0 * e)).collect();
    let censor_draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();

    let last_day = (config.cutoff_days / g) * g;
    let discretize = |horizon: f64| -> Vec<(u32, bool)> {
        event_times
            .iter()
            .zip(&censor_draws)
            .map(|(&t, &u)| {
                let c = horizon * u;
                let rounded = (t / f64::from(g)).ceil().max(1.0) * f64::from(g);
                if t <= c && rounded <= f64::from(last_day) {
                    (rounded as u32, true)
                } else {
                    let seen = t.min(c).min(f64::from(last_day));
                    (((seen / f64::from(g)).floor() as u32) * g, false)
                }
            })
            .collect()
    };
    let censored_fraction =
        |outcomes: &[(u32, bool)]| outcomes.iter().filter(|(_, e)| !e).count() as f64 / n as f64;

    // Censoring fraction decreases in the horizon; search on its log.
    let log_horizon = bisect(-10.0, 20.0, |l| config.censoring_rate - censored_fraction(&discretize(l.exp())));
    let horizon = log_horizon.exp();
    let outcomes = discretize(horizon);
    let realized = censored_fraction(&outcomes);
    if (realized - config.censoring_rate).abs() > 0.05 {
        return Err(Error::Config(format!(
            "cannot reach censoring rate {:.3}: administrative censoring alone gives {:.3}, achieved {:.3}",
            config.censoring_rate,
            censored_fraction(&discretize(f64::INFINITY)),
            realized
        )));
    }

    let schema = FeatureSchema::new(
        (0..width).map(|w| LongitudinalFeature { name: format!("x{w}"), min: 0.0, max: 1.0 }).collect(),
        if config.noise_time_fixed_levels > 0 {
            vec![TimeFixedFeature {
                name: "group".into(),
                levels: (0..config.noise_time_fixed_levels).map(|l| format!("g{l}")).collect(),
            }]
        } else {
            vec![]
        },
    )?;
    let event_spec = EventSpec {
        event_name: "synthetic".into(),
        baseline_rule: BaselineRule::FirstRecord,
        start_offset_days: 0,
        cutoff_days: config.cutoff_days,
        filter_require_observation: false,
    };
    let patients = features
        .iter()
        .zip(&outcomes)
        .zip(&groups)
        .enumerate()
        .map(|(i, ((x, &(time, event)), &group))| {
            let mut m = LongitudinalMatrix::zeros(config.cutoff_days as usize, width);
            for (w, &v) in x.iter().enumerate() {
                m.set_observed(0, w, v);
            }
            PatientRecord {
                id: format!("syn{i:05}"),
                followup_time: time,
                event,
                time_fixed: if config.noise_time_fixed_levels > 0 { vec![group] } else { vec![] },
                longitudinal: m,
            }
        })
        .collect();
    let cohort = Cohort::new(schema, event_spec, patients)?;
    Ok(SyntheticCohort {
        cohort,
        true_risks,
        baseline_rate: h0,
        censoring_horizon: horizon,
        realized_censoring_rate: realized,
    })
}

/// Root of a non-decreasing function on `[lo, hi]` by bisection; returns the
/// nearer endpoint when there is no sign change.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if f(lo) >= 0.0 {
        return lo;
    }
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
