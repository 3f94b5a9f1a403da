//! Weibull and Gompertz proportional-hazards regression,
//! `h(t | x) = h0(t) exp(beta . flat(x))`, fitted by censored maximum
//! likelihood.
//!
//! - Weibull: `h0(t) = (k / lambda) (t / lambda)^(k - 1)`, `H0(t) = (t / lambda)^k`
//! - Gompertz: `h0(t) = a exp(gamma t)`, `H0(t) = a (exp(gamma t) - 1) / gamma`
//!
//! Day-integer follow-up of 0 is moved to half a day before Weibull fitting,
//! since `log t` enters its likelihood.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::cox::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::model::{EncodedInput, InputShape, RiskScorer, SurvivalPredictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Weibull,
    Gompertz,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weibull" => Ok(Self::Weibull),
            "gompertz" => Ok(Self::Gompertz),
            _ => Err(Error::Config(format!("unknown parametric family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    pub family: Family,
    /// Weibull `k > 0`, or Gompertz `gamma` of any sign.
    pub shape: f64,
    /// Weibull scale `lambda`, or Gompertz `a`.
    pub rate: f64,
    pub coefficients: Vec<f64>,
    pub input: InputShape,
}

/// `(e^s - 1) / s`, by series near 0.
fn phi(s: f64) -> f64 {
    if s.abs() < 1e-2 {
        1.0 + s / 2.0 * (1.0 + s / 3.0 * (1.0 + s / 4.0 * (1.0 + s / 5.0)))
    } else {
        s.exp_m1() / s
    }
}

/// `int_0^1 u e^{s u} du = (e^s (s - 1) + 1) / s^2`, by series near 0.
fn psi(s: f64) -> f64 {
    if s.abs() < 0.5 {
        // sum_n s^n / (n! (n + 2))
        let (mut term, mut sum) = (1.0, 0.5);
        for n in 1..25 {
            term *= s / n as f64;
            sum += term / (n + 2) as f64;
        }
        sum
    } else {
        (s.exp() * (s - 1.0) + 1.0) / (s * s)
    }
}

impl ParametricModel {
    pub fn cumulative_baseline(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Weibull => (t / self.rate).powf(self.shape),
            Family::Gompertz => self.rate * t * phi(self.shape * t),
        }
    }

    pub fn baseline_hazard(&self, t: f64) -> f64 {
        match self.family {
            Family::Weibull => self.shape / self.rate * (t / self.rate).powf(self.shape - 1.0),
            Family::Gompertz => self.rate * (self.shape * t).exp(),
        }
    }

    pub fn linear_predictor(&self, input: &EncodedInput) -> Result<f64> {
        self.input.check(input)?;
        let x = input.flattened(&self.input.vocab_sizes);
        Ok(self.coefficients.iter().zip(&x).map(|(b, x)| b * x).sum())
    }
}

impl RiskScorer for ParametricModel {
    fn risk(&self, input: &EncodedInput) -> Result<f64> {
        self.linear_predictor(input)
    }
}

impl SurvivalPredictor for ParametricModel {
    fn survival(&self, input: &EncodedInput, t: f64) -> Result<f64> {
        parametric_survival(self, input, t)
    }
}

/// `exp(-H0(t) exp(beta . x))`.
pub fn parametric_survival(model: &ParametricModel, input: &EncodedInput, t: f64) -> Result<f64> {
    Ok((-model.cumulative_baseline(t) * model.linear_predictor(input)?.exp()).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once every gradient component of the mean log-likelihood is
    /// below this.
    pub tolerance: f64,
    /// Hold the Weibull `k` or Gompertz `gamma` at this value.
    pub fixed_shape: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { learning_rate: AdamConfig::default().learning_rate, max_iters: 20_000, tolerance: 1e-7, fixed_shape: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFit {
    pub model: ParametricModel,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub iterations: usize,
}

struct Data {
    t: Vec<f64>,
    event: Vec<bool>,
    x: Vec<Vec<f64>>,
}

/// Mean log-likelihood and its gradient in `(log k | log a, log lambda | gamma, beta)`.
fn log_likelihood(family: Family, theta: &[f64], data: &Data) -> (f64, Vec<f64>) {
    let n = data.t.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut ll = 0.0;
    for ((&t, &e), x) in data.t.iter().zip(&data.event).zip(&data.x) {
        let eta: f64 = theta[2..].iter().zip(x).map(|(b, x)| b * x).sum();
        let w = eta.exp();
        let (log_h0, h_cum, d0, d1);
        match family {
            Family::Weibull => {
                let (k, log_lambda) = (theta[0].exp(), theta[1]);
                let u = t.ln() - log_lambda;
                h_cum = (k * u).exp();
                log_h0 = theta[0] - log_lambda + (k - 1.0) * u;
                d0 = f64::from(u8::from(e)) * (1.0 + k * u) - w * h_cum * k * u;
                d1 = f64::from(u8::from(e)) * -k + w * h_cum * k;
            }
            Family::Gompertz => {
                let (a, gamma) = (theta[0].exp(), theta[1]);
                h_cum = a * t * phi(gamma * t);
                log_h0 = theta[0] + gamma * t;
                d0 = f64::from(u8::from(e)) - w * h_cum;
                d1 = f64::from(u8::from(e)) * t - w * a * t * t * psi(gamma * t);
            }
        }
        if e {
            ll += log_h0 + eta;
        }
        ll -= w * h_cum;
        grad[0] += d0;
        grad[1] += d1;
        let coef = f64::from(u8::from(e)) - w * h_cum;
        for (g, xv) in grad[2..].iter_mut().zip(x) {
            *g += coef * xv;
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    (ll / n, grad)
}

/// Fits with default options.
pub fn fit_parametric(cohort: &Cohort, family: Family) -> Result<ParametricModel> {
    Ok(fit_parametric_with(cohort, family, &FitOptions::default())?.model)
}

pub fn fit_parametric_with(cohort: &Cohort, family: Family, options: &FitOptions) -> Result<ParametricFit> {
    if cohort.n_events() == 0 {
        return Err(Error::EmptyLikelihood);
    }
    let times = cohort.times();
    if times.iter().all(|&t| t == times[0]) {
        return Err(Error::DegenerateFit("all follow-up times are identical".into()));
    }
    if let (Family::Weibull, Some(k)) = (family, options.fixed_shape) {
        if !(k > 0.0) {
            return Err(Error::Config(format!("Weibull shape must be positive, got {k}")));
        }
    }
    let input = InputShape::from_schema(cohort.schema(), cohort.event_spec().days());
    let data = Data {
        t: times
            .iter()
            .map(|&t| match (family, t) {
                (Family::Weibull, 0) => 0.5,
                _ => f64::from(t),
            })
            .collect(),
        event: cohort.events(),
        x: cohort.inputs().iter().map(|i| i.flattened(&input.vocab_sizes)).collect(),
    };
    let mean_t = data.t.iter().sum::<f64>() / data.t.len() as f64;
    let total_t: f64 = data.t.iter().sum();
    let mut theta = vec![0.0; 2 + input.flat_dim()];
    match family {
        Family::Weibull => {
            theta[0] = options.fixed_shape.map_or(0.0, f64::ln);
            theta[1] = mean_t.ln();
        }
        Family::Gompertz => {
            theta[0] = (cohort.n_events() as f64 / total_t).ln();
            theta[1] = options.fixed_shape.unwrap_or(0.0);
        }
    }
    let (initial, _) = log_likelihood(family, &theta, &data);
    let mut adam = Adam::new(AdamConfig { learning_rate: options.learning_rate, ..AdamConfig::default() }, theta.len());
    let mut iterations = 0;
    while iterations < options.max_iters {
        let (ll, mut grad) = log_likelihood(family, &theta, &data);
        if !ll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { step: iterations, message: format!("non-finite log-likelihood {ll}") });
        }
        if options.fixed_shape.is_some() {
            grad[usize::from(family == Family::Gompertz)] = 0.0;
        }
        if grad.iter().all(|g| g.abs() < options.tolerance) {
            break;
        }
        for g in &mut grad {
            *g = -*g;
        }
        adam.step(&mut theta, &grad);
        iterations += 1;
    }
    let (ll, _) = log_likelihood(family, &theta, &data);
    let (shape, rate) = match family {
        Family::Weibull => (theta[0].exp(), theta[1].exp()),
        Family::Gompertz => (theta[1], theta[0].exp()),
    };
    let model = ParametricModel { family, shape, rate, coefficients: theta[2..].to_vec(), input };
    Ok(ParametricFit { model, log_likelihood: ll * data.t.len() as f64, initial_log_likelihood: initial * data.t.len() as f64, iterations })
}
