use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::km::KaplanMeier;
use super::G_FLOOR;
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::model::SurvivalPredictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierCurve {
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
}

impl BrierCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,brier\n");
        for (t, s) in self.grid.iter().zip(&self.scores) {
            out.push_str(&format!("{t},{s}\n"));
        }
        out
    }
}

/// IPCW Brier score at horizon `t` given each patient's predicted
/// `S(t | x_j)`. Event patients before `t` are weighted by `1 / G(T_j-)`,
/// patients still at risk by `1 / G(t)`; patients censored before `t`
/// contribute nothing.
pub fn brier_score_from(times: &[u32], events: &[bool], survival_at_t: &[f64], t: f64, g: &KaplanMeier) -> f64 {
    let g_t = g.at(t).max(G_FLOOR);
    let total: f64 = times
        .iter()
        .zip(events)
        .zip(survival_at_t)
        .map(|((&tj, &ej), &s)| {
            let tj = f64::from(tj);
            if tj <= t && ej {
                s * s / g.before(tj).max(G_FLOOR)
            } else if tj > t {
                (1.0 - s) * (1.0 - s) / g_t
            } else {
                0.0
            }
        })
        .sum();
    total / times.len() as f64
}

fn check_horizon(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("horizon must be non-negative, got {t}")))
    }
}

pub fn brier_score<P: SurvivalPredictor + Sync + ?Sized>(model: &P, cohort: &Cohort, t: f64) -> Result<f64> {
    Ok(brier_curve(model, cohort, &[t])?.scores[0])
}

pub fn brier_curve<P: SurvivalPredictor + Sync + ?Sized>(model: &P, cohort: &Cohort, grid: &[f64]) -> Result<BrierCurve> {
    for &t in grid {
        check_horizon(t)?;
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("Brier grid must be ascending".into()));
    }
    let (times, events) = (cohort.times(), cohort.events());
    let g = KaplanMeier::censoring(&times, &events);
    let inputs = cohort.inputs();
    let scores = grid
        .iter()
        .map(|&t| {
            let s: Vec<f64> = inputs.par_iter().map(|x| model.survival(x, t)).collect::<Result<_>>()?;
            Ok(brier_score_from(&times, &events, &s, t, &g))
        })
        .collect::<Result<_>>()?;
    Ok(BrierCurve { grid: grid.to_vec(), scores })
}
