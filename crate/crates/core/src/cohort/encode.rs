use std::collections::BTreeMap;

use rand::seq::index;

use super::{Cohort, FeatureSchema, LongitudinalMatrix};
use crate::error::{Error, Result};
use crate::seed;

/// One raw measurement on a day relative to the start of the encoding window.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub day: usize,
    pub feature: String,
    pub value: f64,
}

/// Builds the `D x 2W` matrix for one patient.
///
/// Same-day measurements of a feature are averaged before rescaling to
/// `[0, 1]` with the schema range; out-of-range results are clamped.
pub fn encode_longitudinal(
    observations: &[Observation],
    schema: &FeatureSchema,
    days: usize,
) -> Result<LongitudinalMatrix> {
    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for obs in observations {
        let w = schema
            .longitudinal_index(&obs.feature)
            .ok_or_else(|| Error::Schema(format!("unknown feature {:?}", obs.feature)))?;
        if obs.day >= days {
            return Err(Error::InvalidInput(format!(
                "observation day {} outside [0, {days})",
                obs.day
            )));
        }
        if !obs.value.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value for {:?}", obs.feature)));
        }
        let e = sums.entry((obs.day, w)).or_insert((0.0, 0));
        e.0 += obs.value;
        e.1 += 1;
    }
    let mut m = LongitudinalMatrix::zeros(days, schema.width());
    for ((day, w), (sum, n)) in sums {
        let f = &schema.longitudinal[w];
        let mean = sum / n as f64;
        m.set_observed(day, w, (mean - f.min) / (f.max - f.min));
    }
    Ok(m)
}

/// Keeps at most `k` observed days, chosen uniformly at random from the
/// observed ones; the rest are zeroed. Identity when `k` or fewer days carry
/// any measurement.
pub fn truncate_observations(matrix: &LongitudinalMatrix, k: usize, seed: u64) -> LongitudinalMatrix {
    assert!(k >= 1, "k must be at least 1");
    let observed = matrix.observed_days();
    if observed.len() <= k {
        return matrix.clone();
    }
    let mut rng = seed::rng(seed);
    let mut keep = vec![false; observed.len()];
    for i in index::sample(&mut rng, observed.len(), k) {
        keep[i] = true;
    }
    let mut out = matrix.clone();
    for (&day, kept) in observed.iter().zip(keep) {
        if !kept {
            out.clear_day(day);
        }
    }
    out
}

/// Cohort copy with every matrix truncated to `k` observed days; patient
/// `j` uses stream `(seed, j)`.
pub fn truncate_cohort(cohort: &Cohort, k: usize, seed: u64) -> Result<Cohort> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let patients = cohort
        .patients()
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let mut q = p.clone();
            q.longitudinal = truncate_observations(&p.longitudinal, k, seed::derive(seed, &[j as u64]));
            q
        })
        .collect();
    cohort.with_patients(patients)
}
