use serde::{Deserialize, Serialize};

use super::km::KaplanMeier;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub error: f64,
    pub comparable_pairs: u64,
    pub concordant: u64,
    pub discordant: u64,
    pub risk_ties: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcordanceKind {
    /// Plain pairwise estimator.
    #[default]
    Harrell,
    /// Pairs weighted by `1 / G(T_i-)^2`, `G` the censoring survival curve.
    Uno,
}

fn check(times: &[u32], events: &[bool], risks: &[f64]) -> Result<()> {
    if times.len() != events.len() || times.len() != risks.len() {
        return Err(Error::Shape { expected: times.len(), actual: risks.len().min(events.len()) });
    }
    if risks.iter().any(|r| r.is_nan()) {
        return Err(Error::Numeric("risk is NaN".into()));
    }
    Ok(())
}

/// Fraction of comparable pairs whose risk order contradicts their event
/// order. `(i, j)` is comparable when `T_i < T_j` and `i` had the event;
/// equal risks count one half.
pub fn concordance_error(times: &[u32], events: &[bool], risks: &[f64]) -> Result<ConcordanceResult> {
    check(times, events, risks)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&j| times[j]);
    let (mut concordant, mut discordant, mut risk_ties) = (0u64, 0u64, 0u64);
    for (pos, &i) in order.iter().enumerate() {
        if !events[i] {
            continue;
        }
        let later = order[pos..].partition_point(|&j| times[j] <= times[i]);
        for &j in &order[pos + later..] {
            match risks[i].partial_cmp(&risks[j]).unwrap() {
                std::cmp::Ordering::Greater => concordant += 1,
                std::cmp::Ordering::Less => discordant += 1,
                std::cmp::Ordering::Equal => risk_ties += 1,
            }
        }
    }
    let comparable_pairs = concordant + discordant + risk_ties;
    if comparable_pairs == 0 {
        return Err(Error::UndefinedMetric("no comparable pairs".into()));
    }
    let error = (discordant as f64 + 0.5 * risk_ties as f64) / comparable_pairs as f64;
    Ok(ConcordanceResult { error, comparable_pairs, concordant, discordant, risk_ties })
}

/// Inverse-probability-of-censoring weighted concordance error, with `G`
/// estimated on the same patients and floored at `1e-4`.
pub fn uno_concordance_error(times: &[u32], events: &[bool], risks: &[f64]) -> Result<f64> {
    check(times, events, risks)?;
    let g = KaplanMeier::censoring(times, events);
    let (mut wrong, mut total) = (0.0, 0.0);
    for i in (0..times.len()).filter(|&i| events[i]) {
        let w = g.before(f64::from(times[i])).max(super::G_FLOOR).powi(-2);
        for j in (0..times.len()).filter(|&j| times[i] < times[j]) {
            total += w;
            if risks[i] < risks[j] {
                wrong += w;
            } else if risks[i] == risks[j] {
                wrong += 0.5 * w;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::UndefinedMetric("no comparable pairs".into()));
    }
    Ok(wrong / total)
}

pub fn concordance_error_of(kind: ConcordanceKind, times: &[u32], events: &[bool], risks: &[f64]) -> Result<f64> {
    match kind {
        ConcordanceKind::Harrell => Ok(concordance_error(times, events, risks)?.error),
        ConcordanceKind::Uno => uno_concordance_error(times, events, risks),
    }
}
