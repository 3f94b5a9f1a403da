use rand::seq::SliceRandom;

use super::Cohort;
use crate::error::{Error, Result};
use crate::seed;

/// Apportions `n` items to `ratios` by largest remainder. Ties in the
/// fractional part go to the earlier share.
pub fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let total: f64 = ratios.iter().sum();
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    // Guard against 0.6 * 10 = 5.999... style representation error.
    let mut sizes: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    // Quantised so that remainders equal up to rounding noise tie exactly.
    let frac = |i: usize| ((exact[i] - sizes[i] as f64) * 1e9).round() as i64;
    order.sort_by(|&a, &b| frac(b).cmp(&frac(a)).then(a.cmp(&b)));
    let assigned: usize = sizes.iter().sum();
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Index form of [`stratified_split`]: each returned vector is sorted.
pub fn stratified_split_indices(cohort: &Cohort, ratios: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let mut rng = seed::rng(seed);
    let mut splits: [Vec<usize>; 3] = Default::default();
    for (label, want_event) in [("event", true), ("censored", false)] {
        let mut stratum: Vec<usize> = cohort
            .patients()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.event == want_event)
            .map(|(i, _)| i)
            .collect();
        stratum.shuffle(&mut rng);
        let sizes = largest_remainder(stratum.len(), &ratios);
        let mut rest = stratum.as_slice();
        for (k, &size) in sizes.iter().enumerate() {
            if size == 0 {
                return Err(Error::Stratification(format!(
                    "split {k} would receive no {label} patients ({} available)",
                    stratum.len()
                )));
            }
            let (head, tail) = rest.split_at(size);
            splits[k].extend_from_slice(head);
            rest = tail;
        }
    }
    for s in &mut splits {
        s.sort_unstable();
    }
    Ok(splits)
}

/// Partitions the cohort into train/validation/test sets that keep the
/// event-to-censored ratio: each stratum is shuffled and cut independently.
pub fn stratified_split(cohort: &Cohort, ratios: [f64; 3], seed: u64) -> Result<(Cohort, Cohort, Cohort)> {
    let [a, b, c] = stratified_split_indices(cohort, ratios, seed)?;
    Ok((cohort.subset(&a)?, cohort.subset(&b)?, cohort.subset(&c)?))
}
