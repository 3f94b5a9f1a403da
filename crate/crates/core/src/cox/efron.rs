//! Efron-corrected negative log partial likelihood and its gradient with
//! respect to the per-patient risks.
//!
//! Exponentials are taken relative to the largest risk in each risk set, so
//! the tie-adjusted denominators `S_i - (w/d_i) U_i` are formed in the
//! shifted domain and never overflow.

use super::RiskSetIndex;
use crate::error::{Error, Result};

/// Per-event-time quantities, all relative to the shift `m`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EventTerm {
    pub m: f64,
    pub d: usize,
    /// `sum_w ln(S' - (w/d) U')`
    pub log_denoms: f64,
    /// `sum_w 1 / (S' - (w/d) U')`
    pub a: f64,
    /// `sum_w (w/d) / (S' - (w/d) U')`
    pub b: f64,
    pub r_sum: f64,
}

pub(crate) fn check_risks(risks: &[f64], index: &RiskSetIndex) -> Result<()> {
    if risks.len() != index.n_patients() {
        return Err(Error::Shape { expected: index.n_patients(), actual: risks.len() });
    }
    if let Some(j) = risks.iter().position(|r| !r.is_finite()) {
        return Err(Error::Numeric(format!("risk of patient {j} is {}", risks[j])));
    }
    Ok(())
}

pub(crate) fn event_terms(risks: &[f64], index: &RiskSetIndex) -> Result<Vec<EventTerm>> {
    check_risks(risks, index)?;
    let n_times = index.event_times().len();
    let order = index.by_time_desc();
    let mut terms = Vec::with_capacity(n_times);
    let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
    let mut added = 0;
    for i in (0..n_times).rev() {
        for &j in &order[added..index.at_risk_len(i)] {
            let r = risks[j];
            if r > max {
                sum = sum * (max - r).exp() + 1.0;
                max = r;
            } else {
                sum += (r - max).exp();
            }
        }
        added = index.at_risk_len(i);
        let tied = index.tied(i);
        let d = tied.len();
        let u: f64 = tied.iter().map(|&j| (risks[j] - max).exp()).sum();
        let r_sum: f64 = tied.iter().map(|&j| risks[j]).sum();
        let (mut log_denoms, mut a, mut b) = (0.0, 0.0, 0.0);
        for w in 0..d {
            let frac = w as f64 / d as f64;
            let denom = sum - frac * u;
            assert!(denom > 0.0, "tie-adjusted risk-set sum must be positive");
            log_denoms += denom.ln();
            a += 1.0 / denom;
            b += frac / denom;
        }
        terms.push(EventTerm { m: max, d, log_denoms, a, b, r_sum });
    }
    terms.reverse();
    Ok(terms)
}

fn nll_from_terms(terms: &[EventTerm]) -> f64 {
    terms.iter().map(|t| t.log_denoms + t.d as f64 * t.m - t.r_sum).sum()
}

/// Negative Efron log partial likelihood.
pub fn efron_nll(risks: &[f64], index: &RiskSetIndex) -> Result<f64> {
    Ok(nll_from_terms(&event_terms(risks, index)?))
}

/// `d efron_nll / d r_j` for every patient.
pub fn efron_nll_gradient(risks: &[f64], index: &RiskSetIndex) -> Result<Vec<f64>> {
    Ok(efron_nll_and_gradient(risks, index)?.1)
}

pub fn efron_nll_and_gradient(risks: &[f64], index: &RiskSetIndex) -> Result<(f64, Vec<f64>)> {
    let terms = event_terms(risks, index)?;
    // ln sum_{i' <= i} e^{-m_i'} a_i', accumulated in ascending time.
    let mut log_cum = Vec::with_capacity(terms.len());
    let mut acc = f64::NEG_INFINITY;
    for t in &terms {
        let x = t.a.ln() - t.m;
        acc = if acc == f64::NEG_INFINITY { x } else { log_add_exp(acc, x) };
        log_cum.push(acc);
    }
    let times = index.times();
    let mut grad: Vec<f64> = risks
        .iter()
        .zip(times)
        .map(|(&r, &t)| match index.n_event_times_upto(t) {
            0 => 0.0,
            k => (r + log_cum[k - 1]).exp(),
        })
        .collect();
    for (i, t) in terms.iter().enumerate() {
        for &j in index.tied(i) {
            grad[j] -= 1.0 + (risks[j] - t.m).exp() * t.b;
        }
    }
    Ok((nll_from_terms(&terms), grad))
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Direct evaluation without index or shifting.
    pub fn nll(times: &[u32], events: &[bool], risks: &[f64]) -> f64 {
        let mut ts: Vec<u32> = times.iter().zip(events).filter(|p| *p.1).map(|p| *p.0).collect();
        ts.sort_unstable();
        ts.dedup();
        let mut total = 0.0;
        for t in ts {
            let k: Vec<usize> = (0..times.len()).filter(|&j| events[j] && times[j] == t).collect();
            let s: f64 = (0..times.len()).filter(|&j| times[j] >= t).map(|j| risks[j].exp()).sum();
            let u: f64 = k.iter().map(|&j| risks[j].exp()).sum();
            let d = k.len() as f64;
            total -= k.iter().map(|&j| risks[j]).sum::<f64>();
            for w in 0..k.len() {
                total += (s - w as f64 / d * u).ln();
            }
        }
        total
    }

    /// Exact Cox partial likelihood for tie-free data.
    pub fn exact_cox(times: &[u32], events: &[bool], risks: &[f64]) -> f64 {
        (0..times.len())
            .filter(|&i| events[i])
            .map(|i| {
                let s: f64 = (0..times.len()).filter(|&j| times[j] >= times[i]).map(|j| risks[j].exp()).sum();
                s.ln() - risks[i]
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn idx(times: &[u32], events: &[bool]) -> RiskSetIndex {
        RiskSetIndex::new(times, events).unwrap()
    }

    #[test]
    fn two_patients_one_event() {
        let i = idx(&[1, 2], &[true, false]);
        assert!((efron_nll(&[0.0, 0.0], &i).unwrap() - 2f64.ln()).abs() < 1e-12);
        let g = efron_nll_gradient(&[0.0, 0.0], &i).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_tied_of_three() {
        let i = idx(&[1, 1, 2], &[true, true, false]);
        assert!((efron_nll(&[0.0; 3], &i).unwrap() - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_risk_is_an_error() {
        let i = idx(&[1, 2], &[true, false]);
        assert!(matches!(efron_nll(&[f64::NAN, 0.0], &i), Err(Error::Numeric(_))));
        assert!(efron_nll(&[0.0], &i).is_err());
    }

    #[test]
    fn large_risks_do_not_overflow() {
        let i = idx(&[1, 1, 2, 3], &[true, true, true, false]);
        let base = [0.3, -0.2, 1.1, 0.4];
        let shifted: Vec<f64> = base.iter().map(|r| r + 800.0).collect();
        let a = efron_nll(&base, &i).unwrap();
        let b = efron_nll(&shifted, &i).unwrap();
        assert!(b.is_finite() && (a - b).abs() < 1e-9);
        assert!(efron_nll_gradient(&shifted, &i).unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn symmetric_gradient_sums_to_zero() {
        let i = idx(&[1, 2, 3, 4], &[true; 4]);
        let g = efron_nll_gradient(&[0.7; 4], &i).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-14);
    }

    fn random_case(rng: &mut impl Rng, n: usize, granularity: u32) -> (Vec<u32>, Vec<bool>, Vec<f64>) {
        let times: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=12) / granularity * granularity).collect();
        let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        events[0] = true;
        let risks = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        (times, events, risks)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(21);
        for case in 0..100 {
            let (times, events, risks) = random_case(&mut rng, 15, 1 + case % 3);
            let i = idx(&times, &events);
            let g = efron_nll_gradient(&risks, &i).unwrap();
            for j in 0..risks.len() {
                let mut r = risks.clone();
                r[j] += 1e-5;
                let up = efron_nll(&r, &i).unwrap();
                r[j] -= 2e-5;
                let down = efron_nll(&r, &i).unwrap();
                let fd = (up - down) / 2e-5;
                let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1.0);
                assert!(rel < 1e-6, "case {case} patient {j}: {fd} vs {}", g[j]);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_direct_evaluation(seed: u64, n in 1usize..20, gran in 1u32..4) {
            let mut rng = seed::rng(seed);
            let (times, events, risks) = random_case(&mut rng, n, gran);
            let got = efron_nll(&risks, &idx(&times, &events)).unwrap();
            let want = oracle::nll(&times, &events, &risks);
            prop_assert!((got - want).abs() < 1e-10 * want.abs().max(1.0));
        }

        #[test]
        fn translation_invariance(seed: u64, n in 1usize..20, c in -50.0f64..50.0) {
            let mut rng = seed::rng(seed);
            let (times, events, risks) = random_case(&mut rng, n, 2);
            let i = idx(&times, &events);
            let shifted: Vec<f64> = risks.iter().map(|r| r + c).collect();
            let a = efron_nll(&risks, &i).unwrap();
            let b = efron_nll(&shifted, &i).unwrap();
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            let g = efron_nll_gradient(&risks, &i).unwrap();
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-10);
        }

        #[test]
        fn no_ties_equal_exact_cox(seed: u64, n in 1usize..20) {
            let mut rng = seed::rng(seed);
            let mut times: Vec<u32> = (1..=n as u32).collect();
            rand::seq::SliceRandom::shuffle(times.as_mut_slice(), &mut rng);
            let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            events[0] = true;
            let risks: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = efron_nll(&risks, &idx(&times, &events)).unwrap();
            prop_assert!((got - oracle::exact_cox(&times, &events, &risks)).abs() < 1e-12);
        }
    }
}
