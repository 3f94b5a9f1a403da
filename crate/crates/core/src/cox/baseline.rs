use serde::{Deserialize, Serialize};

use super::efron::event_terms;
use super::RiskSetIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardStep {
    pub time: u32,
    pub increment: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Steps {
    steps: Vec<HazardStep>,
}

/// Right-continuous step function `H0(t) = sum_{t_i <= t} dH0(t_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Steps", into = "Steps")]
pub struct BaselineHazardCurve {
    steps: Vec<HazardStep>,
    cumulative: Vec<f64>,
}

impl TryFrom<Steps> for BaselineHazardCurve {
    type Error = Error;

    fn try_from(s: Steps) -> Result<Self> {
        Self::new(s.steps)
    }
}

impl From<BaselineHazardCurve> for Steps {
    fn from(c: BaselineHazardCurve) -> Self {
        Steps { steps: c.steps }
    }
}

impl BaselineHazardCurve {
    pub fn new(steps: Vec<HazardStep>) -> Result<Self> {
        for w in steps.windows(2) {
            if w[0].time >= w[1].time {
                return Err(Error::InvalidInput("baseline hazard times must be strictly increasing".into()));
            }
        }
        if let Some(s) = steps.iter().find(|s| !(s.increment > 0.0 && s.increment.is_finite())) {
            return Err(Error::Numeric(format!("baseline increment {} at t = {}", s.increment, s.time)));
        }
        let cumulative = steps
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.increment;
                Some(*acc)
            })
            .collect();
        Ok(Self { steps, cumulative })
    }

    pub fn steps(&self) -> &[HazardStep] {
        &self.steps
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        match self.steps.partition_point(|s| f64::from(s.time) <= t) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    /// `exp(-H0(t) exp(risk))`.
    pub fn survival(&self, t: f64, risk: f64) -> f64 {
        (-self.cumulative_hazard(t) * risk.exp()).exp()
    }
}

/// Efron estimator of the baseline hazard increments at each event time.
pub fn estimate_baseline_hazard(risks: &[f64], index: &RiskSetIndex) -> Result<BaselineHazardCurve> {
    let terms = event_terms(risks, index)?;
    let steps = terms
        .iter()
        .zip(index.event_times())
        .map(|(t, &time)| HazardStep { time, increment: (-t.m).exp() * t.a })
        .collect();
    BaselineHazardCurve::new(steps)
}

/// `(sum_j H0(T_j) e^{r_j}, number of events)` over all patients. The two
/// agree exactly without ties; tie corrections push the first slightly
/// above the second.
pub fn calibration_totals(curve: &BaselineHazardCurve, times: &[u32], events: &[bool], risks: &[f64]) -> (f64, usize) {
    let expected = times.iter().zip(risks).map(|(&t, &r)| curve.cumulative_hazard(f64::from(t)) * r.exp()).sum();
    (expected, events.iter().filter(|&&e| e).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn curve(times: &[u32], events: &[bool], risks: &[f64]) -> BaselineHazardCurve {
        estimate_baseline_hazard(risks, &RiskSetIndex::new(times, events).unwrap()).unwrap()
    }

    /// Tie-adjusted Nelson-Aalen with unit relative hazards.
    fn nelson_aalen(times: &[u32], events: &[bool]) -> Vec<(u32, f64)> {
        let mut ts: Vec<u32> = times.iter().zip(events).filter(|p| *p.1).map(|p| *p.0).collect();
        ts.sort_unstable();
        ts.dedup();
        ts.into_iter()
            .map(|t| {
                let n = times.iter().filter(|&&s| s >= t).count();
                let d = times.iter().zip(events).filter(|&(&s, &e)| e && s == t).count();
                (t, (0..d).map(|l| 1.0 / (n - l) as f64).sum())
            })
            .collect()
    }

    #[test]
    fn nelson_aalen_hand_values() {
        let c = curve(&[1, 2, 3], &[true; 3], &[0.0; 3]);
        let inc: Vec<f64> = c.steps().iter().map(|s| s.increment).collect();
        assert_eq!(inc, vec![1.0 / 3.0, 0.5, 1.0]);
        assert_eq!(c.cumulative_hazard(0.5), 0.0);
        assert_eq!(c.cumulative_hazard(1.0), 1.0 / 3.0);
        assert!((c.cumulative_hazard(2.0) - 5.0 / 6.0).abs() < 1e-15);
        assert!((c.survival(3.0, 0.0) - (-11.0f64 / 6.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn tied_hand_value() {
        let c = curve(&[1, 1, 2], &[true, true, false], &[0.0; 3]);
        assert_eq!(c.steps().len(), 1);
        assert!((c.steps()[0].increment - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn early_censoring_is_ignored() {
        let a = curve(&[2, 3, 5], &[true, false, true], &[0.1, -0.4, 0.3]);
        let b = curve(&[2, 3, 5, 1], &[true, false, true, false], &[0.1, -0.4, 0.3, 2.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn survival_laws() {
        let c = curve(&[1, 2, 2, 4], &[true, true, false, true], &[0.2, -0.1, 0.5, 0.0]);
        assert_eq!(c.survival(0.0, 3.0), 1.0);
        assert_eq!(c.survival(3.0, 0.0), (-c.cumulative_hazard(3.0)).exp());
        let mut prev = 1.0;
        for k in 0..200 {
            let s = c.survival(k as f64 * 0.025, 0.4);
            assert!(s <= prev && s > 0.0);
            prev = s;
        }
        assert!(c.survival(2.0, 1.0) < c.survival(2.0, 0.5));
    }

    #[test]
    fn serde_round_trip() {
        let c = curve(&[1, 2, 3], &[true, false, true], &[0.3, 0.1, -0.2]);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.starts_with("{\"steps\":[{\"time\":1,"));
        let back: BaselineHazardCurve = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<BaselineHazardCurve>(r#"{"steps":[{"time":1,"increment":0.0}]}"#).is_err());
    }

    #[test]
    fn calibration_identity_without_ties() {
        let mut rng = seed::rng(4);
        let n = 50;
        let mut times: Vec<u32> = (1..=n).collect();
        rand::seq::SliceRandom::shuffle(times.as_mut_slice(), &mut rng);
        let events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        let risks: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = curve(&times, &events, &risks);
        let (expected, observed) = calibration_totals(&c, &times, &events, &risks);
        assert!((expected - observed as f64).abs() < 1e-9);
    }

    fn calibration_ratio(rng: &mut impl Rng, n: usize, max_time: u32) -> f64 {
        let times: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=max_time)).collect();
        let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        events[0] = true;
        let risks: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = curve(&times, &events, &risks);
        let (expected, observed) = calibration_totals(&c, &times, &events, &risks);
        expected / observed as f64
    }

    #[test]
    fn calibration_residual_is_reported_under_ties() {
        // The Efron residual grows with the number of events per distinct
        // time, so denser ties are monitored rather than bounded.
        let mut rng = seed::rng(6);
        for max_time in [30, 60, 120, 365] {
            let worst = (0..50).map(|_| calibration_ratio(&mut rng, 200, max_time)).fold(1.0, f64::max);
            eprintln!("calibration residual, 200 patients over {max_time} days: {:.4}", worst - 1.0);
        }
    }

    #[test]
    fn calibration_within_two_percent_with_sparse_ties() {
        let mut rng = seed::rng(5);
        for _ in 0..50 {
            let ratio = calibration_ratio(&mut rng, 200, 1000);
            assert!(ratio >= 1.0 - 1e-12);
            assert!(ratio - 1.0 < 0.02, "{ratio}");
        }
    }

    proptest! {
        #[test]
        fn zero_risks_reduce_to_nelson_aalen(seed: u64, n in 1usize..40) {
            let mut rng = seed::rng(seed);
            let times: Vec<u32> = (0..n).map(|_| rng.gen_range(0..10)).collect();
            let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            events[0] = true;
            let got = curve(&times, &events, &vec![0.0; n]);
            let want = nelson_aalen(&times, &events);
            prop_assert_eq!(got.steps().len(), want.len());
            for (s, (t, h)) in got.steps().iter().zip(want) {
                prop_assert_eq!(s.time, t);
                prop_assert!((s.increment - h).abs() < 1e-12);
            }
        }
    }
}
