use serde::{Deserialize, Serialize};

/// Kaplan-Meier product-limit curve; right-continuous steps at the distinct
/// event times of whatever is treated as the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    pub times: Vec<u32>,
    pub survival: Vec<f64>,
}

impl KaplanMeier {
    pub fn fit(times: &[u32], events: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by_key(|&j| times[j]);
        let mut at_risk = times.len();
        let mut s = 1.0;
        let (mut out_t, mut out_s) = (Vec::new(), Vec::new());
        let mut k = 0;
        while k < order.len() {
            let t = times[order[k]];
            let (mut d, mut removed) = (0, 0);
            while k < order.len() && times[order[k]] == t {
                d += usize::from(events[order[k]]);
                removed += 1;
                k += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / at_risk as f64;
                out_t.push(t);
                out_s.push(s);
            }
            at_risk -= removed;
        }
        Self { times: out_t, survival: out_s }
    }

    /// Distribution of the censoring times: censorings play the event role.
    pub fn censoring(times: &[u32], events: &[bool]) -> Self {
        let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
        Self::fit(times, &flipped)
    }

    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| f64::from(s) <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// Left limit `S(t-)`.
    pub fn before(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| f64::from(s) < t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }
}
