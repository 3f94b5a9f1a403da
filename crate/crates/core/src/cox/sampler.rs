use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Draws minibatches that keep the cohort's event fraction.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    events: Vec<usize>,
    censored: Vec<usize>,
    n_events: usize,
    n_censored: usize,
}

impl StratifiedSampler {
    pub fn new(events: &[bool], batch_size: usize) -> Result<Self> {
        let n = events.len();
        if batch_size < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {batch_size}")));
        }
        if batch_size > n {
            return Err(Error::Sampling(format!("batch size {batch_size} exceeds cohort size {n}")));
        }
        let (ev, ce): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| events[i]);
        if ev.is_empty() {
            return Err(Error::Sampling("cohort has no events to sample".into()));
        }
        let (n_events, n_censored) = batch_counts(batch_size, ev.len(), ce.len());
        Ok(Self { events: ev, censored: ce, n_events, n_censored })
    }

    /// Events and censored patients per batch.
    pub fn counts(&self) -> (usize, usize) {
        (self.n_events, self.n_censored)
    }

    /// Sorted patient indices, sampled without replacement within each
    /// stratum.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        let mut batch: Vec<usize> = index::sample(rng, self.events.len(), self.n_events)
            .into_iter()
            .map(|i| self.events[i])
            .chain(index::sample(rng, self.censored.len(), self.n_censored).into_iter().map(|i| self.censored[i]))
            .collect();
        batch.sort_unstable();
        batch
    }
}

/// `round(B * f)` events with at least one, the rest censored; shifted
/// between strata only when a stratum is too small to fill its share.
pub fn batch_counts(batch_size: usize, n_events: usize, n_censored: usize) -> (usize, usize) {
    let fraction = n_events as f64 / (n_events + n_censored) as f64;
    let mut ev = ((batch_size as f64 * fraction).round() as usize).max(1).min(n_events);
    let mut ce = batch_size - ev;
    if ce > n_censored {
        ce = n_censored;
        ev = batch_size - ce;
    }
    (ev, ce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn events(n_ev: usize, n_ce: usize) -> Vec<bool> {
        (0..n_ev + n_ce).map(|i| i % (n_ev + n_ce) < n_ev).collect()
    }

    #[test]
    fn half_events() {
        assert_eq!(StratifiedSampler::new(&events(50, 50), 40).unwrap().counts(), (20, 20));
    }

    #[test]
    fn ten_percent() {
        assert_eq!(StratifiedSampler::new(&events(10, 90), 20).unwrap().counts(), (2, 18));
    }

    #[test]
    fn minimum_one_event() {
        assert_eq!(StratifiedSampler::new(&events(1, 99), 20).unwrap().counts(), (1, 19));
    }

    #[test]
    fn errors() {
        assert!(matches!(StratifiedSampler::new(&events(5, 5), 11), Err(Error::Sampling(_))));
        assert!(matches!(StratifiedSampler::new(&events(0, 5), 2), Err(Error::Sampling(_))));
        assert!(StratifiedSampler::new(&events(5, 5), 1).is_err());
    }

    #[test]
    fn batches_are_stratified() {
        let ev = events(30, 70);
        let s = StratifiedSampler::new(&ev, 40).unwrap();
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            let b = s.sample(&mut rng);
            assert_eq!(b.len(), 40);
            assert!(b.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(b.iter().filter(|&&i| ev[i]).count(), 12);
        }
    }

    proptest! {
        #[test]
        fn counts_are_rounded_share(n_ev in 1usize..200, n_ce in 0usize..200, b in 2usize..100) {
            prop_assume!(b <= n_ev + n_ce);
            let (e, c) = batch_counts(b, n_ev, n_ce);
            prop_assert_eq!(e + c, b);
            prop_assert!(e >= 1 && e <= n_ev && c <= n_ce);
            let target = ((b as f64 * n_ev as f64 / (n_ev + n_ce) as f64).round() as usize).max(1);
            if target <= n_ev && b - target <= n_ce {
                prop_assert_eq!(e, target);
            }
        }
    }
}
