use crate::error::{Error, Result};

/// Distinct event times with their tie sets and nested risk sets.
///
/// Patients are kept sorted by follow-up time, descending, so the risk set
/// of every event time is a prefix of that order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSetIndex {
    times: Vec<u32>,
    events: Vec<bool>,
    event_times: Vec<u32>,
    tied: Vec<Vec<usize>>,
    by_time_desc: Vec<usize>,
    at_risk_len: Vec<usize>,
}

impl RiskSetIndex {
    pub fn new(times: &[u32], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::Shape { expected: times.len(), actual: events.len() });
        }
        let mut event_times: Vec<u32> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
        event_times.sort_unstable();
        event_times.dedup();
        if event_times.is_empty() {
            return Err(Error::EmptyLikelihood);
        }
        let mut tied = vec![Vec::new(); event_times.len()];
        for (j, (&t, &e)) in times.iter().zip(events).enumerate() {
            if e {
                tied[event_times.binary_search(&t).unwrap()].push(j);
            }
        }
        let mut by_time_desc: Vec<usize> = (0..times.len()).collect();
        by_time_desc.sort_by(|&a, &b| times[b].cmp(&times[a]).then(a.cmp(&b)));
        let at_risk_len = event_times
            .iter()
            .map(|&t| by_time_desc.partition_point(|&j| times[j] >= t))
            .collect();
        Ok(Self { times: times.to_vec(), events: events.to_vec(), event_times, tied, by_time_desc, at_risk_len })
    }

    pub fn n_patients(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[u32] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    /// Distinct event times, ascending.
    pub fn event_times(&self) -> &[u32] {
        &self.event_times
    }

    /// Patients with an event at `event_times()[i]`.
    pub fn tied(&self, i: usize) -> &[usize] {
        &self.tied[i]
    }

    pub fn at_risk(&self, i: usize) -> &[usize] {
        &self.by_time_desc[..self.at_risk_len[i]]
    }

    pub fn at_risk_len(&self, i: usize) -> usize {
        self.at_risk_len[i]
    }

    /// All patients, longest follow-up first.
    pub fn by_time_desc(&self) -> &[usize] {
        &self.by_time_desc
    }

    /// Number of event times `t_i <= t`.
    pub fn n_event_times_upto(&self, t: u32) -> usize {
        self.event_times.partition_point(|&s| s <= t)
    }
}
