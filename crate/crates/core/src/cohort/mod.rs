//! Patient and cohort data model.
//!
//! Time is discretised to integer days since the baseline date. Each patient
//! carries a follow-up time, an event indicator, categorical time-fixed
//! features and a `D x 2W` longitudinal matrix whose rows hold `W` rescaled
//! values followed by `W` measured-that-day indicators.

mod encode;
mod ingest;
mod split;
mod synthetic;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EncodedInput;

pub use encode::{encode_longitudinal, truncate_cohort, truncate_observations, Observation};
pub use ingest::{ingest_cohort, ingest_records, load_schema, RawObservation, RawRecord};
pub use split::{largest_remainder, stratified_split, stratified_split_indices};
pub use synthetic::{
    generate_synthetic, generate_synthetic_cohort, NonlinearRisk, SyntheticCohort, SyntheticConfig,
};

/// Level appended to every time-fixed vocabulary for unreported values.
pub const MISSING_LEVEL: &str = "missing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalFeature {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeFixedFeature {
    pub name: String,
    pub levels: Vec<String>,
}

impl TimeFixedFeature {
    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub longitudinal: Vec<LongitudinalFeature>,
    #[serde(default)]
    pub time_fixed: Vec<TimeFixedFeature>,
}

impl FeatureSchema {
    /// Builds a schema, appending the `missing` level to any vocabulary that
    /// lacks it.
    pub fn new(
        longitudinal: Vec<LongitudinalFeature>,
        mut time_fixed: Vec<TimeFixedFeature>,
    ) -> Result<Self> {
        for feature in &mut time_fixed {
            if feature.level_index(MISSING_LEVEL).is_none() {
                feature.levels.push(MISSING_LEVEL.to_string());
            }
        }
        let schema = Self { longitudinal, time_fixed };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for f in &self.longitudinal {
            if !(f.min.is_finite() && f.max.is_finite() && f.min < f.max) {
                return Err(Error::Schema(format!(
                    "feature {:?} needs finite min < max, got [{}, {}]",
                    f.name, f.min, f.max
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
        }
        for f in &self.time_fixed {
            if f.levels.is_empty() {
                return Err(Error::Schema(format!("feature {:?} has an empty vocabulary", f.name)));
            }
            let mut seen = std::collections::HashSet::new();
            for level in &f.levels {
                if !seen.insert(level.as_str()) {
                    return Err(Error::Schema(format!(
                        "feature {:?} repeats level {:?}",
                        f.name, level
                    )));
                }
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
        }
        Ok(())
    }

    /// `W`, the number of longitudinal features.
    pub fn width(&self) -> usize {
        self.longitudinal.len()
    }

    pub fn vocab_sizes(&self) -> Vec<usize> {
        self.time_fixed.iter().map(|f| f.levels.len()).collect()
    }

    pub fn longitudinal_index(&self, name: &str) -> Option<usize> {
        self.longitudinal.iter().position(|f| f.name == name)
    }

    pub fn time_fixed_index(&self, name: &str) -> Option<usize> {
        self.time_fixed.iter().position(|f| f.name == name)
    }
}

/// How the baseline (day zero) of a patient's timeline is resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineRule {
    /// Earliest dated observation of any longitudinal feature.
    FirstRecord,
    /// The `admit` entry of the record's event map.
    AdmitDate,
    /// The `icu_admit` entry of the record's event map.
    IcuAdmitDate,
    /// A named entry of the record's event map.
    ExplicitColumn(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub event_name: String,
    pub baseline_rule: BaselineRule,
    /// Offset of the observation window start relative to baseline (<= 0).
    pub start_offset_days: i64,
    /// `D`: last follow-up day and number of encoded rows.
    pub cutoff_days: u32,
    /// Drop patients with no longitudinal observation in the window.
    pub filter_require_observation: bool,
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cutoff_days < 1 {
            return Err(Error::Config("cutoff_days must be at least 1".into()));
        }
        if self.start_offset_days > 0 {
            return Err(Error::Config("start_offset_days must be <= 0".into()));
        }
        Ok(())
    }

    pub fn days(&self) -> usize {
        self.cutoff_days as usize
    }
}

/// `D` rows of `W` rescaled values plus `W` indicators, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalMatrix {
    days: usize,
    width: usize,
    values: Vec<f64>,
    indicators: Vec<bool>,
}

impl LongitudinalMatrix {
    pub fn zeros(days: usize, width: usize) -> Self {
        Self {
            days,
            width,
            values: vec![0.0; days * width],
            indicators: vec![false; days * width],
        }
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn value(&self, day: usize, feature: usize) -> f64 {
        self.values[day * self.width + feature]
    }

    pub fn indicator(&self, day: usize, feature: usize) -> bool {
        self.indicators[day * self.width + feature]
    }

    /// Records a measurement. The value is clamped into `[0, 1]`.
    pub fn set_observed(&mut self, day: usize, feature: usize, value: f64) {
        let at = day * self.width + feature;
        self.values[at] = value.clamp(0.0, 1.0);
        self.indicators[at] = true;
    }

    pub fn clear(&mut self, day: usize, feature: usize) {
        let at = day * self.width + feature;
        self.values[at] = 0.0;
        self.indicators[at] = false;
    }

    pub fn clear_day(&mut self, day: usize) {
        for w in 0..self.width {
            self.clear(day, w);
        }
    }

    pub fn is_day_observed(&self, day: usize) -> bool {
        self.indicators[day * self.width..(day + 1) * self.width].iter().any(|&b| b)
    }

    pub fn observed_days(&self) -> Vec<usize> {
        (0..self.days).filter(|&d| self.is_day_observed(d)).collect()
    }

    /// Appends row `day` as `[x_1..x_W, y_1..y_W]`.
    pub fn push_row(&self, day: usize, out: &mut Vec<f64>) {
        let row = day * self.width..(day + 1) * self.width;
        out.extend_from_slice(&self.values[row.clone()]);
        out.extend(self.indicators[row].iter().map(|&b| if b { 1.0 } else { 0.0 }));
    }

    /// Copies feature column `feature` (values and indicators, all days) from
    /// `other`.
    pub fn copy_feature_from(&mut self, other: &LongitudinalMatrix, feature: usize) {
        for d in 0..self.days {
            let at = d * self.width + feature;
            self.values[at] = other.values[at];
            self.indicators[at] = other.indicators[at];
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.days * self.width || self.indicators.len() != self.values.len() {
            return Err(Error::Shape { expected: self.days * self.width, actual: self.values.len() });
        }
        for (v, &ind) in self.values.iter().zip(&self.indicators) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidInput(format!("longitudinal value {v} outside [0, 1]")));
            }
            if !ind && *v != 0.0 {
                return Err(Error::InvalidInput("unmeasured entry with non-zero value".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    /// `T_j`: days from baseline to the event or censoring.
    pub followup_time: u32,
    /// `C_j`: true when the event was observed at `followup_time`.
    pub event: bool,
    pub time_fixed: Vec<usize>,
    pub longitudinal: LongitudinalMatrix,
}

impl PatientRecord {
    pub fn input(&self) -> EncodedInput<'_> {
        EncodedInput { longitudinal: &self.longitudinal, time_fixed: &self.time_fixed }
    }
}

/// A validated, immutable collection of patients sharing one schema and
/// event definition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort {
    schema: FeatureSchema,
    event_spec: EventSpec,
    patients: Vec<PatientRecord>,
}

impl Cohort {
    pub fn new(
        schema: FeatureSchema,
        event_spec: EventSpec,
        patients: Vec<PatientRecord>,
    ) -> Result<Self> {
        schema.validate()?;
        event_spec.validate()?;
        if patients.is_empty() {
            return Err(Error::EmptyCohort("no patients".into()));
        }
        if !patients.iter().any(|p| p.event) {
            return Err(Error::EmptyCohort("no observed events".into()));
        }
        let vocab = schema.vocab_sizes();
        for p in &patients {
            if p.followup_time > event_spec.cutoff_days {
                return Err(Error::InvalidInput(format!(
                    "patient {:?}: follow-up {} exceeds cutoff {}",
                    p.id, p.followup_time, event_spec.cutoff_days
                )));
            }
            if p.time_fixed.len() != vocab.len() {
                return Err(Error::Schema(format!(
                    "patient {:?}: {} time-fixed values for {} features",
                    p.id,
                    p.time_fixed.len(),
                    vocab.len()
                )));
            }
            if let Some(i) = (0..vocab.len()).find(|&i| p.time_fixed[i] >= vocab[i]) {
                return Err(Error::Schema(format!(
                    "patient {:?}: level index out of range for feature {:?}",
                    p.id, schema.time_fixed[i].name
                )));
            }
            let m = &p.longitudinal;
            if m.days() != event_spec.days() || m.width() != schema.width() {
                return Err(Error::Schema(format!(
                    "patient {:?}: matrix is {}x{}, expected {}x{}",
                    p.id,
                    m.days(),
                    m.width(),
                    event_spec.days(),
                    schema.width()
                )));
            }
            m.validate()?;
        }
        Ok(Self { schema, event_spec, patients })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn event_spec(&self) -> &EventSpec {
        &self.event_spec
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.patients.iter().filter(|p| p.event).count()
    }

    pub fn times(&self) -> Vec<u32> {
        self.patients.iter().map(|p| p.followup_time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.patients.iter().map(|p| p.event).collect()
    }

    pub fn inputs(&self) -> Vec<EncodedInput<'_>> {
        self.patients.iter().map(PatientRecord::input).collect()
    }

    /// Cohort restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let patients = indices.iter().map(|&i| self.patients[i].clone()).collect();
        Self::new(self.schema.clone(), self.event_spec.clone(), patients)
    }

    /// Same schema and event definition, different patients.
    pub fn with_patients(&self, patients: Vec<PatientRecord>) -> Result<Self> {
        Self::new(self.schema.clone(), self.event_spec.clone(), patients)
    }

    /// Writes the fully encoded cohort as JSON lines: one header object
    /// (`schema`, `event_spec`, optional `meta`) followed by one patient per
    /// line.
    pub fn write_jsonl<W: Write>(&self, mut out: W, meta: Option<&serde_json::Value>) -> Result<()> {
        let header = CohortHeader {
            schema: self.schema.clone(),
            event_spec: self.event_spec.clone(),
            meta: meta.cloned(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).map_err(json_err)?)?;
        for p in &self.patients {
            writeln!(out, "{}", serde_json::to_string(p).map_err(json_err)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<CohortHeader> = None;
        let mut patients = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse { line: i + 1, message: e.to_string() };
            if header.is_none() {
                header = Some(serde_json::from_str(&line).map_err(parse_err)?);
            } else {
                patients.push(serde_json::from_str(&line).map_err(parse_err)?);
            }
        }
        let header = header.ok_or_else(|| Error::EmptyCohort("cohort file is empty".into()))?;
        Self::new(header.schema, header.event_spec, patients)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

#[derive(Serialize, Deserialize)]
struct CohortHeader {
    schema: FeatureSchema,
    event_spec: EventSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidInput(e.to_string())
}
