//! Event pipeline over raw dated records.
//!
//! Records file: JSON lines, one object per patient:
//! `{"id", "events": {name: date}, "time_fixed": {name: level}, "observations": [{"date", "feature", "value"}]}`.
//! Schema file: `{"longitudinal": [{"name", "min", "max"}], "time_fixed": [{"name", "levels"}]}`.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use super::encode::{encode_longitudinal, Observation};
use super::{BaselineRule, Cohort, EventSpec, FeatureSchema, PatientRecord, MISSING_LEVEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
pub struct RawObservation {
    pub date: String,
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawRecord {
    pub id: String,
    #[serde(default)]
    pub events: BTreeMap<String, String>,
    #[serde(default)]
    pub time_fixed: BTreeMap<String, Option<String>>,
    #[serde(default)]
    pub observations: Vec<RawObservation>,
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path)?;
    let raw: FeatureSchema = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    FeatureSchema::new(raw.longitudinal, raw.time_fixed)
}

fn read_records<R: BufRead>(input: R) -> Result<Vec<(usize, RawRecord)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

fn parse_date(text: &str, line: usize) -> Result<NaiveDate> {
    let head = text.get(..10).unwrap_or(text);
    let tail_ok = text.len() == head.len() || matches!(text.as_bytes()[10], b'T' | b' ');
    NaiveDate::parse_from_str(head, "%Y-%m-%d")
        .ok()
        .filter(|_| tail_ok)
        .ok_or_else(|| Error::Parse { line, message: format!("invalid ISO-8601 date {text:?}") })
}

/// Parses records and schema from disk and runs the event pipeline.
pub fn ingest_cohort(records_path: &Path, schema_path: &Path, event_spec: &EventSpec) -> Result<Cohort> {
    let schema = load_schema(schema_path)?;
    let file = std::fs::File::open(records_path)?;
    let records = read_records(std::io::BufReader::new(file))?;
    ingest_records(&records, schema, event_spec)
}

/// Runs the event pipeline over parsed records tagged with their source line.
///
/// Per patient: the baseline is resolved by `baseline_rule`; observations
/// outside `[baseline + start_offset, baseline + cutoff]` are dropped; event
/// patients get `T = event - baseline`, censored ones the day of their most
/// recent in-window observation. Events past the cutoff become censored at
/// the cutoff. Matrix rows index days from the window start, so the first `D`
/// window days are encoded.
pub fn ingest_records(
    records: &[(usize, RawRecord)],
    schema: FeatureSchema,
    event_spec: &EventSpec,
) -> Result<Cohort> {
    event_spec.validate()?;
    let cutoff = i64::from(event_spec.cutoff_days);
    let days = event_spec.days();
    let mut patients = Vec::new();
    for (line, record) in records {
        let line = *line;
        let mut dated = Vec::with_capacity(record.observations.len());
        for o in &record.observations {
            dated.push((parse_date(&o.date, line)?, o));
        }
        let event_date = match record.events.get(&event_spec.event_name) {
            Some(d) => Some(parse_date(d, line)?),
            None => None,
        };
        let baseline = match &event_spec.baseline_rule {
            BaselineRule::FirstRecord => dated.iter().map(|(d, _)| *d).min(),
            BaselineRule::AdmitDate => lookup_date(record, "admit", line)?,
            BaselineRule::IcuAdmitDate => lookup_date(record, "icu_admit", line)?,
            BaselineRule::ExplicitColumn(col) => lookup_date(record, col, line)?,
        };
        let Some(baseline) = baseline else { continue };

        let mut observations = Vec::new();
        let mut last_observed: Option<i64> = None;
        for (date, o) in &dated {
            let rel = (*date - baseline).num_days();
            if rel < event_spec.start_offset_days || rel > cutoff {
                continue;
            }
            last_observed = Some(last_observed.map_or(rel, |l| l.max(rel)));
            let row = (rel - event_spec.start_offset_days) as usize;
            if row < days {
                observations.push(Observation { day: row, feature: o.feature.clone(), value: o.value });
            }
        }
        if event_spec.filter_require_observation && last_observed.is_none() {
            continue;
        }

        let (followup, event) = match event_date.map(|d| (d - baseline).num_days()) {
            // The event precedes the baseline: the patient was never at risk.
            Some(rel) if rel < 0 => continue,
            Some(rel) if rel <= cutoff => (rel, true),
            Some(_) => (cutoff, false),
            None => (last_observed.unwrap_or(0).clamp(0, cutoff), false),
        };

        let longitudinal = encode_longitudinal(&observations, &schema, days)
            .map_err(|e| Error::Schema(format!("line {line}: {e}")))?;
        let mut time_fixed = Vec::with_capacity(schema.time_fixed.len());
        for feature in &schema.time_fixed {
            let level = record
                .time_fixed
                .get(&feature.name)
                .and_then(Option::as_deref)
                .unwrap_or(MISSING_LEVEL);
            let idx = feature.level_index(level).ok_or_else(|| {
                Error::Schema(format!(
                    "line {line}: level {level:?} not in vocabulary of {:?}",
                    feature.name
                ))
            })?;
            time_fixed.push(idx);
        }
        patients.push(PatientRecord {
            id: record.id.clone(),
            followup_time: followup as u32,
            event,
            time_fixed,
            longitudinal,
        });
    }
    if patients.is_empty() {
        return Err(Error::EmptyCohort("no patient survived the event pipeline".into()));
    }
    Cohort::new(schema, event_spec.clone(), patients)
}

fn lookup_date(record: &RawRecord, key: &str, line: usize) -> Result<Option<NaiveDate>> {
    record.events.get(key).map(|d| parse_date(d, line)).transpose()
}
