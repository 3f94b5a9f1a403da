use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use longsurv::cohort::generate_synthetic;
use longsurv::cox::{calibration_totals, train};
use longsurv::metrics::{
    brier_curve, concordance_error, concordance_error_of, permutation_importance, ConcordanceKind, FeatureSelector,
};
use longsurv::model::{score_all, InputShape};
use longsurv::parametric::fit_parametric;
use longsurv::{seed, Cohort, Error, RiskModel, RiskModelSpec};

use crate::artifacts::{csv_row, Meta, OutDir};
use crate::config::{ExperimentConfig, ModelChoice};
use crate::data::{load_cohort, FittedModel, ModelBundle, Splits, Truncation};
use crate::UsageError;

fn log(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn simulate(config: &ExperimentConfig, out: &OutDir, quiet: bool) -> anyhow::Result<()> {
    let meta = Meta::new("simulate", config);
    let syn = generate_synthetic(&config.synthetic)?;
    let mut buf = Vec::new();
    syn.cohort.write_jsonl(&mut buf, Some(&meta.to_value()))?;
    out.write_text("cohort.jsonl", std::str::from_utf8(&buf)?)?;
    let risks: Vec<_> =
        syn.cohort.patients().iter().zip(&syn.true_risks).map(|(p, r)| json!({ "id": p.id, "risk": r })).collect();
    out.write_json(
        "truth.json",
        &json!({
            "meta": meta,
            "true_linear_coefficients": config.synthetic.true_linear_coefficients,
            "nonlinear_risk": config.synthetic.nonlinear_risk,
            "nonlinear_strength": config.synthetic.nonlinear_strength,
            "baseline_rate": syn.baseline_rate,
            "censoring_horizon": syn.censoring_horizon,
            "realized_censoring_rate": syn.realized_censoring_rate,
            "true_risks": risks,
        }),
    )?;
    log(quiet, format!("{} patients, censored fraction {:.3}", syn.cohort.len(), syn.realized_censoring_rate));
    Ok(())
}

pub fn fit(config: &ExperimentConfig, splits: &Splits) -> anyhow::Result<ModelBundle> {
    let meta = Meta::new("train", config);
    let (fitted, evaluation_truncation) = match &config.model {
        ModelChoice::Cox(kind) => {
            let shape = InputShape::from_schema(splits.train.schema(), splits.train.event_spec().days());
            let spec = RiskModelSpec::new(kind.clone(), shape)?;
            let model = RiskModel::init(spec, seed::derive(config.seed, &[0]))?;
            let trained = train(model, &splits.train, &splits.val, &config.training)?;
            let trunc =
                config.training.k_max_observations.map(|k| Truncation { k, seed: config.training.evaluation_seed() });
            (FittedModel::Cox(trained), trunc)
        }
        ModelChoice::Parametric { kind } => (FittedModel::Parametric(fit_parametric(&splits.train, *kind)?), None),
    };
    Ok(ModelBundle { meta, name: config.model_name(), evaluation_truncation, fitted })
}

pub fn train_cmd(config: &ExperimentConfig, out: &OutDir, quiet: bool) -> anyhow::Result<()> {
    let splits = Splits::new(load_cohort(config)?, config)?;
    log(
        quiet,
        format!(
            "training {} on {} patients ({} events)",
            config.model_name(),
            splits.train.len(),
            splits.train.n_events()
        ),
    );
    let bundle = fit(config, &splits)?;
    out.write_json("model.json", &bundle)?;
    if let FittedModel::Cox(m) = &bundle.fitted {
        out.write_csv("training_log.csv", &bundle.meta, &m.log_csv())?;
        if let (Some(epoch), Some(last)) = (m.selected_epoch, m.training_log.last()) {
            log(
                quiet,
                format!("kept epoch {epoch}; last validation concordance error {:.4}", last.val_concordance_error),
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub meta: Meta,
    pub model: String,
    pub event: String,
    pub subset: crate::config::Subset,
    pub n_patients: usize,
    pub n_events: usize,
    pub concordance_kind: ConcordanceKind,
    pub concordance_error: f64,
    pub comparable_pairs: u64,
    /// Expected over observed events under the fitted hazard; Cox models only.
    pub calibration_ratio: Option<f64>,
    pub brier: Vec<BrierPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrierPoint {
    pub time: f64,
    pub brier: f64,
}

pub fn evaluate(config: &ExperimentConfig, bundle: &ModelBundle, cohort: &Cohort) -> anyhow::Result<MetricsFile> {
    let cohort = bundle.prepare(cohort)?;
    let (times, events) = (cohort.times(), cohort.events());
    let risks = score_all(&bundle.fitted, &cohort.inputs())?;
    let harrell = concordance_error(&times, &events, &risks)?;
    let error = match config.concordance {
        ConcordanceKind::Harrell => harrell.error,
        kind => concordance_error_of(kind, &times, &events, &risks)?,
    };
    let calibration_ratio = match &bundle.fitted {
        FittedModel::Cox(m) => {
            let (expected, observed) = calibration_totals(&m.baseline, &times, &events, &risks);
            Some(expected / observed as f64)
        }
        FittedModel::Parametric(_) => None,
    };
    let curve = brier_curve(&bundle.fitted, &cohort, &config.grid)?;
    Ok(MetricsFile {
        meta: Meta::new("evaluate", config),
        model: bundle.name.clone(),
        event: cohort.event_spec().event_name.clone(),
        subset: config.subset,
        n_patients: cohort.len(),
        n_events: cohort.n_events(),
        concordance_kind: config.concordance,
        concordance_error: error,
        comparable_pairs: harrell.comparable_pairs,
        calibration_ratio,
        brier: curve.grid.iter().zip(&curve.scores).map(|(&time, &brier)| BrierPoint { time, brier }).collect(),
    })
}

pub fn evaluate_cmd(config: &ExperimentConfig, bundle_path: &Path, out: &OutDir, quiet: bool) -> anyhow::Result<()> {
    let bundle = ModelBundle::load(bundle_path)?;
    let splits = Splits::new(load_cohort(config)?, config)?;
    let m = evaluate(config, &bundle, splits.get(config.subset))?;
    out.write_json("metrics.json", &m)?;

    let seed = m.meta.seed.to_string();
    let mut rows = csv_row(["model", "event", "metric", "value", "seed"]);
    let mut push = |metric: String, value: f64| {
        rows += &csv_row([m.model.as_str(), m.event.as_str(), metric.as_str(), &value.to_string(), &seed]);
    };
    push("concordance_error".into(), m.concordance_error);
    if let Some(c) = m.calibration_ratio {
        push("calibration_ratio".into(), c);
    }
    for p in &m.brier {
        push(format!("brier@{}", p.time), p.brier);
    }
    out.write_csv("metrics.csv", &m.meta, &rows)?;

    let mut brier = csv_row(["time", "brier"]);
    for p in &m.brier {
        brier += &csv_row([p.time.to_string(), p.brier.to_string()]);
    }
    out.write_csv("brier.csv", &m.meta, &brier)?;
    log(quiet, format!("{} on {}: concordance error {:.4}", m.model, m.event, m.concordance_error));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub batch_size: usize,
    pub k: usize,
    pub seed: u64,
    /// Test concordance error; `None` for infeasible cells.
    pub concordance_error: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub meta: Meta,
    pub n_train: usize,
    pub batch_sizes: Vec<usize>,
    pub k_values: Vec<usize>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Rows are batch sizes, columns are `k`, empty cells are infeasible.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["batch_size".to_string()];
        header.extend(self.k_values.iter().map(|k| format!("k={k}")));
        let mut out = csv_row(&header);
        for (i, &b) in self.batch_sizes.iter().enumerate() {
            let mut row = vec![if b == self.n_train { format!("{b} (All)") } else { b.to_string() }];
            for j in 0..self.k_values.len() {
                let cell = &self.cells[i * self.k_values.len() + j];
                row.push(cell.concordance_error.map(|e| format!("{e:.4}")).unwrap_or_default());
            }
            out += &csv_row(&row);
        }
        out
    }
}

pub fn sweep(config: &ExperimentConfig, splits: &Splits) -> anyhow::Result<SweepResult> {
    let ModelChoice::Cox(_) = config.model else {
        bail!(UsageError("sweep needs a Cox risk model".into()));
    };
    if config.sweep.batch_sizes.is_empty() || config.sweep.k_values.is_empty() {
        bail!(UsageError("sweep needs at least one batch size and one k".into()));
    }
    let n_train = splits.train.len();
    let batch_sizes: Vec<usize> = config.sweep.batch_sizes.iter().map(|b| b.unwrap_or(n_train)).collect();
    let k_values = config.sweep.k_values.clone();
    if k_values.contains(&0) {
        bail!(UsageError("k must be at least 1".into()));
    }
    let observed_days: usize = splits.train.patients().iter().map(|p| p.longitudinal.observed_days().len()).sum();

    let jobs: Vec<(usize, usize, usize)> = batch_sizes
        .iter()
        .flat_map(|&b| k_values.iter().map(move |&k| (b, k)))
        .enumerate()
        .map(|(c, (b, k))| (c, b, k))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(c, b, k)| -> anyhow::Result<SweepCell> {
            let cell_seed = config.seed + c as u64;
            let mut cell = SweepCell { batch_size: b, k, seed: cell_seed, concordance_error: None, note: None };
            if b > n_train || k * b > observed_days {
                cell.note = Some("infeasible".into());
                return Ok(cell);
            }
            let mut cfg = config.clone();
            cfg.seed = cell_seed;
            cfg.propagate_seed();
            cfg.training.batch_size = if b == n_train { None } else { Some(b) };
            cfg.training.k_max_observations = Some(k);
            match fit(&cfg, splits) {
                Ok(bundle) => {
                    let test = bundle.prepare(&splits.test)?;
                    let risks = score_all(&bundle.fitted, &test.inputs())?;
                    cell.concordance_error = Some(concordance_error(&test.times(), &test.events(), &risks)?.error);
                }
                Err(e) => match e.downcast_ref::<Error>() {
                    Some(Error::Sampling(msg)) => cell.note = Some(format!("infeasible: {msg}")),
                    _ => return Err(e.context(format!("sweep cell B = {b}, k = {k}"))),
                },
            }
            Ok(cell)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(SweepResult { meta: Meta::new("sweep", config), n_train, batch_sizes, k_values, cells })
}

pub fn sweep_cmd(config: &ExperimentConfig, out: &OutDir, quiet: bool) -> anyhow::Result<()> {
    let splits = Splits::new(load_cohort(config)?, config)?;
    log(
        quiet,
        format!(
            "sweeping {} x {} cells on {} training patients",
            config.sweep.batch_sizes.len(),
            config.sweep.k_values.len(),
            splits.train.len()
        ),
    );
    let result = sweep(config, &splits)?;
    out.write_json("sweep.json", &result)?;
    out.write_csv("sweep.csv", &result.meta, &result.to_csv())?;
    Ok(())
}

pub fn importance_cmd(config: &ExperimentConfig, bundle_path: &Path, out: &OutDir, quiet: bool) -> anyhow::Result<()> {
    let bundle = ModelBundle::load(bundle_path)?;
    let splits = Splits::new(load_cohort(config)?, config)?;
    let cohort = bundle.prepare(splits.get(config.subset))?;
    let schema = cohort.schema();
    let features = if config.importance.features.is_empty() {
        FeatureSelector::all(schema)
    } else {
        config
            .importance
            .features
            .iter()
            .map(|name| FeatureSelector::by_name(schema, name).map_err(|e| UsageError(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let report = permutation_importance(&bundle.fitted, &cohort, &features, config.importance.repeats, config.seed)?;
    let meta = Meta::new("importance", config);
    out.write_json("importance.json", &json!({ "meta": meta, "model": bundle.name, "report": report }))?;
    let mut rows = csv_row(["feature", "mean", "std", "repeats"]);
    for f in &report.features {
        rows += &csv_row([f.feature.clone(), f.mean.to_string(), f.std.to_string(), report.repeats.to_string()]);
    }
    out.write_csv("importance.csv", &meta, &rows)?;
    for f in &report.features {
        log(quiet, format!("{:>16}  {:+.4} +- {:.4}", f.feature, f.mean, f.std));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub event: Option<String>,
    pub concordance_error: Option<f64>,
    /// 1-based rank within the event, best three only.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

/// Models not provided by this toolkit, listed under the table.
pub const NOT_IMPLEMENTED: &[&str] = &["survival SVM", "random survival forest", "convolutional survival network"];

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = csv_row(["model", "event", "concordance_error", "rank"]);
        for r in &self.rows {
            out += &csv_row([
                r.model.clone(),
                r.event.clone().unwrap_or_default(),
                r.concordance_error.map_or_else(|| "absent".to_string(), |e| format!("{e:.4}")),
                r.rank.map(|k| k.to_string()).unwrap_or_default(),
            ]);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:<12}  {:>17}  rank\n", "model", "event", "concordance_error");
        for r in &self.rows {
            let err = r.concordance_error.map_or_else(|| "absent".to_string(), |e| format!("{e:.4}"));
            let rank = r.rank.map(|k| format!("[{k}]")).unwrap_or_default();
            let event = r.event.as_deref().unwrap_or("-");
            out += &format!("{:<width$}  {:<12}  {:>17}  {rank}\n", r.model, event, err);
        }
        out += &format!("\nnot implemented: {}\n", NOT_IMPLEMENTED.join(", "));
        if !self.warnings.is_empty() {
            out += &format!("{} warning(s):\n", self.warnings.len());
            for w in &self.warnings {
                out += &format!("  {w}\n");
            }
        }
        out
    }
}

/// Collects `metrics.json` from `dir` and each of its subdirectories. Names in
/// `expected` matching neither a model nor a subdirectory get an absent row
/// and a warning.
pub fn report(config: &ExperimentConfig, dir: &Path, expected: &[String]) -> anyhow::Result<Report> {
    if !dir.is_dir() {
        bail!(UsageError(format!("metrics directory not found: {}", dir.display())));
    }
    let mut warnings = Vec::new();
    let mut found: Vec<MetricsFile> = Vec::new();
    let mut absent: Vec<String> = Vec::new();
    let mut found_dirs: Vec<String> = Vec::new();

    let mut candidates = vec![(dir.to_path_buf(), false)];
    let mut subdirs: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    candidates.extend(subdirs.into_iter().map(|p| (p, true)));
    for (d, is_sub) in candidates {
        let path = d.join("metrics.json");
        let name = || d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if !path.is_file() {
            if is_sub {
                warnings.push(format!("{}: no metrics.json", d.display()));
                absent.push(name());
            }
            continue;
        }
        match crate::config::read_json::<MetricsFile>(&path) {
            Ok(m) => {
                if is_sub {
                    found_dirs.push(name());
                }
                found.push(m);
            }
            Err(e) => {
                warnings.push(format!("{}: {e:#}", path.display()));
                absent.push(name());
            }
        }
    }
    for name in expected {
        let present = found.iter().any(|m| &m.model == name) || found_dirs.contains(name);
        if !present && !absent.contains(name) {
            warnings.push(format!("{name}: no metrics found"));
            absent.push(name.clone());
        }
    }

    let mut rows: Vec<ReportRow> = found
        .iter()
        .map(|m| ReportRow {
            model: m.model.clone(),
            event: Some(m.event.clone()),
            concordance_error: Some(m.concordance_error),
            rank: None,
        })
        .collect();
    let mut by_event: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_event.entry(r.event.clone().unwrap_or_default()).or_default().push(i);
    }
    for idx in by_event.values_mut() {
        idx.sort_by(|&a, &b| rows[a].concordance_error.partial_cmp(&rows[b].concordance_error).unwrap());
        for (rank, &i) in idx.iter().take(3).enumerate() {
            rows[i].rank = Some(rank + 1);
        }
    }
    let order = |m: &str| expected.iter().position(|e| e == m).unwrap_or(usize::MAX);
    rows.extend(absent.into_iter().map(|model| ReportRow { model, event: None, concordance_error: None, rank: None }));
    rows.sort_by(|a, b| (order(&a.model), &a.model, &a.event).cmp(&(order(&b.model), &b.model, &b.event)));
    Ok(Report { meta: Meta::new("report", config), rows, warnings })
}

pub fn report_cmd(config: &ExperimentConfig, dir: &Path, out: &OutDir, quiet: bool) -> anyhow::Result<()> {
    let r = report(config, dir, &config.report_models)?;
    out.write_json("report.json", &r)?;
    out.write_csv("report.csv", &r.meta, &r.to_csv())?;
    let text = r.to_text();
    out.write_text("report.txt", &text)?;
    if !quiet {
        print!("{text}");
    }
    if !r.warnings.is_empty() {
        eprintln!("report: {} warning(s)", r.warnings.len());
    }
    Ok(())
}
