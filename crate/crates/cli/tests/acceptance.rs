//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::fs;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use tempfile::TempDir;

use longsurv::cohort::{generate_synthetic, NonlinearRisk, SyntheticCohort, SyntheticConfig};
use longsurv::cox::{
    batch_counts, efron_nll, efron_nll_gradient, estimate_baseline_hazard, RiskSetIndex, Selection, StratifiedSampler,
};
use longsurv::metrics::{brier_score_from, concordance_error, permutation_importance, FeatureSelector, KaplanMeier};
use longsurv::model::{score_all, InputShape, ModelKind, SurvivalPredictor};
use longsurv::parametric::Family;
use longsurv::{seed, Cohort, ParametricModel, TrainingConfig};
use longsurv_cli::commands::fit;
use longsurv_cli::config::{ExperimentConfig, ModelChoice};
use longsurv_cli::data::{FittedModel, ModelBundle, Splits};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Random times on `1..=10` rounded up to multiples of `granularity`.
fn random_cohort(rng: &mut impl Rng, n: usize, granularity: u32) -> (Vec<u32>, Vec<bool>) {
    let times = (0..n).map(|_| rng.gen_range(1..=10u32).div_ceil(granularity) * granularity).collect();
    let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    events[rng.gen_range(0..n)] = true;
    (times, events)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(2..=20);
        let (times, events) = random_cohort(&mut rng, n, [1, 2, 3][case % 3]);
        let index = RiskSetIndex::new(&times, &events).unwrap();
        let risks: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let grad = efron_nll_gradient(&risks, &index).unwrap();
        for j in 0..n {
            let mut up = risks.clone();
            let mut down = risks.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (efron_nll(&up, &index).unwrap() - efron_nll(&down, &index).unwrap()) / (2.0 * h);
            worst = worst.max(rel_err(grad[j], fd));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-6 && secs < 10.0, format!("max relative error {worst:.2e}"))
}

/// Exact partial likelihood without ties.
fn exact_cox_nll(times: &[u32], events: &[bool], risks: &[f64]) -> f64 {
    (0..times.len())
        .filter(|&i| events[i])
        .map(|i| {
            let s: f64 = (0..times.len()).filter(|&j| times[j] >= times[i]).map(|j| risks[j].exp()).sum();
            s.ln() - risks[i]
        })
        .sum()
}

fn criterion_2() -> Outcome {
    let mut rng = seed::rng(102);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=30);
        let mut times: Vec<u32> = (1..=n as u32).map(|t| 3 * t).collect();
        times.shuffle(&mut rng);
        let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        events[0] = true;
        let risks: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let got = efron_nll(&risks, &RiskSetIndex::new(&times, &events).unwrap()).unwrap();
        worst = worst.max((got - exact_cox_nll(&times, &events, &risks)).abs());
    }
    outcome(worst < 1e-12, format!("max absolute difference {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let nll = |times: &[u32], events: &[bool]| {
        efron_nll(&vec![0.0; times.len()], &RiskSetIndex::new(times, events).unwrap()).unwrap()
    };
    let increments = |times: &[u32], events: &[bool]| -> Vec<f64> {
        let index = RiskSetIndex::new(times, events).unwrap();
        estimate_baseline_hazard(&vec![0.0; times.len()], &index).unwrap().steps().iter().map(|s| s.increment).collect()
    };
    let one = nll(&[1, 2], &[true, false]);
    let tied = nll(&[1, 1, 2], &[true, true, false]);
    let steps = increments(&[1, 2, 3], &[true; 3]);
    let tied_step = increments(&[1, 1, 2], &[true, true, false]);
    let pass = (one - 2f64.ln()).abs() < 1e-12
        && (tied - 6f64.ln()).abs() < 1e-12
        && steps == [1.0 / 3.0, 0.5, 1.0]
        && tied_step.len() == 1
        && (tied_step[0] - 5.0 / 6.0).abs() < 1e-15;
    outcome(pass, format!("ln 2 -> {one:.15}, ln 6 -> {tied:.15}, increments {steps:?}, tied {tied_step:?}"))
}

fn criterion_4() -> Outcome {
    let mut rng = seed::rng(104);
    let mut worst = 0.0f64;
    let mut mismatched_times = 0;
    for case in 0..100 {
        let n = rng.gen_range(1..=40);
        let (times, events) = random_cohort(&mut rng, n, [1, 2, 3][case % 3]);
        let curve =
            estimate_baseline_hazard(&vec![0.0; n], &RiskSetIndex::new(&times, &events).unwrap()).unwrap();
        let mut event_times: Vec<u32> = times.iter().zip(&events).filter(|p| *p.1).map(|p| *p.0).collect();
        event_times.sort_unstable();
        event_times.dedup();
        if event_times.len() != curve.steps().len() {
            mismatched_times += 1;
            continue;
        }
        for (step, &t) in curve.steps().iter().zip(&event_times) {
            let at_risk = times.iter().filter(|&&s| s >= t).count();
            let d = times.iter().zip(&events).filter(|&(&s, &e)| e && s == t).count();
            let direct: f64 = (0..d).map(|l| 1.0 / (at_risk - l) as f64).sum();
            if step.time != t {
                mismatched_times += 1;
            }
            worst = worst.max((step.increment - direct).abs());
        }
    }
    outcome(worst < 1e-12 && mismatched_times == 0, format!("max difference {worst:.2e}"))
}

fn synthetic(n: usize, seed: u64, coefficients: &[f64], nonlinear: NonlinearRisk) -> SyntheticCohort {
    generate_synthetic(&SyntheticConfig {
        n_patients: n,
        seed,
        true_linear_coefficients: coefficients.to_vec(),
        nonlinear_risk: nonlinear,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn experiment(cohort: &Cohort, seed: u64, model: ModelChoice, training: TrainingConfig) -> (ExperimentConfig, Splits) {
    let mut cfg = ExperimentConfig { seed, model, training, ..ExperimentConfig::default() };
    cfg.propagate_seed();
    let splits = Splits::new(cohort.clone(), &cfg).unwrap();
    (cfg, splits)
}

fn test_error(bundle: &ModelBundle, cohort: &Cohort) -> f64 {
    let prepared = bundle.prepare(cohort).unwrap();
    let risks = score_all(&bundle.fitted, &prepared.inputs()).unwrap();
    concordance_error(&prepared.times(), &prepared.events(), &risks).unwrap().error
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let beta = [1.0, -0.5];
    let syn = synthetic(2000, 0, &beta, NonlinearRisk::None);
    let training = TrainingConfig {
        batch_size: None,
        learning_rate: 0.05,
        epochs: 30,
        minibatches_per_epoch: 20,
        k_max_observations: None,
        selection: Selection::LastEpoch,
        ..TrainingConfig::default()
    };
    let (cfg, splits) = experiment(&syn.cohort, 0, ModelChoice::Cox(ModelKind::Linear), training);
    let bundle = fit(&cfg, &splits).unwrap();
    let FittedModel::Cox(m) = &bundle.fitted else { unreachable!() };
    let w = m.risk_model.params.block("out.0.weight").unwrap();
    let estimate = [w[0], w[1]];

    let model_error = test_error(&bundle, &splits.test);
    let synth_cfg = SyntheticConfig { true_linear_coefficients: beta.to_vec(), ..SyntheticConfig::default() };
    let true_risks: Vec<f64> = splits
        .test
        .patients()
        .iter()
        .map(|p| synth_cfg.true_risk(&[p.longitudinal.value(0, 0), p.longitudinal.value(0, 1)]))
        .collect();
    let true_error = concordance_error(&splits.test.times(), &splits.test.events(), &true_risks).unwrap().error;
    let secs = start.elapsed().as_secs_f64();

    let recovered = estimate.iter().zip(beta).all(|(b, t)| (b - t).abs() <= 0.1);
    let close = (model_error - true_error).abs() <= 0.02;
    outcome(
        recovered && close && secs < 60.0,
        format!(
            "beta = ({:.3}, {:.3}); test error {model_error:.4} vs true-risk {true_error:.4}",
            estimate[0], estimate[1]
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn criterion_6() -> Outcome {
    let mut gaps = Vec::new();
    for s in 0..3 {
        let syn = synthetic(2000, s, &[1.0, -0.5], NonlinearRisk::ProductOfFirstTwo);
        let mut errors = [0.0; 2];
        for (e, model) in errors.iter_mut().zip([ModelChoice::Cox(ModelKind::Linear), ModelChoice::Cox(ModelKind::mlp())]) {
            let (cfg, splits) = experiment(&syn.cohort, s, model, TrainingConfig::default());
            *e = test_error(&fit(&cfg, &splits).unwrap(), &splits.test);
        }
        gaps.push(errors[0] - errors[1]);
    }
    let m = median(gaps.clone());
    outcome(m >= 0.05, format!("linear minus mlp test error per seed {gaps:.4?}, median {m:.4}"))
}

fn criterion_7() -> Outcome {
    let syn = synthetic(200, 0, &[1.0, -0.5], NonlinearRisk::None);
    let medians: Vec<f64> = [Some(20), Some(40), None]
        .into_iter()
        .map(|b| {
            let errors = (0..3)
                .map(|s| {
                    let (mut cfg, splits) = experiment(
                        &syn.cohort,
                        0,
                        ModelChoice::Cox(ModelKind::Linear),
                        TrainingConfig { batch_size: b, ..TrainingConfig::default() },
                    );
                    cfg.training.seed = s;
                    test_error(&fit(&cfg, &splits).unwrap(), &splits.test)
                })
                .collect();
            median(errors)
        })
        .collect();
    let spread = medians.iter().cloned().fold(f64::MIN, f64::max) - medians.iter().cloned().fold(f64::MAX, f64::min);
    outcome(spread <= 0.02, format!("median test error for B = 20, 40, full: {medians:.4?}; spread {spread:.4}"))
}

fn criterion_8() -> Outcome {
    let mut rng = seed::rng(108);
    let mut violations = 0;
    let mut batches = 0;
    for &(n_ev, n_ce) in &[(50, 50), (10, 90), (1, 99), (90, 10), (5, 195), (30, 12)] {
        let events: Vec<bool> = {
            let mut e: Vec<bool> = (0..n_ev + n_ce).map(|i| i < n_ev).collect();
            e.shuffle(&mut rng);
            e
        };
        for &b in &[2, 8, 20, 40] {
            let f = n_ev as f64 / (n_ev + n_ce) as f64;
            let mut want_ev = ((b as f64 * f).round() as usize).max(1).min(n_ev);
            if b - want_ev > n_ce {
                want_ev = b - n_ce;
            }
            assert_eq!(batch_counts(b, n_ev, n_ce), (want_ev, b - want_ev));
            let sampler = StratifiedSampler::new(&events, b).unwrap();
            for _ in 0..10_000 / 24 + 1 {
                let batch = sampler.sample(&mut rng);
                batches += 1;
                let ev = batch.iter().filter(|&&i| events[i]).count();
                let mut unique = batch.clone();
                unique.dedup();
                if batch.len() != b || ev != want_ev || ev < 1 || unique.len() != b {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0 && batches >= 10_000, format!("{batches} batches, {violations} violations"))
}

fn criterion_9() -> Outcome {
    let mut rng = seed::rng(109);
    let mut count_mismatch = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=8);
        let times: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        let risks: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..4))).collect();
        let (mut conc, mut disc, mut ties) = (0u64, 0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                if events[i] && times[i] < times[j] {
                    if risks[i] > risks[j] {
                        conc += 1;
                    } else if risks[i] < risks[j] {
                        disc += 1;
                    } else {
                        ties += 1;
                    }
                }
            }
        }
        match concordance_error(&times, &events, &risks) {
            Ok(r) => {
                let err = (disc as f64 + 0.5 * ties as f64) / (conc + disc + ties) as f64;
                if (r.concordant, r.discordant, r.risk_ties) != (conc, disc, ties) || r.error != err {
                    count_mismatch += 1;
                }
            }
            Err(_) if conc + disc + ties == 0 => {}
            Err(_) => count_mismatch += 1,
        }
    }
    let no_censoring = KaplanMeier::censoring(&[1; 4], &[true; 4]);
    let brier = brier_score_from(&[1, 2, 3, 4], &[true; 4], &[0.1, 0.4, 0.8, 0.9], 2.0, &no_censoring);
    let mut worst_reversal = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=30);
        let times: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=10)).collect();
        let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        events[0] = true;
        let risks: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let neg: Vec<f64> = risks.iter().map(|r| -r).collect();
        if let (Ok(a), Ok(b)) = (concordance_error(&times, &events, &risks), concordance_error(&times, &events, &neg)) {
            worst_reversal = worst_reversal.max((a.error + b.error - 1.0).abs());
        }
    }
    outcome(
        count_mismatch == 0 && (brier - 0.055).abs() < 1e-12 && worst_reversal < 1e-12,
        format!("{count_mismatch} count mismatches in 500, Brier {brier:.15}, reversal residual {worst_reversal:.1e}"),
    )
}

/// `int_0^t f`, by composite Simpson after `u = t s^2`, which tames the
/// `u^(k-1)` endpoint behaviour of Weibull hazards.
fn integrate(f: impl Fn(f64) -> f64, t: f64, intervals: usize) -> f64 {
    let g = |s: f64| f(t * s * s) * 2.0 * t * s;
    let h = 1.0 / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (g(0.0) + inner + g(1.0)) * h / 3.0
}

fn criterion_10() -> Outcome {
    let mut failures = Vec::new();
    for m in 0..100u64 {
        let syn = generate_synthetic(&SyntheticConfig {
            n_patients: 40,
            seed: m,
            censoring_rate: 0.5,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let kind = if m % 2 == 0 { ModelKind::Linear } else { ModelKind::Mlp { hidden: vec![8] } };
        let training = TrainingConfig { batch_size: Some(10), epochs: 2, minibatches_per_epoch: 3, ..TrainingConfig::default() };
        let (cfg, splits) = experiment(&syn.cohort, m, ModelChoice::Cox(kind), training);
        let bundle = fit(&cfg, &splits).unwrap();
        for x in syn.cohort.inputs() {
            if bundle.fitted.survival(&x, 0.0).unwrap() != 1.0 {
                failures.push(format!("model {m}: S(0) != 1"));
            }
            let mut prev = 1.0;
            for g in 0..200 {
                let s = bundle.fitted.survival(&x, g as f64 * 0.06).unwrap();
                if s > prev || !(0.0..=1.0).contains(&s) {
                    failures.push(format!("model {m}: S increases at grid point {g}"));
                }
                prev = s;
            }
        }
    }
    let mut rng = seed::rng(110);
    let syn = synthetic(20, 0, &[1.0, -0.5], NonlinearRisk::None);
    let shape = InputShape::from_schema(syn.cohort.schema(), syn.cohort.event_spec().days());
    let mut worst_quadrature = 0.0f64;
    for case in 0..40 {
        let family = if case % 2 == 0 { Family::Weibull } else { Family::Gompertz };
        let model = ParametricModel {
            family,
            shape: match family {
                Family::Weibull => rng.gen_range(1.0..3.0),
                Family::Gompertz => rng.gen_range(-0.3..0.3),
            },
            rate: match family {
                Family::Weibull => rng.gen_range(2.0..10.0),
                Family::Gompertz => rng.gen_range(0.02..0.3),
            },
            coefficients: (0..shape.flat_dim()).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            input: shape.clone(),
        };
        let x = &syn.cohort.inputs()[case % 20];
        let lp = model.linear_predictor(x).unwrap();
        for t in [0.5, 2.0, 7.5] {
            let integral = integrate(|u| model.baseline_hazard(u) * lp.exp(), t, 20_000);
            let s = model.survival(x, t).unwrap();
            worst_quadrature = worst_quadrature.max((s - (-integral).exp()).abs());
        }
        if model.survival(x, 0.0).unwrap() != 1.0 {
            failures.push(format!("parametric case {case}: S(0) != 1"));
        }
    }
    if worst_quadrature >= 1e-6 {
        failures.push(format!("quadrature difference {worst_quadrature:.2e}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "100 trained models x 40 patients x 200 grid points; parametric quadrature difference {worst_quadrature:.1e}{}",
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["longsurv"];
    argv.extend_from_slice(args);
    argv.push("--quiet");
    longsurv_cli::main_with_args(argv)
}

fn criterion_11() -> Outcome {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let config = root.join("config.json");
    fs::write(&config, r#"{"synthetic": {"n_patients": 200}, "model": {"kind": "mlp", "hidden": [16]}}"#).unwrap();
    let cfg = config.to_str().unwrap();
    let (a, b) = (root.join("a"), root.join("b"));
    let mut codes = vec![
        cli(&["train", "--config", cfg, "--seed", "4", "--out", a.to_str().unwrap()]),
        cli(&["train", "--config", cfg, "--seed", "4", "--out", b.to_str().unwrap()]),
    ];
    let identical = fs::read(a.join("model.json")).unwrap() == fs::read(b.join("model.json")).unwrap();

    let sweep = root.join("sweep");
    codes.push(cli(&[
        "sweep", "--config", cfg, "--model", "linear", "--batch-sizes", "20,40,all,500", "--k-values", "1,2,4",
        "--out", sweep.to_str().unwrap(),
    ]));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(sweep.join("sweep.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    let shape_ok = header == ["batch_size", "k=1", "k=2", "k=4"]
        && rows.len() == 4
        && rows.iter().all(|r| r.len() == 4)
        && rows[0][0] == "20"
        && rows[2][0] == "120 (All)"
        && rows[3] == ["500", "", "", ""]
        && rows[2][1].parse::<f64>().is_ok()
        && rows[2][2].is_empty()
        && rows.iter().flat_map(|r| &r[1..]).all(|c| c.is_empty() || c.parse::<f64>().is_ok());
    outcome(
        codes.iter().all(|&c| c == 0) && identical && shape_ok,
        format!("bundles identical: {identical}; sweep rows {:?}", rows.iter().map(|r| r.join(",")).collect::<Vec<_>>()),
    )
}

fn criterion_12() -> Outcome {
    let mut per_seed = Vec::new();
    for s in 0..3 {
        let syn = synthetic(2000, s, &[1.0, -0.5, 0.0], NonlinearRisk::None);
        let (cfg, splits) = experiment(&syn.cohort, s, ModelChoice::Cox(ModelKind::Linear), TrainingConfig::default());
        let bundle = fit(&cfg, &splits).unwrap();
        let test = bundle.prepare(&splits.test).unwrap();
        let features = [FeatureSelector::Longitudinal(0), FeatureSelector::Longitudinal(2)];
        let report = permutation_importance(&bundle.fitted, &test, &features, 10, s).unwrap();
        per_seed.push((report.features[0].mean, report.features[1].mean));
    }
    outcome(
        per_seed.iter().all(|(informative, noise)| informative > noise),
        format!(
            "mean increase (informative, noise) per seed: {}",
            per_seed.iter().map(|(a, b)| format!("({a:.4}, {b:.4})")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Efron gradient matches finite differences", criterion_1),
        ("no-tie Efron equals exact Cox likelihood", criterion_2),
        ("hand-value fixtures", criterion_3),
        ("zero-risk baseline is Nelson-Aalen", criterion_4),
        ("linear parameter recovery", criterion_5),
        ("mlp beats linear on product risk", criterion_6),
        ("mini-batch size robustness", criterion_7),
        ("stratified sampling exactness", criterion_8),
        ("metric oracles", criterion_9),
        ("survival-function laws", criterion_10),
        ("end-to-end determinism and sweep table", criterion_11),
        ("permutation importance direction", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {verdict}: {name} ({}; {:.1} s)", i + 1, o.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
