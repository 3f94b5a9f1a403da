//! Command-line experiments over the `longsurv` library.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use artifacts::OutDir;
use config::{parse_batch_size, parse_list, parse_number, ExperimentConfig, ModelChoice};

/// Bad invocation or missing input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "longsurv", version, about = "Survival models on longitudinal records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment config; flags override its fields
    #[arg(long, value_name = "PATH", global = true)]
    pub config: Option<PathBuf>,
    /// Seed for data generation, splitting, initialization and sampling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR", global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress messages
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Encoded cohort file written by `simulate`
    #[arg(long, value_name = "PATH")]
    pub cohort: Option<PathBuf>,
    /// Split to use: train, val, test or all
    #[arg(long)]
    pub subset: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// linear, mlp, composite, weibull or gompertz
    #[arg(long)]
    pub model: Option<String>,
    /// Label used in metric files and reports
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Patients per minibatch, or `all`
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum number of observed days kept per patient, chosen at random
    /// each epoch; `none` keeps every observed day
    #[arg(long)]
    pub k: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and its ground-truth sidecar
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        censoring_rate: Option<f64>,
        /// none, product_of_first_two or sine_of_first
        #[arg(long)]
        nonlinear: Option<String>,
        #[arg(long)]
        tie_granularity: Option<u32>,
        #[arg(long)]
        cutoff_days: Option<u32>,
    },
    /// Fit a model and write its bundle and training log
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Concordance error and Brier curve of a bundle on a cohort split
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "PATH")]
        bundle: PathBuf,
        /// Comma-separated Brier horizons
        #[arg(long)]
        grid: Option<String>,
        /// harrell or uno
        #[arg(long)]
        concordance: Option<String>,
    },
    /// Test concordance error over a grid of batch sizes and k.
    ///
    /// k is the maximum number of observed days kept per patient. Cells whose
    /// k times B exceeds the observed days in the training split are left
    /// empty; a batch equal to the training split is labeled "(All)".
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated batch sizes; `all` is the whole training split
        #[arg(long)]
        batch_sizes: Option<String>,
        /// Comma-separated maximum observed days per patient
        #[arg(long)]
        k_values: Option<String>,
    },
    /// Permutation importance of each feature for a bundle
    Importance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "PATH")]
        bundle: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated feature names; default all
        #[arg(long)]
        features: Option<String>,
    },
    /// Comparison table from a directory of evaluation outputs
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding metrics.json files, directly or one per subdirectory
        #[arg(long, value_name = "DIR")]
        metrics_dir: PathBuf,
        /// Comma-separated model names expected in the table
        #[arg(long)]
        models: Option<String>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Simulate { common, .. }
            | Self::Train { common, .. }
            | Self::Evaluate { common, .. }
            | Self::Sweep { common, .. }
            | Self::Importance { common, .. }
            | Self::Report { common, .. } => common,
        }
    }
}

fn apply_data(cfg: &mut ExperimentConfig, data: &DataArgs) -> Result<(), UsageError> {
    if let Some(c) = &data.cohort {
        cfg.cohort = Some(c.clone());
    }
    if let Some(s) = &data.subset {
        cfg.subset = s.parse()?;
    }
    Ok(())
}

fn apply_train(cfg: &mut ExperimentConfig, t: &TrainArgs) -> Result<(), UsageError> {
    if let Some(m) = &t.model {
        cfg.model = ModelChoice::parse(m)?;
    }
    if let Some(n) = &t.name {
        cfg.name = Some(n.clone());
    }
    if let Some(e) = t.epochs {
        cfg.training.epochs = e;
    }
    if let Some(b) = &t.batch_size {
        cfg.training.batch_size = parse_batch_size(b)?;
    }
    if let Some(lr) = t.lr {
        cfg.training.learning_rate = lr;
    }
    if let Some(k) = &t.k {
        cfg.training.k_max_observations = match k.as_str() {
            "none" => None,
            n => Some(parse_number(n)?),
        };
    }
    Ok(())
}

fn enum_from_str<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, UsageError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| UsageError(format!("unknown {what} {s:?}")))
}

/// Effective configuration for a parsed command line.
pub fn resolve(command: &Command) -> Result<ExperimentConfig, UsageError> {
    let common = command.common();
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    match command {
        Command::Simulate { n, censoring_rate, nonlinear, tie_granularity, cutoff_days, .. } => {
            let syn = &mut cfg.synthetic;
            if let Some(n) = n {
                syn.n_patients = *n;
            }
            if let Some(c) = censoring_rate {
                syn.censoring_rate = *c;
            }
            if let Some(nl) = nonlinear {
                syn.nonlinear_risk = enum_from_str(nl, "nonlinear risk")?;
            }
            if let Some(g) = tie_granularity {
                syn.tie_granularity = *g;
            }
            if let Some(d) = cutoff_days {
                syn.cutoff_days = *d;
            }
        }
        Command::Train { data, train, .. } => {
            apply_data(&mut cfg, data)?;
            apply_train(&mut cfg, train)?;
        }
        Command::Evaluate { data, grid, concordance, .. } => {
            apply_data(&mut cfg, data)?;
            if let Some(g) = grid {
                cfg.grid = parse_list(g, parse_number)?;
            }
            if let Some(c) = concordance {
                cfg.concordance = enum_from_str(c, "concordance kind")?;
            }
        }
        Command::Sweep { data, train, batch_sizes, k_values, .. } => {
            apply_data(&mut cfg, data)?;
            apply_train(&mut cfg, train)?;
            if let Some(b) = batch_sizes {
                cfg.sweep.batch_sizes = parse_list(b, parse_batch_size)?;
            }
            if let Some(k) = k_values {
                cfg.sweep.k_values = parse_list(k, parse_number)?;
            }
        }
        Command::Importance { data, repeats, features, .. } => {
            apply_data(&mut cfg, data)?;
            if let Some(r) = repeats {
                cfg.importance.repeats = *r;
            }
            if let Some(f) = features {
                cfg.importance.features = parse_list(f, |s| Ok(s.to_string()))?;
            }
        }
        Command::Report { models, .. } => {
            if let Some(m) = models {
                cfg.report_models = parse_list(m, |s| Ok(s.to_string()))?;
            }
        }
    }
    cfg.propagate_seed();
    cfg.validate()?;
    Ok(cfg)
}

/// Effective configuration for a full argument list, program name first.
pub fn config_for<I, T>(args: I) -> anyhow::Result<ExperimentConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Ok(resolve(&Cli::try_parse_from(args)?.command)?)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli.command)?;
    let quiet = cli.command.common().quiet;
    let out = OutDir::create(&cfg.out, quiet)?;
    match &cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg, &out, quiet),
        Command::Train { .. } => commands::train_cmd(&cfg, &out, quiet),
        Command::Evaluate { bundle, .. } => commands::evaluate_cmd(&cfg, bundle, &out, quiet),
        Command::Sweep { .. } => commands::sweep_cmd(&cfg, &out, quiet),
        Command::Importance { bundle, .. } => commands::importance_cmd(&cfg, bundle, &out, quiet),
        Command::Report { metrics_dir, .. } => commands::report_cmd(&cfg, metrics_dir, &out, quiet),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                2
            } else {
                1
            }
        }
    }
}
