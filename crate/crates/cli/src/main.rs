//! `carprep`: generate, validate, describe, refine and evaluate transcript data.
//!
//! Exit codes: 0 success, 1 data or model failure, 2 usage or configuration failure.

mod commands;
mod config;
mod render;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carprep_core::forest::AucAveraging;
use carprep_core::ingest::MissingPolicy;
use carprep_core::stats::TTestVariant;
use carprep_core::MarkField;

use config::{Format, RunConfig, TTestSamples};

/// A usage or configuration problem; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "carprep", version, about = "Coursework assessment ratio analysis of student transcripts")]
struct Cli {
    /// Seed for every random draw in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cohort CSV and the cohort spec JSON next to it.
    Generate(GenerateArgs),
    /// Check a transcript CSV and report every issue.
    Validate(ValidateArgs),
    /// Mean marks per department and assessment method, with t-tests.
    Stats(StatsArgs),
    /// Fit the CAR model and append refined module marks.
    Refine(RefineArgs),
    /// Predict degree bands with and without mean CAR as a feature.
    Evaluate(EvaluateArgs),
    /// Validate, describe, refine and evaluate in one pass.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Student count for every department.
    #[arg(long)]
    students: Option<usize>,
    /// Where to write the cohort spec; defaults to `<output stem>.spec.json`.
    #[arg(long, value_name = "PATH")]
    spec_output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InputArg {
    /// Transcript CSV; falls back to `input` in the config.
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArg,
    /// `drop` removes records missing a weighted component mark; `flag` keeps them.
    #[arg(long)]
    missing_policy: Option<MissingPolicy>,
    /// Also write the accepted records as a canonical CSV.
    #[arg(long, value_name = "PATH")]
    cleaned_output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArg,
    /// Use the published department averages instead of an input file.
    #[arg(long, conflicts_with = "input")]
    from_fixture: bool,
    /// `pooled` or `welch`.
    #[arg(long)]
    t_test: Option<TTestVariant>,
    #[arg(long, value_enum)]
    samples: Option<TTestSamples>,
}

#[derive(Args, Debug, Default)]
struct RefineFlags {
    /// Use the published coefficients instead of fitting.
    #[arg(long)]
    published_coefficients: bool,
    /// Fit one model per department.
    #[arg(long)]
    per_department: bool,
    /// Clamp refined marks to [0, 100].
    #[arg(long)]
    clamp: bool,
}

#[derive(Args, Debug)]
struct RefineArgs {
    #[command(flatten)]
    input: InputArg,
    #[command(flatten)]
    flags: RefineFlags,
    /// Where to write the fitted models; defaults to `<output stem>.model.json`.
    #[arg(long, value_name = "PATH")]
    model_output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EvalFlags {
    /// `raw` or `refined` module marks as features.
    #[arg(long)]
    mark_field: Option<MarkField>,
    /// Number of trees in the forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Features tried per split; defaults to the square root of the feature count.
    #[arg(long)]
    max_features: Option<usize>,
    /// Minimum samples per leaf.
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Train every tree on the full training set.
    #[arg(long)]
    no_bootstrap: bool,
    /// Share of students held out for testing.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Multiclass AUC averaging: `weighted` or `macro`.
    #[arg(long)]
    averaging: Option<AucAveraging>,
    /// Evaluate this many consecutive seeds and report the median AUC delta.
    #[arg(long)]
    repeats: Option<usize>,
    /// Years whose averages are features, e.g. `1,2`.
    #[arg(long, value_delimiter = ',')]
    predictor_years: Option<Vec<u8>>,
    /// Year whose average sets the predicted band.
    #[arg(long)]
    target_year: Option<u8>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArg,
    /// Load the published confusion tables instead of training.
    #[arg(long, conflicts_with = "input")]
    from_fixture: bool,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    input: InputArg,
    #[arg(long)]
    missing_policy: Option<MissingPolicy>,
    #[command(flatten)]
    refine: RefineFlags,
    #[command(flatten)]
    eval: EvalFlags,
}

impl RefineFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.refine.published_coefficients |= self.published_coefficients;
        cfg.refine.per_department |= self.per_department;
        cfg.refine.clamp |= self.clamp;
    }
}

impl EvalFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.mark_field {
            cfg.mark_field = v;
        }
        if let Some(v) = self.trees {
            cfg.forest.tree_count = v;
        }
        if self.max_features.is_some() {
            cfg.forest.max_features = self.max_features;
        }
        if let Some(v) = self.min_leaf {
            cfg.forest.min_leaf = v;
        }
        if self.no_bootstrap {
            cfg.forest.bootstrap = false;
        }
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = self.averaging {
            cfg.averaging = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = &self.predictor_years {
            cfg.predictor_years = v.clone();
        }
        if let Some(v) = self.target_year {
            cfg.target_year = v;
        }
    }
}

fn set_input(cfg: &mut RunConfig, arg: &InputArg) {
    if let Some(p) = &arg.input {
        cfg.input = Some(p.clone());
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(o) = cli.output {
        cfg.output = Some(o);
    }
    match cli.command {
        Command::Generate(a) => {
            if let Some(n) = a.students {
                for d in &mut cfg.cohort.departments {
                    d.student_count = n;
                }
            }
            commands::generate(&cfg, a.spec_output.as_deref())
        }
        Command::Validate(a) => {
            set_input(&mut cfg, &a.input);
            if let Some(p) = a.missing_policy {
                cfg.missing_policy = p;
            }
            commands::validate(&cfg, a.cleaned_output.as_deref())
        }
        Command::Stats(a) => {
            set_input(&mut cfg, &a.input);
            if let Some(v) = a.t_test {
                cfg.t_test = v;
            }
            if let Some(v) = a.samples {
                cfg.t_test_samples = v;
            }
            commands::stats(&cfg, a.from_fixture)
        }
        Command::Refine(a) => {
            set_input(&mut cfg, &a.input);
            a.flags.apply(&mut cfg);
            commands::refine(&cfg, a.model_output.as_deref())
        }
        Command::Evaluate(a) => {
            set_input(&mut cfg, &a.input);
            a.eval.apply(&mut cfg);
            commands::evaluate(&cfg, a.from_fixture)
        }
        Command::Report(a) => {
            set_input(&mut cfg, &a.input);
            if let Some(p) = a.missing_policy {
                cfg.missing_policy = p;
            }
            a.refine.apply(&mut cfg);
            a.eval.apply(&mut cfg);
            commands::report(&cfg)
        }
    }
}

/// 2 for usage, configuration and unreadable-input failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use carprep_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Csv(_) | E::Json(_) | E::Schema(_) | E::Config(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
