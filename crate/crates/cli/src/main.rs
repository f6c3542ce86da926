//! `equiscalar`: features, group samples, physics demos, index-expression
//! checks, network training and symmetry certification from the shell.
//!
//! Structured output goes to stdout as JSON, diagnostics to stderr. Exit
//! status is 0 on success, 1 when a check or certification fails, 2 on
//! usage or input errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Library(#[from] equiscalar::Error),
}

/// Whether the command's check passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    Failed,
}

#[derive(Debug, Parser)]
#[command(name = "equiscalar", version, about = "Invariant scalars for equivariant functions")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gram matrix, subdeterminants and the wrap-around band of a tuple.
    ///
    /// Input: JSON `{"d": 3, "vectors": [[..], ..], "roles": ["free", ..]}`
    /// or CSV (one vector per row, optional `#roles: p,f,..` line).
    /// Output: `{"metric", "n", "gram": [row-major], "subdets": [{"indices",
    /// "value"}], "omega": {"n", "d", "entries": [{"i", "j", "value"}]}}`.
    Features(FeaturesArgs),
    /// Sample a group element and print it as JSON.
    SampleGroup(SampleGroupArgs),
    /// Physics targets evaluated on a particle file.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Check or evaluate index-notation expressions.
    #[command(subcommand)]
    Einsum(EinsumCommand),
    /// Train the message passing network on charged n-body forces.
    Train(TrainArgs),
    /// Randomized symmetry certification of a target function.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    #[value(alias = "euclidean")]
    Euclid,
    Minkowski,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "euclid")]
    pub metric: MetricArg,
    /// Include the d x d subdeterminants (needs n >= d).
    #[arg(long)]
    pub subdets: bool,
    /// Include the wrap-around band of half-width D.
    #[arg(long, value_name = "D")]
    pub omega: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// `csv` prints the Gram matrix rows only.
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    O,
    So,
    Lorentz,
    E,
    Poincare,
    Perm,
    T,
}

#[derive(Debug, Args)]
pub struct SampleGroupArgs {
    #[arg(long, value_enum)]
    pub group: GroupArg,
    /// Ambient dimension, or the tuple length for `perm`.
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print a list of this many elements instead of one.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = equiscalar::group::DEFAULT_RAPIDITY_MAX)]
    pub rapidity_max: f64,
}

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    /// Total energy of a particle system.
    Energy(DemoArgs),
    /// Electromagnetic forces in both closed forms.
    Emforce(DemoArgs),
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// JSON `{"constants": {"G", "k", "c"}, "particles": [{"mass", "charge",
    /// "position", "velocity"}, ..]}`.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Also measure residuals under this many random E(3) x S_n elements.
    #[arg(long, value_name = "N")]
    pub check_equivariance: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Plain,
    MetricAware,
}

#[derive(Debug, Subcommand)]
pub enum EinsumCommand {
    /// Report summation-rule violations; exit 1 when invalid.
    Check {
        expr: String,
        #[arg(long, value_enum, default_value = "euclid")]
        metric: MetricArg,
        #[arg(long, value_enum, default_value = "plain")]
        mode: ModeArg,
        /// Dimension used for the eps arity rule.
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Evaluate with tensors bound from a JSON object of nested arrays.
    Eval {
        expr: String,
        #[arg(long, value_name = "FILE")]
        bind: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long, value_enum, default_value = "euclid")]
        metric: MetricArg,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML with keys n_particles, n_samples, layers, widths, activation, lr,
    /// epochs, batch, seed, edge_channels, mode, readout, val_fraction,
    /// output_scale, equivariance_trials.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// CSV with columns epoch, train_mse, val_mse, equivariance_residual.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// gram, energy, emforce, model:FILE or einsum:EXPR.
    #[arg(long)]
    pub target: String,
    /// JSON symmetry spec, or a list of specs certified jointly. Each spec:
    /// `{"family", "dim", "slots", "layout": ["position"|"free"], "scalars":
    /// ["positive"|"sign"|"gaussian"], "output": "scalar-invariant" |
    /// "vector-equivariant" | "vector-translation-invariant" |
    /// "pseudo-vector" | "tensor-equivariant", "per_slot", "rapidity_max"}`.
    /// Defaults to a spec matching the target.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Pass threshold (default 1e-9, or 1e-8 for Lorentz/Poincaré).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli.command, cli.verbose) {
        Ok(Status::Passed) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
