//! Command-line front end: certificates, recovery round trips and a
//! simulation harness over random models.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

mod commands;
mod simulate;

pub use simulate::{simulate, Family, SimulationConfig, SimulationReport, TrialResult};

/// Exit code for success or a certificate that holds.
pub const EXIT_OK: i32 = 0;
/// Exit code for "not certified" or an unmet recovery precondition.
pub const EXIT_NEGATIVE: i32 = 1;
/// Exit code for usage and input errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] latentid::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use latentid::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Model(e) => match e {
                E::Parse(_)
                | E::InvalidModel(_)
                | E::DimensionMismatch(_)
                | E::EmptyInput
                | E::MismatchedRows(..)
                | E::NonFiniteEntries
                | E::BadPartition(_)
                | E::NotThreeVariables(_)
                | E::TooFewVariables(_)
                | E::NonMonotoneCdf(_)
                | E::NotStationary
                | E::NonUniqueStationary
                | E::TooLarge { .. }
                | E::TooManyRows { .. } => EXIT_USAGE,
                _ => EXIT_NEGATIVE,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "latentid", version, about = "Identifiability certificates and exact recovery for latent-structure models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Master seed for random draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for residuals and recovery checks.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Relative tolerance for numerical rank.
    #[arg(long, default_value_t = latentid::tensor::RANK_TOL)]
    pub rank_tol: f64,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kruskal certificate for a latent-class model file.
    CertifyLc {
        #[command(flatten)]
        args: ModelArgs,
        /// Grouping of variables, 1-based, e.g. `1,2/3/4,5`.
        #[arg(long)]
        tripartition: Option<String>,
    },
    /// Best tripartition for generic parameters of M(r; kappas).
    SearchTripartition {
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        kappas: Option<Vec<usize>>,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Number of variables with `kappa` states that suffices for `r` classes.
    Bound {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        kappa: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Recover a latent-class model from its exact joint table.
    RecoverLc {
        #[command(flatten)]
        args: ModelArgs,
        #[arg(long)]
        tripartition: Option<String>,
    },
    /// Smallest window half-length for an HMM with r states and kappa symbols.
    HmmWindow {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        kappa: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Kruskal certificate for the window tensor of an HMM file.
    HmmCertify {
        #[command(flatten)]
        args: ModelArgs,
        /// Window half-length; defaults to the smallest sufficient one.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Recover an HMM from its exact window tensor.
    HmmRecover {
        #[command(flatten)]
        args: ModelArgs,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Certificate for a random graph mixture on an m x m node lattice.
    GraphCertify {
        #[command(flatten)]
        args: ModelArgs,
        #[arg(long, default_value_t = 4)]
        m: usize,
    },
    /// Read two-state graph parameters back from a hidden-order oracle.
    GraphExtract {
        #[command(flatten)]
        args: ModelArgs,
        /// Number of nodes.
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
    /// Select cut points for every variate of a nonparametric mixture.
    NonparamCuts {
        #[command(flatten)]
        args: ModelArgs,
    },
    /// Recover weights and component CDFs of a nonparametric mixture.
    NonparamRecover {
        #[command(flatten)]
        args: ModelArgs,
        /// Query points per variate.
        #[arg(long, default_value_t = 20)]
        queries: usize,
    },
    /// Round trips over random models.
    Simulate {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 2)]
        r: usize,
        /// States per variable (latent-class).
        #[arg(long, value_delimiter = ',')]
        kappas: Option<Vec<usize>>,
        /// Symbols (hmm).
        #[arg(long, default_value_t = 2)]
        kappa: usize,
        /// Window half-length (hmm); defaults to the smallest sufficient one.
        #[arg(long)]
        k: Option<usize>,
        /// Nodes (graph).
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Block sizes of the variates (nonparametric).
        #[arg(long, value_delimiter = ',')]
        block_dims: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    LatentClass,
    Hmm,
    Graph,
    Nonparametric,
}

/// Structured report written with `--json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub result: Value,
    pub errors: Vec<String>,
}

/// What a command produced before formatting.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub text: String,
    pub result: Value,
    pub errors: Vec<String>,
}

impl Outcome {
    pub(crate) fn new(code: i32, text: impl Into<String>, result: Value) -> Self {
        Self { code, text: text.into(), result, errors: Vec::new() }
    }
}

/// Captured process output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CertifyLc { .. } => "certify-lc",
            Command::SearchTripartition { .. } => "search-tripartition",
            Command::Bound { .. } => "bound",
            Command::RecoverLc { .. } => "recover-lc",
            Command::HmmWindow { .. } => "hmm-window",
            Command::HmmCertify { .. } => "hmm-certify",
            Command::HmmRecover { .. } => "hmm-recover",
            Command::GraphCertify { .. } => "graph-certify",
            Command::GraphExtract { .. } => "graph-extract",
            Command::NonparamCuts { .. } => "nonparam-cuts",
            Command::NonparamRecover { .. } => "nonparam-recover",
            Command::Simulate { .. } => "simulate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CertifyLc { args, .. }
            | Command::RecoverLc { args, .. }
            | Command::HmmCertify { args, .. }
            | Command::HmmRecover { args, .. }
            | Command::GraphCertify { args, .. }
            | Command::GraphExtract { args, .. }
            | Command::NonparamCuts { args }
            | Command::NonparamRecover { args, .. } => &args.common,
            Command::SearchTripartition { common, .. }
            | Command::Bound { common, .. }
            | Command::HmmWindow { common, .. }
            | Command::Simulate { common, .. } => common,
        }
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code with everything that would be printed.
pub fn run<I, T>(argv: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Output { code, stdout: text, stderr: String::new() }
            } else {
                Output { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let common = cli.command.common().clone();
    let name = cli.command.name();
    let outcome = commands::dispatch(&cli.command).unwrap_or_else(|e| Outcome {
        code: e.exit_code(),
        text: String::new(),
        result: Value::Null,
        errors: vec![e.to_string()],
    });
    let stderr: String = outcome.errors.iter().map(|e| format!("error: {e}\n")).collect();
    let stdout = if common.json {
        let report = Report { command: name.to_string(), seed: common.seed, result: outcome.result, errors: outcome.errors };
        serde_json::to_string_pretty(&report).expect("reports serialize") + "\n"
    } else {
        outcome.text
    };
    Output { code: outcome.code, stdout, stderr }
}
