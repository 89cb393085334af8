//! Subcommand front end. Every command is deterministic given its flags;
//! CSV outputs open with a `# ccs ...` provenance line listing the settings
//! and seeds that produced them.
//!
//! A `--config FILE` of `key = value` lines supplies defaults for the
//! subcommand's flags; flags given on the command line win.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::nn::Activation;

pub use config::{expand_config, parse_config};

#[derive(Debug, Parser)]
#[command(name = "ccs", version, about = "Convex-concave spline approximations of neural networks")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// File of `key = value` defaults for the subcommand flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write model.nnc, metrics.csv and the dataset caches.
    Train(TrainArgs),
    /// Estimate c, sample planes at anchors and write a CCS model.
    Transform(TransformArgs),
    /// Compare network and CCS accuracy on the anchor and test sets.
    Eval(EvalArgs),
    /// Sweep k-means plane reduction over cluster counts.
    Cluster(ClusterArgs),
    /// Export cluster feature maps for one output as PGM images.
    Features(FeaturesArgs),
    /// One-dimensional CCS reconstruction on a dense grid.
    Demo1d(Demo1dArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `WIDTHxDEPTH` (e.g. 200x1), `cnn`, `cnn-WIDTH` or `linear`.
    #[arg(long, default_value = "200x1")]
    pub arch: String,
    #[arg(long, default_value = "sigmoid")]
    pub activation: Activation,
    /// MNIST directory or DSB1 file.
    #[arg(long, default_value = "data/mnist")]
    pub data: PathBuf,
    /// Test set (MNIST directory or DSB1 file); defaults to `--data` when it is a directory.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Stratified training subset size.
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long)]
    pub test_subset: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Anchor points: DSB1 file or MNIST directory (training split).
    #[arg(long)]
    pub anchors: PathBuf,
    /// Use a stratified subset of the anchors.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Uniform curvature constant for every output.
    #[arg(long, conflicts_with = "borrow_c")]
    pub c: Option<f64>,
    /// Take c from a CCS file, or estimate it from another network file.
    #[arg(long)]
    pub borrow_c: Option<PathBuf>,
    /// Estimate c from this many anchors instead of all of them.
    #[arg(long)]
    pub c_sample: Option<usize>,
    /// Audit c on this many anchors instead of all of them.
    #[arg(long)]
    pub audit_sample: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub eigen_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Model card destination (default: `<out>.txt`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub ccs: PathBuf,
    /// The anchor set the CCS model was sampled on.
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub test_subset: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub ccs: PathBuf,
    /// Evaluation set: DSB1 file or MNIST directory (test split).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub subset: Option<usize>,
    /// Comma-separated cluster counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Standardise descriptor columns before clustering.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// A reduced CCS model, or a full one together with `--k`.
    #[arg(long)]
    pub ccs: PathBuf,
    /// Output (class) whose planes are rendered.
    #[arg(long)]
    pub class: usize,
    /// Cluster the output's planes into this many maps first.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// `all` or a number of clusters drawn at random.
    #[arg(long, default_value = "all")]
    pub select: String,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Normalise all maps by their shared maximum magnitude.
    #[arg(long)]
    pub global_norm: bool,
    /// Also write the raw values to `features.csv`.
    #[arg(long)]
    pub csv: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Gaussian,
    Sigmoid,
    Mixture,
}

#[derive(Debug, Args)]
pub struct Demo1dArgs {
    pub kind: Demo,
    #[arg(long, default_value_t = 300)]
    pub planes: usize,
    /// Mixture components.
    #[arg(long, default_value_t = 400)]
    pub components: usize,
    #[arg(long, default_value_t = 10_000)]
    pub grid: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Hidden-layer layout named on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Arch {
    Mlp(Vec<usize>),
    Cnn { hidden: usize },
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("bad architecture '{s}' (expected WIDTHxDEPTH, cnn, cnn-WIDTH or linear)"));
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "linear" => return Ok(Arch::Mlp(vec![])),
            "cnn" => return Ok(Arch::Cnn { hidden: 200 }),
            _ => {}
        }
        if let Some(w) = lower.strip_prefix("cnn-") {
            let hidden = w.parse().ok().filter(|&h| h > 0).ok_or_else(bad)?;
            return Ok(Arch::Cnn { hidden });
        }
        let (w, d) = lower.split_once('x').ok_or_else(bad)?;
        let width: usize = w.parse().ok().filter(|&v| v > 0).ok_or_else(bad)?;
        let depth: usize = d.parse().ok().filter(|&v| v > 0).ok_or_else(bad)?;
        Ok(Arch::Mlp(vec![width; depth]))
    }
}

/// Parses and runs one invocation.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = expand_config(args)?;
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            Error::Usage(String::new())
        }
        _ => Error::Usage(e.to_string()),
    })?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Transform(a) => commands::transform(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Features(a) => commands::features(&a),
        Command::Demo1d(a) => commands::demo1d(&a),
    }
}

/// Runs with the process arguments and returns the exit code.
pub fn main() -> i32 {
    match run(std::env::args_os()) {
        Ok(()) => 0,
        Err(Error::Usage(msg)) if msg.is_empty() => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
