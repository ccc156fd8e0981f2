use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "pivq",
    version,
    about = "Permutation-invariant vector quantization toolkit",
    after_help = "Set PIVQ_THREADS to cap the number of worker threads."
)]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum QuantMethod {
    Nearest,
    Matching,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CapacityMethod {
    Nearest,
    Matching,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Kmeanspp,
    Random,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve a linear assignment problem given as a CSV cost matrix (rows >= columns).
    Assign {
        #[arg(long)]
        cost: PathBuf,
        /// Also solve by exhaustive search and compare (at most 8 columns).
        #[arg(long)]
        oracle: bool,
    },
    /// Quantize groups of L embeddings against a codebook.
    Quantize {
        #[arg(long)]
        codebook: PathBuf,
        /// CSV or binary embeddings; consecutive runs of --len rows form one sample.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_enum, default_value = "matching")]
        method: QuantMethod,
        #[arg(long)]
        len: usize,
        /// Coded dataset (JSON Lines).
        #[arg(long)]
        out: PathBuf,
        /// Usage summary (JSON); printed to stdout either way.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Match on squared rather than plain Euclidean distance.
        #[arg(long)]
        squared: bool,
    },
    /// Information capacity in bits for one configuration.
    Capacity {
        #[arg(long)]
        kdata: u64,
        /// Distinct codes per sample (nearest method only).
        #[arg(long)]
        kimg: Option<u64>,
        #[arg(long)]
        len: u64,
        #[arg(long, value_enum)]
        method: CapacityMethod,
    },
    /// Capacity of all three models for L = 1..=lmax, as CSV.
    CapacityCurve {
        #[arg(long)]
        k: u64,
        #[arg(long)]
        kimg: u64,
        #[arg(long)]
        lmax: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream embeddings through the delayed-initialization codebook trainer.
    TrainCodebook {
        /// JSON or TOML trainer configuration.
        #[arg(long)]
        config: PathBuf,
        /// Embeddings file, or `synthetic:gauss16`.
        #[arg(long)]
        embeddings: String,
        /// Codebook output; `.json` selects the text format, anything else binary.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of iterations [default: 1000 for synthetic data, one pass for a file].
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, value_enum)]
        init: Option<InitArg>,
        #[arg(long, value_enum)]
        method: Option<QuantMethod>,
    },
    /// Sample interpolants between two coded samples.
    Interpolate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON Lines output [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-swap-per-step path from sample B to sample A.
    SmoothPath {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the path from A to B instead.
        #[arg(long)]
        reverse: bool,
        /// JSON Lines output [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated logistic probes of binary attributes on code presence.
    Probe {
        #[arg(long)]
        codes: PathBuf,
        /// CSV with a header of attribute names and one 0/1 row per sample.
        /// A leading `id` column matches rows to samples by id.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
        /// Codebook size [default: largest code + 1].
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the toy permutation-invariant autoencoder.
    ToyTrain {
        /// JSON configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Decode coded samples with a trained toy model.
    ToyDecode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        /// CSV: `id,p0,p1,...`, one row per sample.
        #[arg(long)]
        out: PathBuf,
    },
    /// Usage and capacity summary of a coded dataset.
    Stats {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        k: usize,
        /// Codes per sample [default: largest set in the dataset].
        #[arg(long)]
        len: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Bad flag combinations detected after parsing; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var("PIVQ_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                pivq::par::configure_threads(n);
            }
            _ => {
                eprintln!("error: PIVQ_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let exec = if cli.sequential {
        pivq::Execution::Sequential
    } else {
        pivq::Execution::Parallel
    };
    match commands::run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
