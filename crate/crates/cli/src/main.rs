use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Bayes error rate bounds from ensemble k-NN and MST divergence estimates.
#[derive(Debug, Parser)]
#[command(name = "bayesbound", version, about)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gaussian sweeps over the mean separation, with over-trial summaries.
    Simulate(SimulateArgs),
    /// Every bound for one labelled dataset, as a JSON report.
    Bounds(BoundsArgs),
    /// Bounds along the blend r·Dn + (1 − r)·Ds of two distance matrices.
    Blend(BlendArgs),
    /// Ensemble weights for an ℓ grid.
    Weights(WeightsArgs),
    /// Minimal spanning tree and cross-class edge count of a dataset.
    Mst(MstArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON sweep configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Mean separations, comma separated.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Points per class, comma separated.
    #[arg(long = "t", value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    q1: Option<f64>,
    /// Bounds to compute: chernoff, dtilde-knn, dtilde-mst, galpha.
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<String>>,
    /// Directory receiving summary.csv, trials.csv and manifest.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV of labelled points with a header row.
    #[arg(long, conflicts_with_all = ["distances", "labels"])]
    input: Option<PathBuf>,
    /// Name of the label column of --input.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Square CSV distance matrix.
    #[arg(long, requires = "labels")]
    distances: Option<PathBuf>,
    /// One class tag per line, matching the rows of --distances.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Intrinsic dimension of distance data, needed by the k-NN bounds.
    #[arg(long)]
    intrinsic_dim: Option<usize>,
    /// Class-1 prior; defaults to the class-1 fraction of the sample.
    #[arg(long)]
    q1: Option<f64>,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    /// Bootstrap replicates for confidence intervals (0 disables them).
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Confidence level of the bootstrap intervals.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    /// JSON bounds configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bounds to compute: chernoff, dtilde-knn, dtilde-mst, galpha.
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<String>>,
    /// Directory receiving report.json; the report goes to stdout otherwise.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BlendArgs {
    /// Distance matrix weighted by r.
    #[arg(long, requires_all = ["ds", "labels"], conflicts_with = "synthetic")]
    dn: Option<PathBuf>,
    /// Distance matrix weighted by 1 − r.
    #[arg(long)]
    ds: Option<PathBuf>,
    /// One class tag per line, shared by both matrices.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Intrinsic dimension of both matrices, needed by the k-NN bounds.
    #[arg(long)]
    intrinsic_dim: Option<usize>,
    /// Run on a generated pair instead: Dn from Gaussian classes
    /// --separation apart, Ds from a single Gaussian.
    #[arg(long)]
    synthetic: bool,
    /// Points per class of the synthetic pair.
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Dimension of the synthetic pair.
    #[arg(long, default_value_t = 2)]
    synthetic_dim: usize,
    /// Class separation of the synthetic Dn.
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long)]
    q1: Option<f64>,
    /// Blend weights in [0, 1], comma separated.
    #[arg(long, value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    /// JSON blend configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bounds to compute: chernoff, dtilde-knn, dtilde-mst, galpha.
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<String>>,
    /// Directory receiving blend.csv, reports.json and manifest.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    /// The ℓ grid, comma separated; defaults to the grid used for dimension d.
    #[arg(long, value_delimiter = ',')]
    ell: Option<Vec<f64>>,
    /// Dimension.
    #[arg(long)]
    d: usize,
    /// Null the bias terms exactly instead of the norm-bounded relaxation.
    #[arg(long)]
    exact: bool,
    /// Norm budget of relaxed weights.
    #[arg(long, default_value_t = bayesbound::ensemble::DEFAULT_MAX_NORM)]
    max_norm: f64,
    /// Per-class reference count scaling the relaxed residuals.
    #[arg(long, default_value_t = 1000)]
    sample_size: usize,
}

#[derive(Debug, Args)]
struct MstArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also write the edge list as CSV.
    #[arg(long)]
    edges: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Bounds(args) => commands::bounds(args),
        Command::Blend(args) => commands::blend(args),
        Command::Weights(args) => commands::weights(args),
        Command::Mst(args) => commands::mst(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
