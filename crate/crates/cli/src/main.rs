use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Fit, sample and evaluate movement primitives and principal movements.
#[derive(Debug, Parser)]
#[command(name = "primos", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model on a dataset and write it as JSON.
    Fit(FitArgs),
    /// Reconstruct a trajectory (or the model mean on a phase grid) as CSV.
    Reconstruct(ReconstructArgs),
    /// Draw trajectories from a probabilistic model.
    Sample(SampleArgs),
    /// Parameter count versus training NRMSE over a configuration grid.
    EvalGrid(EvalGridArgs),
    /// Leave-one-out evaluation of principal movements.
    Loo(LooArgs),
    /// Generate a synthetic dataset with known principal movements.
    Synth(SynthArgs),
    /// Condition a probabilistic model on a via-point.
    Condition(ConditionArgs),
    /// Print mean and covariance parameter counts.
    Params(ParamsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mp,
    Promp,
    Primos,
    #[value(name = "pro-primos", alias = "pro_primos")]
    ProPrimos,
    Cpca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Args)]
struct RidgeArgs {
    /// Ridge penalty.
    #[arg(long, env = "PRIMO_DEFAULT_RIDGE", default_value_t = primos::RidgeConfig::DEFAULT_LAMBDA)]
    ridge: f64,
    /// Whether the penalty is scaled by the mean diagonal of the normal matrix.
    #[arg(long, value_enum, default_value_t = ScaleArg::Relative)]
    ridge_scale: ScaleArg,
}

#[derive(Debug, Clone, Args)]
struct BasisArgs {
    /// Number of radial basis functions per joint.
    #[arg(long, default_value_t = 10)]
    n_basis: usize,
    /// Basis bandwidth; defaults to 1/(n-1).
    #[arg(long)]
    bandwidth: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    basis: BasisArgs,
    #[command(flatten)]
    ridge: RidgeArgs,
    /// Principal movements to keep (primos, pro-primos); default 5.
    #[arg(long)]
    components: Option<usize>,
    /// Latent configuration dimension (cpca); default 2.
    #[arg(long)]
    latent: Option<usize>,
    /// Isotropic observation-noise variance stored with the model.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    /// Trajectory CSV to encode and reconstruct; without it the model mean is written.
    #[arg(long, conflicts_with = "samples")]
    trajectory: Option<PathBuf>,
    /// Points of the uniform phase grid used for the model mean.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Points of the uniform phase grid of each sample.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalGridArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Methods to evaluate.
    #[arg(long = "method", value_enum, value_delimiter = ',', default_values_t = [MethodArg::Primos, MethodArg::Cpca])]
    methods: Vec<MethodArg>,
    /// Basis counts in the grid.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20])]
    n_basis: Vec<usize>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[command(flatten)]
    ridge: RidgeArgs,
    /// Largest number of principal movements; default min(30, n·d, m-1).
    #[arg(long)]
    components: Option<usize>,
    /// Largest latent dimension; default d.
    #[arg(long)]
    latent: Option<usize>,
    /// NRMSE level reported in the summary.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LooArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Primos)]
    method: MethodArg,
    #[command(flatten)]
    basis: BasisArgs,
    #[command(flatten)]
    ridge: RidgeArgs,
    /// Smallest number of principal movements.
    #[arg(long, default_value_t = 1)]
    min_components: usize,
    /// Largest number of principal movements; default min(10, n·d, m-2).
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth number of principal movements.
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 10)]
    n_basis: usize,
    /// Number of joints.
    #[arg(long, default_value_t = 4)]
    dof: usize,
    /// Number of trajectories.
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Standard deviation of additive noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Generate joints as mixtures of this many latent curves.
    #[arg(long)]
    joint_rank: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConditionArgs {
    #[arg(long)]
    model: PathBuf,
    /// Phase of the via-point in [0, 1].
    #[arg(long)]
    phase: f64,
    /// Desired joint positions, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    value: Vec<f64>,
    /// Isotropic variance of the via-point.
    #[arg(long, default_value_t = 1e-6)]
    variance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value_t = 10)]
    n_basis: usize,
    #[arg(long)]
    dof: usize,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
}

/// Exit status: 0 success, 1 usage, 2 data, 3 numerical failure.
fn exit_code(class: primos::ErrorClass) -> u8 {
    match class {
        primos::ErrorClass::Usage => 1,
        primos::ErrorClass::Data => 2,
        primos::ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
