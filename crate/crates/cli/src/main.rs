use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

/// Planar impact models: generate data, identify, train, evaluate.
#[derive(Parser, Debug)]
#[command(name = "impactlab", version)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "IMPACTLAB_THREADS")]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a synthetic impact dataset.
    Gen(GenArgs),
    /// Identify (μ, ε) for analytical models by bootstrap.
    Identify(IdentifyArgs),
    /// Train a learned contact model.
    Train(TrainArgs),
    /// Compare models on the evaluation split.
    Eval(EvalArgs),
    /// Held-out error against training-set size.
    Curve(CurveArgs),
    /// Summarise evaluation, identification and curve outputs as Markdown.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// TOML (or .json) generator config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (.csv, or .json).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Start from the soft-contact preset instead of the stiff default.
    #[arg(long)]
    pub compliant: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Training fraction of the stratified split, or `none` for all data.
    #[arg(long, default_value = "0.7")]
    pub split: String,
    /// Incidence-angle strata of the split.
    #[arg(long, default_value_t = 4)]
    pub strata: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    /// Linear centre-of-mass velocity only.
    Linear,
    /// Angular velocity included, scaled by √(I/m).
    Scaled,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    /// Model id, or `all` for the six analytical models.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Trials per bootstrap fit (default: min(100, dataset size)).
    #[arg(long)]
    pub k: Option<usize>,
    /// Bootstrap iterations.
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON array of fit results.
    #[arg(long)]
    pub out: PathBuf,
    /// Objective surface CSV over the full dataset (single model only).
    #[arg(long)]
    pub surface: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaseArgs {
    /// Analytical model behind a reinforced class.
    #[arg(long)]
    pub base_model: Option<String>,
    /// Identification output supplying the base parameters; without it the
    /// base is fitted on the training data.
    #[arg(long)]
    pub fits: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub class: String,
    #[arg(long, default_value = "x1")]
    pub features: String,
    #[arg(long, default_value = "y1")]
    pub target: String,
    #[command(flatten)]
    pub base: BaseArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Analytical ids, `all`, learned model files, `irb-bound`, `best-post-hoc`.
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    /// Identification output for the analytical parameters.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Linear)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the report and density CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Analytical model id (identified at each size).
    #[arg(long, conflicts_with = "class")]
    pub model: Option<String>,
    /// Learned class (trained at each size).
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value = "x1")]
    pub features: String,
    #[arg(long, default_value = "y1")]
    pub target: String,
    #[command(flatten)]
    pub base: BaseArgs,
    /// `start:stop:step`.
    #[arg(long)]
    pub sizes: String,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Linear)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Curve CSV (`x,y,std`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation report JSON.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Identification output JSON.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    /// Curve CSVs.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub curves: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Identify(a) => commands::identify(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Curve(a) => commands::curve(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::InvariantViolated(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
