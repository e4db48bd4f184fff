//! Command-line front end: train, update, evaluate, benchmark and dump
//! weight-error curves.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ridgesv::datakit::LabelColumn;
use ridgesv::Error;

#[derive(Parser, Debug)]
#[command(name = "ridgesv", version, about = "Ridge SVM/SVR with batched incremental and decremental updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from a CSV file.
    Train(TrainArgs),
    /// Add and remove samples in a saved model.
    Update(UpdateArgs),
    /// Accuracy or MSE of a saved model on a CSV file.
    Eval(EvalArgs),
    /// Time the update engines against full retraining.
    Bench(BenchArgs),
    /// Write weight-error curve points of a saved model.
    Wec(WecArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Poly2,
    Poly3,
    Rbf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Proposed,
    Baseline,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SyntheticArg {
    Gaussians,
    Sine,
    Skin,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Comma-separated input file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Label column: zero-based index or "last".
    #[arg(long = "label-col", default_value = "last", value_parser = parse_label_col)]
    pub label_col: LabelColumn,
    /// First row is a header.
    #[arg(long)]
    pub header: bool,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Label value mapped to +1; all others map to -1.
    #[arg(long = "positive-label")]
    pub positive_label: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = TaskArg::Classification)]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    /// Overrides the degree implied by --kernel.
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Ridge parameter added to the kernel diagonal.
    #[arg(long, default_value_t = 0.5)]
    pub ridge: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Tube half-width (regression only).
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Skip z-score standardization of the inputs.
    #[arg(long = "no-standardize")]
    pub no_standardize: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct UpdateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of samples to add, same layout as the training file.
    #[arg(long)]
    pub add: Option<PathBuf>,
    /// Comma-separated sample ids to remove.
    #[arg(long, value_delimiter = ',')]
    pub remove: Vec<u64>,
    #[arg(long, value_enum, default_value_t = EngineArg::Proposed)]
    pub engine: EngineArg,
    #[arg(long = "label-col", default_value = "last", value_parser = parse_label_col)]
    pub label_col: LabelColumn,
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long = "positive-label")]
    pub positive_label: Option<f64>,
    /// Output path; defaults to overwriting --model.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Generated dataset used when --data is absent.
    #[arg(long, value_enum, default_value_t = SyntheticArg::Gaussians)]
    pub synthetic: SyntheticArg,
    /// Rows to generate or keep from --data.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long = "add-per-round", default_value_t = 6)]
    pub add_per_round: usize,
    #[arg(long = "remove-per-round", default_value_t = 2)]
    pub remove_per_round: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated subset of proposed, baseline, retrain.
    #[arg(long, value_delimiter = ',', default_value = "proposed,baseline,retrain")]
    pub arms: Vec<String>,
    /// Evaluate kernel rows on all cores.
    #[arg(long)]
    pub parallel: bool,
    /// Output directory for bench.csv, bench.txt and bench.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct WecArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_label_col(s: &str) -> Result<LabelColumn, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Where a failure happened, for the exit code of errors that are not
/// plainly bad input.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Input,
    Train,
    Update,
}

fn exit_code(err: &anyhow::Error, stage: Stage) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 2;
    };
    match e {
        Error::Parse { .. }
        | Error::LabelDomain { .. }
        | Error::Io(_)
        | Error::EmptyData(_)
        | Error::CorruptFile(_)
        | Error::SchemaVersionMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidKernel(_)
        | Error::InvalidHyperparams(_)
        | Error::InvalidLabel(_)
        | Error::UnknownId(_)
        | Error::DuplicateId(_)
        | Error::InvalidPlan(_)
        | Error::PoolExhausted { .. }
        | Error::ScheduleInfeasible { .. }
        | Error::ConstantColumn(_)
        | Error::IndexOutOfRange { .. } => 2,
        Error::RepairDivergence { .. } | Error::StalledPath { .. } | Error::InconsistentEvent(_) => 4,
        _ => match stage {
            Stage::Update => 4,
            Stage::Input => 2,
            Stage::Train => 3,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Update(a) => commands::update(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Wec(a) => commands::wec(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err, stage))
        }
    }
}
