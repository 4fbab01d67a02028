use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdr_core::estimator::{Mode, SourceLabel};
use rdr_core::synthetic::BetaCase;

#[derive(Debug, Parser)]
#[command(name = "rdr", version, about = "Relative density ratio estimation and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples from a synthetic scenario and write its oracle table.
    Synth(SynthArgs),
    /// Fit a ratio model on two CSV samples.
    Train(TrainArgs),
    /// Score the rows of a CSV file with a trained model.
    Eval(EvalArgs),
    /// Score a 1D model on an evenly spaced grid.
    Grid(GridArgs),
    /// Split, train, score held-out rows, and write histogram and summary reports.
    Compare(CompareArgs),
    /// Relate scores to covariates by logistic regression or Spearman correlation.
    Attribute(AttributeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    GaussShift,
    BetaMixture,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaseArg {
    PartialPrecision,
    PartialRecall,
    ModeReweight,
}

impl From<CaseArg> for BetaCase {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::PartialPrecision => BetaCase::PartialPrecision,
            CaseArg::PartialRecall => BetaCase::PartialRecall,
            CaseArg::ModeReweight => BetaCase::ModeReweight,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Dr,
    Rdr,
    Ksample,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dr => Mode::Dr,
            ModeArg::Rdr => Mode::Rdr,
            ModeArg::Ksample => Mode::Ksample,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelArg {
    Real,
    Generated,
    Other,
}

impl From<LabelArg> for SourceLabel {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Real => SourceLabel::Real,
            LabelArg::Generated => SourceLabel::Generated,
            LabelArg::Other => SourceLabel::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Logistic,
    Spearman,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Mean shift of Q for gauss-shift.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Mixture case for beta-mixture.
    #[arg(long, value_enum)]
    pub case: Option<CaseArg>,
    #[arg(long, default_value_t = 1000)]
    pub n_p: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_q: usize,
    /// Falls back to RDR_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub oracle_points: usize,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Numerator sample.
    #[arg(long)]
    pub p: Option<PathBuf>,
    /// Denominator sample; repeat for K-sample training.
    #[arg(long)]
    pub q: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Run configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "other")]
    pub label: LabelArg,
    /// Permit scoring one of the model's own training files.
    #[arg(long)]
    pub allow_train_eval: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 500)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub p: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Histogram bins on [0, 2].
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    /// Score CSV with columns id, score, source_label.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub covariates: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Treat covariates as compositions: aggregate by --mapping, then CLR.
    #[arg(long)]
    pub clr: bool,
    /// CSV mapping each covariate column to a group per level:
    /// header `taxon,<level>,...`.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Logistic labels are 1{score > threshold}.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub pseudocount: f64,
    /// Keep only score rows with this source label.
    #[arg(long, value_enum)]
    pub source_label: Option<LabelArg>,
    #[arg(long)]
    pub force: bool,
}
