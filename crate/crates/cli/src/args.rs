use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use unli_core::datamodel::{DataFormat, Split};
use unli_core::elicitation::AveragingMode;
use unli_core::regressor::{FeatureMode, Loss};

#[derive(Debug, Parser)]
#[command(
    name = "unli",
    version,
    about = "Scalar NLI annotation, aggregation, training and evaluation"
)]
pub struct Cli {
    /// TOML config; explicit flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset (and optional event log), print split statistics, optionally rewrite it.
    Ingest(IngestArgs),
    /// Assign pairs to 5-pair batches with redundant annotator slots.
    Batch(BatchArgs),
    /// Turn annotation events into gold scores.
    Aggregate(AggregateArgs),
    /// Score one annotator's qualification responses.
    QualifyScore(QualifyArgs),
    /// Fit the label-to-score surrogate map on the train split.
    FitSurrogate(FitSurrogateArgs),
    /// Hashed bag-of-words features for every pair in a dataset.
    Featurize(FeaturizeArgs),
    /// Train the regression head, optionally after surrogate pre-training.
    Train(TrainArgs),
    /// Pearson, Spearman and MSE of predictions against gold scores.
    Eval(EvalArgs),
    /// Label distributions, calibration heatmap and metrics.
    Report(ReportArgs),
    /// Run the annotation HTTP server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for DataFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => DataFormat::Csv,
            Format::Jsonl => DataFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Average {
    Prob,
    Raw,
}

impl From<Average> for AveragingMode {
    fn from(a: Average) -> Self {
        match a {
            Average::Prob => AveragingMode::Probability,
            Average::Raw => AveragingMode::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Bce,
    L2,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Bce => Loss::Bce,
            LossArg::L2 => Loss::L2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Pair,
    HypothesisOnly,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pair => FeatureMode::Pair,
            ModeArg::HypothesisOnly => FeatureMode::HypothesisOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Dataset input shared by most verbs. Falls back to `data.dataset` in the config.
#[derive(Debug, Args)]
pub struct DataInput {
    /// Dataset file (.csv or .jsonl).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Override the format otherwise inferred from the extension.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: DataInput,
    /// Event log (JSONL) to merge and validate.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Write the validated dataset here; format from the extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub input: DataInput,
    /// Only batch pairs from this split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Annotator slots per pair.
    #[arg(long)]
    pub redundancy: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV (`batch_id,annotator,position,pair_id`); stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub input: DataInput,
    /// Event log (JSONL); defaults to `data.events` in the config.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Average transformed probabilities (default) or raw slider values.
    #[arg(long, value_enum)]
    pub average: Option<Average>,
    /// Results CSV; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write pair ids awaiting a third response here, one per line.
    #[arg(long)]
    pub awaiting: Option<PathBuf>,
    /// Write the dataset with aggregated gold scores filled in.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QualifyArgs {
    /// Qualification items CSV; defaults to `data.qualification_items`.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// `pair_id,response` CSV.
    #[arg(long)]
    pub responses: PathBuf,
    /// Responses are raw slider positions rather than probabilities.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FitSurrogateArgs {
    #[command(flatten)]
    pub input: DataInput,
    /// Output JSON; defaults to `surrogate_path` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub input: DataInput,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "pair")]
    pub mode: ModeArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature table; defaults to `data.features`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Training pairs with gold scores.
    #[arg(long)]
    pub train: PathBuf,
    /// Dev pairs used for epoch selection.
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long, default_value = "head.json")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    /// Categorically labelled pairs for surrogate pre-training.
    #[arg(long)]
    pub pretrain: Option<PathBuf>,
    /// Surrogate map JSON; defaults to `surrogate_path`.
    #[arg(long)]
    pub surrogate: Option<PathBuf>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_lr: Option<f64>,
    /// Write dev predictions (`pair_id,score`).
    #[arg(long)]
    pub pred_out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold scores: a dataset file or a `pair_id,score` CSV.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions as `pair_id,score`.
    #[arg(long, conflicts_with = "checkpoint")]
    pub pred: Option<PathBuf>,
    /// Predict with a trained head instead of reading `--pred`.
    #[arg(long, requires = "features")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: DataInput,
    /// Restrict distribution and heatmap to one split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Predictions (`pair_id,score`) for the heatmap and metrics.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Comma-separated heatmap bin edges from 0 to 1.
    #[arg(long, value_delimiter = ',')]
    pub edges: Option<Vec<f64>>,
    /// Independent 3-way re-annotation events for human performance.
    #[arg(long)]
    pub reannotations: Option<PathBuf>,
    /// Events behind the gold scores, used to flag annotator overlap.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; falls back to the environment, then the config.
    #[arg(long, env = unli_service::ADDR_ENV)]
    pub addr: Option<String>,
    #[command(flatten)]
    pub input: DataInput,
    /// Only serve pairs from this split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub qualification_log: Option<PathBuf>,
}
