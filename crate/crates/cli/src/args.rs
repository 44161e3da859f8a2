use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "typoprobe", version, about = "Probe sentence encoders for typological features")]
pub struct Cli {
    /// Output root; every stage reads and writes below it.
    #[arg(long, global = true, env = "TYPOPROBE_OUT", default_value = "typoprobe-out")]
    pub out: PathBuf,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select probing tasks from a WALS value table.
    IngestWals(IngestWalsArgs),
    /// Sample per-language corpora and filter translations between paired languages.
    BuildCorpus(BuildCorpusArgs),
    /// Label corpora with feature values and split them into train/val/test.
    BuildTasks(BuildTasksArgs),
    /// Train probes on stored embeddings, or score the majority baseline.
    Train(TrainArgs),
    /// Re-score a trained checkpoint on a task split.
    Evaluate(EvaluateArgs),
    /// Generate embeddings with a planted class signal and the matching task.
    Synth(SynthArgs),
    /// Assemble tables and figures from training reports.
    Report(ReportArgs),
    /// Compare analytic probe gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct IngestWalsArgs {
    /// CSV with columns feature_id,feature_name,category,language_code,value_label
    #[arg(long)]
    pub wals: PathBuf,
    /// Pair file (`<index> <train> <test>` per line); the seven default pairs otherwise.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Minimum number of annotated languages per task.
    #[arg(long)]
    pub min_langs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Sentence dump, `id<TAB>lang<TAB>text` per line.
    #[arg(long)]
    pub sentences: PathBuf,
    /// Translation links, `id<TAB>id` per line.
    #[arg(long)]
    pub links: Option<PathBuf>,
    /// Pair file; defaults to the pairs recorded by ingest-wals.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Sentences sampled per language.
    #[arg(long)]
    pub n: Option<usize>,
    /// Keep only sentences ending in a question mark.
    #[arg(long)]
    pub questions_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValFrom {
    Test,
    Train,
}

#[derive(Debug, Args)]
pub struct BuildTasksArgs {
    /// Side the validation set is drawn from.
    #[arg(long, value_enum)]
    pub val_from: Option<ValFrom>,
    /// Fraction of that side moved to validation.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Only build these task ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Majority,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Task id, e.g. 81A.
    #[arg(long)]
    pub task: String,
    /// Model id of the embedding files.
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<String>,
    /// Layer to probe: a layer number, `native` or `all`.
    #[arg(long, conflicts_with = "mix")]
    pub layer: Option<String>,
    /// Train a probe over a learned mix of layers 1..=L.
    #[arg(long)]
    pub mix: bool,
    /// Score a baseline instead of training a probe.
    #[arg(long, value_enum, conflicts_with_all = ["model", "layer", "mix"])]
    pub baseline: Option<BaselineKind>,
    /// Directory holding `<model>_<lang>.tpeb`; defaults to `<out>/embeddings`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Hidden units of the probe.
    #[arg(long)]
    pub hidden_units: Option<usize>,
    /// Worker threads for `--layer all` (0 = one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Average F1 over every task class instead of the classes present in gold.
    #[arg(long)]
    pub all_classes: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub model: String,
    /// Layer source of the run: a layer number, `native` or `mix`.
    #[arg(long, default_value = "native")]
    pub layer: String,
    /// Split to score.
    #[arg(long, default_value = "test", value_parser = ["test", "val"])]
    pub split: String,
    /// Checkpoint file; defaults to the one written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub all_classes: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `constant`, `decay:<rate>` or `single:<layer>`.
    #[arg(long, default_value = "constant")]
    pub profile: String,
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Number of languages; consecutive languages form pairs.
    #[arg(long, default_value_t = 4)]
    pub languages: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 500)]
    pub sentences: usize,
    /// Signal strength.
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Scale of the per-language offset direction.
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    #[arg(long, default_value = "synth")]
    pub model_id: String,
    #[arg(long, default_value = "SYN")]
    pub task_id: String,
    #[arg(long, value_enum)]
    pub val_from: Option<ValFrom>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched for report.json files; defaults to `<out>/runs`.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Languages whose macro-F1 is broken out separately (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub subset: Vec<String>,
    /// Also write PCA + t-SNE projections of this model's layers.
    #[arg(long)]
    pub project: Option<String>,
    /// Languages to project (comma separated); all found otherwise.
    #[arg(long, value_delimiter = ',')]
    pub project_langs: Vec<String>,
    /// Sentences per language in each projection.
    #[arg(long, default_value_t = 200)]
    pub project_per_lang: usize,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random configurations per model kind.
    #[arg(long, default_value_t = 20)]
    pub configs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}
