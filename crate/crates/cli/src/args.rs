use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Answer proposal toolkit: ingest, index, propose, evaluate, train, answer.
#[derive(Debug, Parser)]
#[command(name = "ap", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file with default knob values; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a question corpus (and optionally its vectors) and print a summary.
    Ingest(IngestArgs),
    /// Build and cache a retrieval index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Write ranked proposal lists for a split.
    Propose(ProposeArgs),
    /// Evaluate proposals or predictions.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train the triplet classifier.
    TrainClassifier(TrainArgs),
    /// Answer questions with the top-rank or classifier selector.
    Answer(AnswerArgs),
    /// Compare backprop gradients with central differences on random networks.
    Gradcheck(GradcheckArgs),
    /// Run an experiment.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Write the deterministic synthetic dataset.
    SynthCorpus(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Averaged word-vector index over the train split.
    W2v(IndexW2vArgs),
    /// Semantic graph index over the train split.
    Sem(IndexSemArgs),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Recall@N for each cutoff, with the hit-rank histogram.
    Recall(EvalRecallArgs),
    /// Hit-rank histogram only.
    Rankdist(EvalRankArgs),
    /// VQA accuracy per question type.
    Vqa(EvalVqaArgs),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Train/test with multiple-choice lists swapped for proposal lists.
    ChoiceSwap(ChoiceSwapArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Word embeddings to validate alongside the corpus.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// Image features; every image id in the corpus must be present.
    #[arg(long, value_name = "PATH")]
    pub image_features: Option<PathBuf>,
    /// Write the validated corpus here in canonical form.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexW2vArgs {
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Word embeddings (text, one token per line).
    #[arg(long, value_name = "PATH")]
    pub embeddings: PathBuf,
    /// Index cache file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexSemArgs {
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Lexicon file (word<TAB>pos<TAB>type).
    #[arg(long, value_name = "PATH")]
    pub lexicon: PathBuf,
    /// Ontology file (child<TAB>parent).
    #[arg(long, value_name = "PATH")]
    pub ontology: PathBuf,
    /// Train-side mutation budget [default: 3].
    #[arg(long)]
    pub index_budget: Option<u32>,
    /// Index cache file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Inputs a proposer may need. Cached indices are used when given, otherwise
/// indices are built from the corpus train split.
#[derive(Debug, Args, Clone)]
pub struct ResourceArgs {
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Word embeddings (text, one token per line).
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// Image features (text, one image id per line).
    #[arg(long, value_name = "PATH")]
    pub image_features: Option<PathBuf>,
    /// Ontology file (child<TAB>parent).
    #[arg(long, value_name = "PATH")]
    pub ontology: Option<PathBuf>,
    /// Lexicon file (word<TAB>pos<TAB>type).
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    /// Cached W2V index from `index w2v`.
    #[arg(long, value_name = "PATH")]
    pub w2v_index: Option<PathBuf>,
    /// Cached SEM index from `index sem`.
    #[arg(long, value_name = "PATH")]
    pub sem_index: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ProposalKnobs {
    /// Proposal model: w2v | sem | w2v+sem | bleu [default: w2v+sem].
    #[arg(long)]
    pub model: Option<String>,
    /// Keep the first N proposals [default: 100].
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Neighbours retrieved by w2v/bleu [default: 200].
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// How neighbours contribute answers: majority | all-answers [default: majority].
    #[arg(long)]
    pub neighbor_mode: Option<String>,
    /// Train-side mutation budget when building the SEM index [default: 3].
    #[arg(long)]
    pub index_budget: Option<u32>,
    /// Test-side mutation budget [default: 3].
    #[arg(long)]
    pub test_budget: Option<u32>,
    /// Highest n-gram order for BLEU [default: 4].
    #[arg(long)]
    pub bleu_max_n: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainKnobs {
    /// Hidden units per layer [default: 256].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Hidden layers [default: 3].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Dropout rate after the first hidden layer [default: 0.5].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// SGD learning rate [default: 0.01].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training epochs [default: 10].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 32].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Negative candidates per positive [default: 3].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Hidden activation: relu | tanh [default: relu].
    #[arg(long)]
    pub activation: Option<String>,
    /// Seed for initialisation, shuffling and dropout [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[command(flatten)]
    pub knobs: ProposalKnobs,
    /// Split to propose for: train | val | test [default: val].
    #[arg(long)]
    pub split: Option<String>,
    /// Output JSONL (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRecallArgs {
    /// Proposal lists (JSONL).
    #[arg(long, value_name = "PATH")]
    pub proposals: PathBuf,
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Correctness: majority | any [default: majority].
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated cutoffs [default: 1,5,10,100].
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// Split to evaluate [default: val].
    #[arg(long)]
    pub split: Option<String>,
    /// Also write the report here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRankArgs {
    /// Proposal lists (JSONL).
    #[arg(long, value_name = "PATH")]
    pub proposals: PathBuf,
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Correctness: majority | any [default: majority].
    #[arg(long)]
    pub mode: Option<String>,
    /// Split to evaluate [default: val].
    #[arg(long)]
    pub split: Option<String>,
    /// Output path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalVqaArgs {
    /// Predictions JSONL from `answer`.
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// Question corpus (JSONL).
    #[arg(long, visible_alias = "corpus", value_name = "PATH")]
    pub questions: PathBuf,
    /// Lexicon used to group questions by type.
    #[arg(long, value_name = "PATH")]
    pub lexicon: PathBuf,
    /// Ontology file (child<TAB>parent).
    #[arg(long, value_name = "PATH")]
    pub ontology: PathBuf,
    /// Split to evaluate [default: val].
    #[arg(long)]
    pub split: Option<String>,
    /// Output path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[command(flatten)]
    pub knobs: ProposalKnobs,
    #[command(flatten)]
    pub train: TrainKnobs,
    /// Candidate lists for negatives: proposals | choices [default: proposals].
    #[arg(long)]
    pub candidates: Option<String>,
    /// Precomputed proposals covering the train split.
    #[arg(long, value_name = "PATH")]
    pub proposals: Option<PathBuf>,
    /// Model file to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[command(flatten)]
    pub knobs: ProposalKnobs,
    /// Selector: toprank | classifier [default: toprank].
    #[arg(long)]
    pub selector: Option<String>,
    /// Candidate lists: proposals | choices [default: proposals].
    #[arg(long)]
    pub candidates: Option<String>,
    /// Precomputed proposals; computed on the fly when omitted.
    #[arg(long, value_name = "PATH")]
    pub proposals: Option<PathBuf>,
    /// Model from `train-classifier` (classifier selector only).
    #[arg(long, value_name = "PATH")]
    pub classifier_model: Option<PathBuf>,
    /// Split to answer [default: val].
    #[arg(long)]
    pub split: Option<String>,
    /// Predictions JSONL (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random networks to check [default: 20].
    #[arg(long)]
    pub networks: Option<usize>,
    /// Largest layer width [default: 8].
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Finite-difference step [default: 1e-5].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Pass threshold on the max relative error [default: 1e-4].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ChoiceSwapArgs {
    #[command(flatten)]
    pub resources: ResourceArgs,
    #[command(flatten)]
    pub knobs: ProposalKnobs,
    #[command(flatten)]
    pub train: TrainKnobs,
    /// Train-time candidates: proposals | choices. With neither source flag
    /// the three standard pairs run.
    #[arg(long)]
    pub train_source: Option<String>,
    /// Test-time candidates: proposals | choices.
    #[arg(long)]
    pub test_source: Option<String>,
    /// Cap proposal-sourced candidate lists at N entries.
    #[arg(long)]
    pub candidate_truncation: Option<usize>,
    /// Evaluation split [default: val].
    #[arg(long)]
    pub split: Option<String>,
    /// Directory for reports, models, predictions and candidate lists.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Seed [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train questions [default: 500].
    #[arg(long)]
    pub train: Option<usize>,
    /// Validation questions [default: 100].
    #[arg(long)]
    pub val: Option<usize>,
    /// Word-vector dimension [default: 32].
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Image-feature dimension [default: 16].
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
