use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linecon_core::congraph::{EdgeAttrKind, Topology};
use linecon_core::corpus::Split;
use linecon_core::nn::ModelKind;

#[derive(Debug, Parser)]
#[command(
    name = "linecon",
    version,
    about = "Emotion recognition in conversations with line conversation graphs",
    long_about = "Emotion recognition in conversations with line conversation graphs.\n\n\
        Every command that writes files also writes <output>.run.json describing \
        the resolved configuration and the SHA-256 digests of its inputs and outputs.\n\n\
        LINECON_THREADS caps the worker thread count. Results do not depend on it."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest and feature file; exits 1 if any error is found.
    Validate(ValidateArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Build a conversation graph from a corpus.
    BuildGraph(BuildGraphArgs),
    /// Train a model on a graph's train split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Predict an emotion for every utterance in a graph.
    Predict(PredictArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct CorpusInput {
    /// Manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// LCFEAT01 feature file.
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: CorpusInput,
    /// Where to write the JSON validation report.
    #[arg(long, default_value = "validation.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output manifest path.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output feature file path.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of conversations.
    #[arg(long, default_value_t = 200)]
    pub convs: usize,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TopologyArg {
    /// Previous, next and self edges.
    Line,
    /// Every ordered pair inside a conversation, plus self edges.
    Full,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Line => Topology::Line,
            TopologyArg::Full => Topology::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EdgeAttrArg {
    None,
    /// Sentiment-shift scalar weights, consumed by gcn.
    SsWeight,
    /// Sentiment pair features [s_src, s_dst], consumed by gat.
    SsFeature,
}

impl From<EdgeAttrArg> for EdgeAttrKind {
    fn from(a: EdgeAttrArg) -> Self {
        match a {
            EdgeAttrArg::None => EdgeAttrKind::None,
            EdgeAttrArg::SsWeight => EdgeAttrKind::SsWeight,
            EdgeAttrArg::SsFeature => EdgeAttrKind::SsFeature,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub input: CorpusInput,
    /// Output graph file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "line")]
    pub topology: TopologyArg,
    #[arg(long, value_enum, default_value = "none")]
    pub edge_attr: EdgeAttrArg,
    /// ss-weight value for linked utterances whose sentiment differs.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub shift: f64,
    /// ss-weight value for linked utterances with equal sentiment.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub noshift: f64,
    /// ss-weight value for self edges.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub selfloop: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Gcn,
    Gat,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gcn => ModelKind::Gcn,
            ModelArg::Gat => ModelKind::Gat,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Output checkpoint. The history goes to <out>.history.json.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with any of: model, seed, hidden, max_epochs, patience, lr,
    /// weight_decay, beta1, beta2, eps, leaky_slope, ignore_edge_attr.
    /// Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without dev weighted-F1 improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Train without the graph's edge attributes even if present.
    #[arg(long)]
    pub ignore_edge_attr: bool,
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

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// JSON metrics report. The confusion matrix goes next to it as CSV
    /// unless --confusion is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// CSV of utt_id,emotion.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

pub fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n, k, t] = parts.as_slice() else {
        return Err(format!("expected n,k,t (three comma-separated sizes), got {s:?}"));
    };
    let num = |v: &str| v.parse::<usize>().ok().filter(|&x| x > 0).ok_or(format!("{v:?} is not a positive integer"));
    let dims = Dims {
        input: num(n)?,
        hidden: num(k)?,
        classes: num(t)?,
    };
    if dims.classes < 2 {
        return Err("need at least 2 classes".into());
    }
    Ok(dims)
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 5)]
    pub nodes: usize,
    /// Input, hidden and class sizes as n,k,t.
    #[arg(long, value_parser = parse_dims, default_value = "4,3,2")]
    pub dims: Dims,
    /// First seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value = "none")]
    pub edge_attr: EdgeAttrArg,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}
