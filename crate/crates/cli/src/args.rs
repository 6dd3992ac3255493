use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fedhunter", version, about = "Federated intrusion detection with explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize NetFlow CSV or build a provenance graph from an event log
    #[command(subcommand)]
    Preprocess(Preprocess),
    /// Federated training
    Train(TrainArgs),
    /// Detection metrics of a checkpoint on a dataset
    Evaluate(EvaluateArgs),
    /// Shapley-value explanations
    #[command(subcommand)]
    Explain(Explain),
    /// Penultimate-layer decision-quality checks
    #[command(subcommand)]
    Quality(Quality),
    /// Synthetic datasets in the real input schemas
    #[command(subcommand)]
    Synth(Synth),
    /// Rerun a command from its manifest and compare the artifacts
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum Preprocess {
    Netflow(PreprocessNetflow),
    Provenance(PreprocessProvenance),
}

#[derive(Debug, Args)]
pub struct PreprocessNetflow {
    #[arg(long)]
    pub input: PathBuf,
    /// Feature file; a `.bin` extension selects the binary layout
    #[arg(long)]
    pub output: PathBuf,
    /// Fail on the first malformed row
    #[arg(long)]
    pub strict: bool,
    /// Clamp out-of-range integers instead of rejecting the row
    #[arg(long)]
    pub clamp: bool,
    /// Zero the two port features
    #[arg(long)]
    pub drop_ports: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessProvenance {
    /// JSON Lines event log
    #[arg(long)]
    pub input: PathBuf,
    /// Graph archive
    #[arg(long)]
    pub output: PathBuf,
    /// Require every node to be declared before the edges that use it
    #[arg(long)]
    pub single_pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    CnnGru,
    EGraphsage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchArg {
    Full,
    Size(usize),
}

fn parse_batch(s: &str) -> Result<BatchArg, String> {
    if s == "full" {
        return Ok(BatchArg::Full);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive batch size or 'full', got '{s}'")),
        Ok(n) => Ok(BatchArg::Size(n)),
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_open_fraction(s: &str) -> Result<f64, String> {
    let v = parse_fraction(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite non-negative number"))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Feature file (cnn-gru) or graph archive (e-graphsage)
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate on this dataset after every round
    #[arg(long, conflicts_with = "holdout")]
    pub test: Option<PathBuf>,
    /// Hold out this stratified fraction of the data for per-round evaluation
    #[arg(long, value_parser = parse_open_fraction)]
    pub holdout: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub clients: usize,
    #[arg(long, default_value_t = 20)]
    pub rounds: usize,
    /// Local epochs per round [default: 25 for cnn-gru, 100 for e-graphsage]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Positive size or `full` [default: 512 for cnn-gru, full for e-graphsage]
    #[arg(long, value_parser = parse_batch)]
    pub batch_size: Option<BatchArg>,
    #[arg(long, default_value_t = 1e-3, value_parser = parse_positive)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint JSON
    #[arg(long)]
    pub output: PathBuf,
    /// Round log JSONL [default: next to the checkpoint]
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.5, value_parser = parse_fraction)]
    pub threshold: f64,
    /// Report JSON; printed to stdout either way
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Explain {
    /// KernelSHAP (or exact enumeration) for one NetFlow instance
    KernelShap(KernelShapArgs),
    /// GradientSHAP for one NetFlow instance or one provenance edge
    GradientShap(GradientShapArgs),
}

#[derive(Debug, Args)]
pub struct KernelShapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub instance_index: usize,
    /// Background samples drawn from the data
    #[arg(long, default_value_t = 100)]
    pub background: usize,
    /// Coalition budget; all coalitions are used when 2^M fits
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    /// Enumerate every coalition with the exact Shapley formula
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradientModeArg {
    ExpectedGradients,
    NormalizedWeights,
}

#[derive(Debug, Args)]
pub struct GradientShapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Feature file, for NetFlow instances
    #[arg(long, required_unless_present = "graph", conflicts_with = "graph")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub instance_index: Option<usize>,
    /// Graph archive, for edges
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, requires = "graph")]
    pub edge_id: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub hops: usize,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Background samples for the NetFlow baseline (their mean)
    #[arg(long, default_value_t = 100)]
    pub background: usize,
    #[arg(long, value_enum, default_value_t = GradientModeArg::ExpectedGradients)]
    pub mode: GradientModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Explanation JSON; edge explanations also get a `.dot` file beside it
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Quality {
    /// Build the per-category penultimate dataset
    Build(QualityBuildArgs),
    /// Classify one prediction's reliability
    Check(QualityCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Manhattan,
}

#[derive(Debug, Args)]
pub struct QualityBuildArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.5, value_parser = parse_fraction)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Also export the vectors as CSV
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QualityCheckArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Quality dataset from `quality build`
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub instance_index: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Synth {
    /// Raw NetFlow CSV
    Netflow(SynthNetflowArgs),
    /// Provenance event log (JSON Lines)
    Provenance(SynthProvenanceArgs),
}

#[derive(Debug, Args)]
pub struct SynthNetflowArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Probability a row comes from its class profile rather than a shared one
    #[arg(long, default_value_t = 0.95, value_parser = parse_fraction)]
    pub separation: f64,
    #[arg(long, default_value_t = fedhunter_core::synth::DEFAULT_ATTACK_FRACTION, value_parser = parse_fraction)]
    pub attack_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthProvenanceArgs {
    #[arg(long, default_value_t = 2000)]
    pub nodes: usize,
    #[arg(long, default_value_t = 10_000)]
    pub edges: usize,
    #[arg(long, default_value_t = 0.007, value_parser = parse_fraction)]
    pub attack_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
