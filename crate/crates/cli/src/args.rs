use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trap2_core::baselines::{GradSource, GreedyMask};
use trap2_core::paraphrase::WeightMode;
use trap2_core::perturbation::{CosineReading, FeaturePattern, StructurePattern};
use trap2_core::predictor::{Optimizer, Task};
use trap2_core::synthetic::DatasetKind;
use trap2_core::Method;

/// Parses an enum argument by its serialized name.
fn serde_name<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "trap2",
    version,
    about = "Explain graph neural network predictions with local surrogates"
)]
pub struct Cli {
    /// Worker threads for per-node work (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark graph.
    Gen(GenArgs),
    /// Train the reference GCN.
    Train(TrainArgs),
    /// Explain one node (or a whole graph) with one method.
    Explain(ExplainArgs),
    /// Evaluate explainers over all motif nodes of a benchmark graph.
    Eval(EvalArgs),
    /// Render a saved explanation as Graphviz DOT.
    ExportDot(ExportDotArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_name = "KIND")]
    pub dataset: Option<DatasetKind>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base graph nodes [default: 300; trees use 2^(depth+1)-1]
    #[arg(long)]
    pub base_nodes: Option<usize>,
    /// Motif attachments [default: 80]
    #[arg(long)]
    pub motif_count: Option<usize>,
    /// Random extra edges as a fraction of node count [default: 0.01]
    #[arg(long)]
    pub noise_edge_fraction: Option<f64>,
    /// [default: 10]
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Edges per new node in the BA process [default: 1]
    #[arg(long)]
    pub ba_edges_per_node: Option<usize>,
    /// Binary tree depth, root at level 0 [default: 8]
    #[arg(long)]
    pub tree_depth: Option<u32>,
    /// Edges joining the two ba-community halves [default: 70]
    #[arg(long)]
    pub community_bridge_edges: Option<usize>,
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Graph JSON (a single graph, or an array of graphs for the graph task)
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// [default: node]
    #[arg(long, value_parser = serde_name::<Task>)]
    pub task: Option<Task>,
    /// [default: 2000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0.005]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training fraction [default: 0.8]
    #[arg(long)]
    pub split: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: adam]
    #[arg(long, value_parser = serde_name::<Optimizer>)]
    pub optimizer: Option<Optimizer>,
    /// [default: 0.02]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Hidden width [default: 20]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Message-passing layers [default: 3]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Save without gradient support, so only predictions are available
    #[arg(long)]
    pub black_box: bool,
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainerArgs {
    /// Edge perturbation pattern [default: removing]
    #[arg(long, value_parser = serde_name::<StructurePattern>)]
    pub structure_pattern: Option<StructurePattern>,
    /// Feature perturbation pattern [default: masking]
    #[arg(long, value_parser = serde_name::<FeaturePattern>)]
    pub feature_pattern: Option<FeaturePattern>,
    /// Edge-keep probability p1 [default: 0.5]
    #[arg(long)]
    pub p1: Option<f64>,
    /// Feature-keep probability p2 [default: 0.8]
    #[arg(long)]
    pub p2: Option<f64>,
    /// Keep the center's own edges fixed [default: true]
    #[arg(long)]
    pub protect_one_hop: Option<bool>,
    /// Perturbations per explanation [default: 1500]
    #[arg(long)]
    pub m: Option<usize>,
    /// Hop bound for the structural energy [default: the domain's]
    #[arg(long)]
    pub energy_hops: Option<usize>,
    /// Kernel width delta [default: 25]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Structural energy weight [default: 1]
    #[arg(long)]
    pub lambda_a: Option<f64>,
    /// Feature energy weight [default: 1]
    #[arg(long)]
    pub lambda_x: Option<f64>,
    /// Reading of the cosine term in the kernel [default: distance]
    #[arg(long, value_parser = serde_name::<CosineReading>)]
    pub cosine: Option<CosineReading>,
    /// Divide the feature energy by the domain size [default: false]
    #[arg(long)]
    pub normalize_feature_energy: Option<bool>,
    /// L1 strength of the surrogate [default: 0.001]
    #[arg(long)]
    pub l1: Option<f64>,
    /// Surrogate training epochs [default: 300]
    #[arg(long)]
    pub surrogate_epochs: Option<usize>,
    /// Surrogate learning rate [default: 0.01]
    #[arg(long)]
    pub surrogate_lr: Option<f64>,
    /// Per-instance loss weight [default: inverse]
    #[arg(long, value_parser = serde_name::<WeightMode>)]
    pub weight_mode: Option<WeightMode>,
    /// Translation hop bound [default: the model depth]
    #[arg(long)]
    pub hops: Option<usize>,
    /// Nodes to select [default: ceil(n/4), or the motif size in eval]
    #[arg(long)]
    pub n_select: Option<usize>,
    /// What the greedy baseline masks [default: incident-edges]
    #[arg(long, value_parser = serde_name::<GreedyMask>)]
    pub greedy_mask: Option<GreedyMask>,
    /// What the gradient baseline differentiates [default: features]
    #[arg(long, value_parser = serde_name::<GradSource>)]
    pub grad_source: Option<GradSource>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Node to explain; omit for a graph-level explanation
    #[arg(long)]
    pub node: Option<usize>,
    /// [default: trap2]
    #[arg(long)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    /// Write the explanation JSON here instead of stdout
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub export_dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Benchmark graph JSON with motif ground truth
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Comma-separated methods [default: trap2,random,greedy,grad]
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Evaluate a seeded sample of this many motif nodes
    #[arg(long)]
    pub sample: Option<usize>,
    /// Dataset label in the report [default: the file stem]
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportDotArgs {
    /// Explanation JSON written by `explain`
    #[arg(long, value_name = "FILE")]
    pub explanation: PathBuf,
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}
