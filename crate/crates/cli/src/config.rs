use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use trap2_core::baselines::{GradSource, GreedyMask};
use trap2_core::predictor::{Task, TrainConfig};
use trap2_core::synthetic::DatasetSpec;
use trap2_core::{ExplainConfig, Method};

use crate::args::{ExplainerArgs, GenArgs, TrainArgs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub task: Task,
    pub hidden: usize,
    pub depth: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            task: Task::Node,
            hidden: 20,
            depth: 3,
        }
    }
}

/// Everything a run can be configured with. Any section may be omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<DatasetSpec>,
    pub train: TrainConfig,
    pub model: ModelShape,
    pub explain: ExplainConfig,
    pub greedy_mask: GreedyMask,
    pub grad_source: GradSource,
    pub methods: Option<Vec<Method>>,
    pub sample: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

macro_rules! set {
    ($($target:expr => $value:expr),* $(,)?) => {
        $(if let Some(v) = $value {
            $target = v;
        })*
    };
}

pub fn dataset_spec(cfg: &RunConfig, args: &GenArgs) -> Result<DatasetSpec> {
    let mut spec = match (args.dataset, &cfg.dataset) {
        (Some(kind), Some(base)) if base.kind != kind => DatasetSpec::for_kind(kind, base.seed),
        (_, Some(base)) => base.clone(),
        (Some(kind), None) => DatasetSpec::for_kind(kind, 0),
        (None, None) => anyhow::bail!(
            "no dataset kind given; pass --dataset or a config with a dataset section"
        ),
    };
    set! {
        spec.seed => args.seed,
        spec.base_nodes => args.base_nodes,
        spec.motif_count => args.motif_count,
        spec.noise_edge_fraction => args.noise_edge_fraction,
        spec.feature_dim => args.feature_dim,
        spec.ba_edges_per_node => args.ba_edges_per_node,
        spec.tree_depth => args.tree_depth,
        spec.community_bridge_edges => args.community_bridge_edges,
    }
    Ok(spec)
}

pub fn train_settings(cfg: &RunConfig, args: &TrainArgs) -> (TrainConfig, ModelShape) {
    let mut train = cfg.train.clone();
    let mut shape = cfg.model.clone();
    set! {
        train.epochs => args.epochs,
        train.lr => args.lr,
        train.split => args.split,
        train.seed => args.seed,
        train.optimizer => args.optimizer,
        train.weight_decay => args.weight_decay,
        shape.task => args.task,
        shape.hidden => args.hidden,
        shape.depth => args.depth,
    }
    (train, shape)
}

/// Applies explainer flags on top of the config file.
pub fn apply_explainer(cfg: &mut RunConfig, args: &ExplainerArgs) {
    let p = &mut cfg.explain.perturbation;
    set! {
        p.structure_pattern => args.structure_pattern,
        p.feature_pattern => args.feature_pattern,
        p.p1 => args.p1,
        p.p2 => args.p2,
        p.protect_one_hop => args.protect_one_hop,
        p.m => args.m,
        p.delta => args.delta,
        p.lambda_a => args.lambda_a,
        p.lambda_x => args.lambda_x,
        p.cosine => args.cosine,
        p.normalize_feature_energy => args.normalize_feature_energy,
        p.seed => args.seed,
    }
    if args.energy_hops.is_some() {
        p.energy_hops = args.energy_hops;
    }
    let f = &mut cfg.explain.fit;
    set! {
        f.lambda => args.l1,
        f.epochs => args.surrogate_epochs,
        f.lr => args.surrogate_lr,
        f.weight_mode => args.weight_mode,
        cfg.greedy_mask => args.greedy_mask,
        cfg.grad_source => args.grad_source,
    }
    if args.hops.is_some() {
        cfg.explain.hops = args.hops;
    }
    if args.n_select.is_some() {
        cfg.explain.n_select = args.n_select;
    }
}
