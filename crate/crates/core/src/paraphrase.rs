//! Paraphrase: fit a sparse linear-softmax surrogate to the black box on a
//! perturbed batch, then read node and feature contributions off its weights.
//!
//! The surrogate sees one slot per (domain node, feature). A node's slots are
//! gated to zero whenever the node is no longer within `k` hops of the center
//! in the perturbed graph. Training minimizes
//!
//! ```text
//! Σ_j weight(γ_j) Σ_c (f_c − g_c)² + λ‖W‖₁
//! ```
//!
//! by full-batch subgradient descent from `W = 0`, halving the step size
//! whenever a step would increase the objective. The L1 subgradient is taken
//! as 0 at 0, so a slot that is zero in every instance keeps weight exactly 0.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explanation::{extract, extract_over, Explanation, Method};
use crate::graph::{Adjacency, Graph};
use crate::perturbation::{domain_response, sample_batch, PerturbationConfig, PerturbedInstance};
use crate::predictor::{argmax, Predictor, Task};
use crate::translation::{translate, InterpretationDomain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `1 / γ`
    Inverse,
    /// `γ`
    Proportional,
}

impl WeightMode {
    fn weight(self, gamma: f64) -> f64 {
        match self {
            WeightMode::Inverse => 1.0 / gamma,
            WeightMode::Proportional => gamma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_mode: WeightMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 300,
            lr: 0.01,
            weight_mode: WeightMode::Inverse,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    /// `C × (n̂·d)`; columns `q·d..(q+1)·d` belong to domain position `q`.
    pub weights: Array2<f64>,
    pub hops: usize,
    pub domain: InterpretationDomain,
    /// Objective value after each epoch.
    pub losses: Vec<f64>,
}

impl SurrogateModel {
    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    /// Untrained surrogate with all weights zero.
    pub fn zeros(domain: InterpretationDomain, num_classes: usize) -> Self {
        let slots = domain.n_hat() * domain.feature_dim();
        Self {
            weights: Array2::zeros((num_classes, slots)),
            hops: domain.hops,
            domain,
            losses: Vec::new(),
        }
    }
}

fn check_shapes(a_p: &Adjacency, x_p: &Array2<f64>, center: usize) -> Result<()> {
    if x_p.nrows() != a_p.n() {
        return Err(Error::FeatureRows {
            expected: a_p.n(),
            found: x_p.nrows(),
        });
    }
    if center >= a_p.n() {
        return Err(Error::NodeOutOfRange {
            index: center,
            n: a_p.n(),
        });
    }
    Ok(())
}

/// Concatenation over domain nodes of their perturbed feature rows, each
/// gated by whether the node is still within `k` hops of the center.
pub fn surrogate_input(
    a_p: &Adjacency,
    x_p: &Array2<f64>,
    center: usize,
    k: usize,
) -> Result<Vec<f64>> {
    check_shapes(a_p, x_p, center)?;
    let gate = a_p.reachability_row(center, k);
    let d = x_p.ncols();
    let mut out = vec![0.0; a_p.n() * d];
    for (q, &open) in gate.iter().enumerate() {
        if open != 0 {
            for f in 0..d {
                out[q * d + f] = x_p[(q, f)];
            }
        }
    }
    Ok(out)
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Class probabilities of the surrogate on a perturbed instance.
pub fn surrogate_forward(
    model: &SurrogateModel,
    a_p: &Adjacency,
    x_p: &Array2<f64>,
) -> Result<Vec<f64>> {
    let input = surrogate_input(a_p, x_p, model.domain.center_pos(), model.hops)?;
    if input.len() != model.weights.ncols() {
        return Err(Error::DimensionMismatch {
            what: "surrogate input length",
            expected: model.weights.ncols(),
            found: input.len(),
        });
    }
    let mut logits: Vec<f64> = model
        .weights
        .rows()
        .into_iter()
        .map(|w| w.iter().zip(&input).map(|(a, b)| a * b).sum())
        .collect();
    softmax(&mut logits);
    Ok(logits)
}

/// Sparse design matrix, one row per instance.
struct Design {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Design {
    fn build(batch: &[PerturbedInstance], center: usize, k: usize, slots: usize) -> Result<Self> {
        let mut offsets = Vec::with_capacity(batch.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for inst in batch {
            let x = surrogate_input(&inst.adjacency, &inst.features, center, k)?;
            if x.len() != slots {
                return Err(Error::DimensionMismatch {
                    what: "surrogate input length",
                    expected: slots,
                    found: x.len(),
                });
            }
            for (col, &v) in x.iter().enumerate() {
                if v != 0.0 {
                    cols.push(col as u32);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Ok(Self {
            offsets,
            cols,
            vals,
        })
    }

    fn rows(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Objective and gradient. `w` and `grad` are slot-major (`slots × C`).
struct Objective<'a> {
    design: &'a Design,
    targets: Vec<&'a [f64]>,
    sample_weights: Vec<f64>,
    classes: usize,
    lambda: f64,
}

impl Objective<'_> {
    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let c_n = self.classes;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut logits = vec![0.0; c_n];
        let mut dz = vec![0.0; c_n];
        let mut loss = 0.0;
        for r in 0..self.design.rows() {
            let span = self.design.offsets[r]..self.design.offsets[r + 1];
            logits.iter_mut().for_each(|v| *v = 0.0);
            for p in span.clone() {
                let col = self.design.cols[p] as usize;
                let v = self.design.vals[p];
                let wrow = &w[col * c_n..(col + 1) * c_n];
                for c in 0..c_n {
                    logits[c] += v * wrow[c];
                }
            }
            softmax(&mut logits);
            let sw = self.sample_weights[r];
            let f = self.targets[r];
            let mut inner = 0.0;
            for c in 0..c_n {
                let diff = logits[c] - f[c];
                loss += sw * diff * diff;
                dz[c] = 2.0 * sw * diff;
                inner += logits[c] * dz[c];
            }
            // softmax Jacobian
            for c in 0..c_n {
                dz[c] = logits[c] * (dz[c] - inner);
            }
            for p in span {
                let col = self.design.cols[p] as usize;
                let v = self.design.vals[p];
                let grow = &mut grad[col * c_n..(col + 1) * c_n];
                for c in 0..c_n {
                    grow[c] += v * dz[c];
                }
            }
        }
        loss + self.lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Fits the surrogate on a perturbed batch of `dom`.
pub fn fit(
    dom: &InterpretationDomain,
    batch: &[PerturbedInstance],
    cfg: &FitConfig,
) -> Result<SurrogateModel> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let classes = first.response.len();
    for inst in batch {
        if inst.gamma.is_nan() || inst.gamma <= 0.0 {
            return Err(Error::NonPositiveEnergy(inst.gamma));
        }
        if inst.response.len() != classes {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: classes,
                found: inst.response.len(),
            });
        }
    }
    if cfg.lr.is_nan() || cfg.lr <= 0.0 || cfg.lambda.is_nan() || cfg.lambda < 0.0 {
        return Err(Error::InvalidConfig(
            "fit needs lr > 0 and lambda >= 0".into(),
        ));
    }
    let slots = dom.n_hat() * dom.feature_dim();
    let design = Design::build(batch, dom.center_pos(), dom.hops, slots)?;
    let objective = Objective {
        design: &design,
        targets: batch.iter().map(|i| i.response.as_slice()).collect(),
        sample_weights: batch
            .iter()
            .map(|i| cfg.weight_mode.weight(i.gamma))
            .collect(),
        classes,
        lambda: cfg.lambda,
    };

    let mut w = vec![0.0; slots * classes];
    let mut grad = vec![0.0; w.len()];
    let mut loss = objective.eval(&w, &mut grad);
    let mut candidate = vec![0.0; w.len()];
    let mut cand_grad = vec![0.0; w.len()];
    let mut lr = cfg.lr;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for ((c, &wi), &gi) in candidate.iter_mut().zip(&w).zip(&grad) {
            let sub = if wi > 0.0 {
                cfg.lambda
            } else if wi < 0.0 {
                -cfg.lambda
            } else {
                0.0
            };
            *c = wi - lr * (gi + sub);
        }
        let cand_loss = objective.eval(&candidate, &mut cand_grad);
        if cand_loss <= loss {
            std::mem::swap(&mut w, &mut candidate);
            std::mem::swap(&mut grad, &mut cand_grad);
            loss = cand_loss;
        } else {
            lr *= 0.5;
        }
        losses.push(loss);
    }

    let mut weights = Array2::zeros((classes, slots));
    for s in 0..slots {
        for c in 0..classes {
            weights[(c, s)] = w[s * classes + c];
        }
    }
    Ok(SurrogateModel {
        weights,
        hops: dom.hops,
        domain: dom.clone(),
        losses,
    })
}

fn check_class(model: &SurrogateModel, class: usize) -> Result<()> {
    if class >= model.num_classes() {
        return Err(Error::InvalidClass {
            label: class,
            classes: model.num_classes(),
        });
    }
    Ok(())
}

/// `I_j`: sum of absolute weights over node `j`'s feature slots.
pub fn node_contributions(model: &SurrogateModel, class: usize) -> Result<Vec<f64>> {
    check_class(model, class)?;
    let d = model.domain.feature_dim();
    let row = model.weights.row(class);
    Ok((0..model.domain.n_hat())
        .map(|q| (0..d).map(|f| row[q * d + f].abs()).sum())
        .collect())
}

/// `|w|` per (domain node, feature).
pub fn feature_scores(model: &SurrogateModel, class: usize) -> Result<Array2<f64>> {
    check_class(model, class)?;
    let d = model.domain.feature_dim();
    let row = model.weights.row(class);
    Ok(Array2::from_shape_fn(
        (model.domain.n_hat(), d),
        |(q, f)| row[q * d + f].abs(),
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub perturbation: PerturbationConfig,
    pub fit: FitConfig,
    /// Translation hop bound; defaults to the predictor's depth.
    pub hops: Option<usize>,
    /// Nodes to select; defaults to `⌈n̂/4⌉`.
    pub n_select: Option<usize>,
}

impl ExplainConfig {
    pub fn hops_for(&self, predictor: &dyn Predictor) -> usize {
        self.hops.unwrap_or_else(|| predictor.depth())
    }

    pub fn select_count(&self, available: usize) -> usize {
        self.n_select.unwrap_or(available.div_ceil(4).max(1))
    }
}

/// Per-center seed, so that neighbouring centers do not share perturbations.
pub fn center_seed(seed: u64, center: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        ^ (center as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Contributions of one explaining center.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterScores {
    pub domain: InterpretationDomain,
    pub target_class: usize,
    pub node_scores: Vec<f64>,
    pub feature_scores: Array2<f64>,
}

/// Runs perturbation and surrogate fitting for `dom`, reading contributions
/// at `target_class`.
pub fn score_domain(
    dom: InterpretationDomain,
    predictor: &dyn Predictor,
    cfg: &ExplainConfig,
    target_class: usize,
) -> Result<CenterScores> {
    let pcfg = PerturbationConfig {
        seed: center_seed(cfg.perturbation.seed, dom.center),
        ..cfg.perturbation.clone()
    };
    let batch = sample_batch(&dom, predictor, &pcfg)?;
    let model = fit(&dom, &batch, &cfg.fit)?;
    Ok(CenterScores {
        node_scores: node_contributions(&model, target_class)?,
        feature_scores: feature_scores(&model, target_class)?,
        target_class,
        domain: dom,
    })
}

fn require_task(predictor: &dyn Predictor, task: Task) -> Result<()> {
    if predictor.task() != task {
        return Err(Error::TaskMismatch {
            expected: task.name(),
            found: predictor.task().name(),
        });
    }
    Ok(())
}

/// Explains the prediction for node `i`.
pub fn explain_node(
    g: &Graph,
    i: usize,
    predictor: &dyn Predictor,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    require_task(predictor, Task::Node)?;
    let dom = translate(g, i, cfg.hops_for(predictor))?;
    explain_domain(dom, predictor, cfg)
}

/// Explains the center of an already translated domain.
pub fn explain_domain(
    dom: InterpretationDomain,
    predictor: &dyn Predictor,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    require_task(predictor, Task::Node)?;
    let base = domain_response(predictor, &dom, &dom.adjacency, &dom.features)?;
    let n_select = cfg.select_count(dom.n_hat());
    let scores = score_domain(dom, predictor, cfg, argmax(&base))?;
    extract(
        Method::Trap2,
        &scores.domain,
        scores.target_class,
        scores.node_scores,
        scores.feature_scores,
        n_select,
    )
}

/// Per-center contributions for a graph-level prediction: every node is
/// explained in turn with the graph head's response as the target.
pub fn graph_center_scores(
    g: &Graph,
    predictor: &dyn Predictor,
    cfg: &ExplainConfig,
) -> Result<Vec<CenterScores>> {
    require_task(predictor, Task::Graph)?;
    let full = predictor.predict(&g.adjacency, &g.features)?;
    let target = argmax(full.row(0).as_slice().expect("standard layout"));
    let hops = cfg.hops_for(predictor);
    (0..g.n())
        .into_par_iter()
        .map(|i| score_domain(translate(g, i, hops)?, predictor, cfg, target))
        .collect()
}

/// Mean over all `n` centers of each node's contribution; a center whose
/// domain does not contain the node contributes 0.
pub fn pool_scores(n: usize, d: usize, per_center: &[CenterScores]) -> (Vec<f64>, Array2<f64>) {
    let mut nodes = vec![0.0; n];
    let mut features = Array2::zeros((n, d));
    for cs in per_center {
        for (q, &v) in cs.domain.nodes.iter().enumerate() {
            nodes[v] += cs.node_scores[q];
            for f in 0..d {
                features[(v, f)] += cs.feature_scores[(q, f)];
            }
        }
    }
    let scale = 1.0 / n as f64;
    nodes.iter_mut().for_each(|s| *s *= scale);
    features.mapv_inplace(|s| s * scale);
    (nodes, features)
}

/// Explains a graph-level prediction by pooling per-center contributions.
pub fn explain_graph(
    g: &Graph,
    predictor: &dyn Predictor,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    let per_center = graph_center_scores(g, predictor, cfg)?;
    let target = per_center.first().map_or(0, |c| c.target_class);
    let (node_scores, feature_scores) = pool_scores(g.n(), g.feature_dim(), &per_center);
    let nodes: Vec<usize> = (0..g.n()).collect();
    extract_over(
        Method::Trap2,
        None,
        target,
        &nodes,
        &g.adjacency,
        node_scores,
        feature_scores,
        cfg.select_count(g.n()),
    )
}
