//! Explanation metrics and the batch evaluation harness over motif nodes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    grad_explainer, greedy_explainer, random_explainer, GradSource, GreedyMask,
};
use crate::error::{Error, Result};
use crate::explanation::{Explanation, Method};
use crate::graph::Graph;
use crate::paraphrase::{center_seed, explain_domain, ExplainConfig};
use crate::perturbation::domain_response;
use crate::predictor::{argmax, Predictor, Task};
use crate::synthetic::{ground_truth_motif, motif_nodes};
use crate::translation::{translate, InterpretationDomain};

/// `|V̂ ∩ truth| / |truth|`; the two sets must have the same size.
pub fn accuracy(selected: &[usize], truth: &[usize]) -> Result<f64> {
    if selected.len() != truth.len() {
        return Err(Error::SelectionSizeMismatch {
            selected: selected.len(),
            truth: truth.len(),
        });
    }
    overlap(selected, truth)
}

/// `|V̂ ∩ truth| / |truth|` without the size check, for domains smaller than
/// the motif.
pub fn overlap(selected: &[usize], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::MissingGroundTruth);
    }
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let hits = selected
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|v| truth.contains(v))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Change in the predicted-class probability of the center when everything
/// outside `V̂ ∪ {center}` is masked inside the domain.
pub fn fidelity(
    dom: &InterpretationDomain,
    expl: &Explanation,
    predictor: &dyn Predictor,
) -> Result<f64> {
    let full = domain_response(predictor, dom, &dom.adjacency, &dom.features)?;
    let class = argmax(&full);
    let mut keep = vec![false; dom.n_hat()];
    keep[dom.center_pos()] = true;
    for v in &expl.selected_nodes {
        if let Some(q) = dom.position_of(*v) {
            keep[q] = true;
        }
    }
    let mut a = dom.adjacency.clone();
    let mut x = dom.features.clone();
    for q in (0..dom.n_hat()).filter(|&q| !keep[q]) {
        x.row_mut(q).fill(0.0);
        for j in 0..dom.n_hat() {
            a.set(q, j, false);
            a.set(j, q, false);
        }
    }
    let masked = domain_response(predictor, dom, &a, &x)?;
    Ok((full[class] - masked[class]).abs())
}

/// Contrast between the weakest of the top `n` scores and the mean of the
/// rest: `(ratio, diff)`. A zero outside mean gives an infinite ratio.
pub fn contrastivity(node_scores: &[f64], n: usize) -> Result<(f64, f64)> {
    if n == 0 || node_scores.len() <= n {
        return Err(Error::NoOutsideNodes {
            top: n,
            available: node_scores.len(),
        });
    }
    let mut sorted = node_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let s_min = sorted[n - 1];
    let out = &sorted[n..];
    let mean_out = out.iter().sum::<f64>() / out.len() as f64;
    let ratio = if mean_out == 0.0 {
        f64::INFINITY
    } else {
        s_min / mean_out
    };
    Ok((ratio, s_min - mean_out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Label written into report rows.
    pub dataset: String,
    pub methods: Vec<Method>,
    pub explain: ExplainConfig,
    /// Evaluate a seeded sample of this many motif nodes instead of all.
    pub sample: Option<usize>,
    /// Seed for sampling and for the random explainer.
    pub seed: u64,
    pub greedy_mask: GreedyMask,
    pub grad_source: GradSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            methods: Method::ALL.to_vec(),
            explain: ExplainConfig::default(),
            sample: None,
            seed: 0,
            greedy_mask: GreedyMask::default(),
            grad_source: GradSource::default(),
        }
    }
}

/// Metrics of one method on one node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeResult {
    pub node: usize,
    pub method: Method,
    pub accuracy: f64,
    pub fidelity: f64,
    /// `None` when the domain has no node outside the top `n`.
    pub contrast: Option<(f64, f64)>,
}

/// Runs `method` on node `i` with the evaluation selection size.
pub fn explain_with(
    method: Method,
    g: &Graph,
    i: usize,
    predictor: &dyn Predictor,
    cfg: &EvalConfig,
    n_select: Option<usize>,
) -> Result<(InterpretationDomain, Explanation)> {
    let dom = translate(g, i, cfg.explain.hops_for(predictor))?;
    let n_select = n_select
        .unwrap_or_else(|| cfg.explain.select_count(dom.n_hat()))
        .min(dom.n_hat());
    let expl = match method {
        Method::Trap2 => {
            let ecfg = ExplainConfig {
                n_select: Some(n_select),
                ..cfg.explain.clone()
            };
            explain_domain(dom.clone(), predictor, &ecfg)?
        }
        Method::Random => random_explainer(&dom, center_seed(cfg.seed, i), n_select)?,
        Method::Greedy => greedy_explainer(&dom, predictor, cfg.greedy_mask, n_select)?,
        Method::Grad => grad_explainer(&dom, predictor, None, cfg.grad_source, n_select)?,
    };
    Ok((dom, expl))
}

/// All three metrics of `method` on motif node `i`.
pub fn evaluate_node(
    method: Method,
    g: &Graph,
    i: usize,
    predictor: &dyn Predictor,
    cfg: &EvalConfig,
) -> Result<NodeResult> {
    let truth = ground_truth_motif(g, i)?;
    let (dom, expl) = explain_with(method, g, i, predictor, cfg, Some(truth.len()))?;
    let n = expl.selected_nodes.len();
    Ok(NodeResult {
        node: i,
        method,
        accuracy: overlap(&expl.selected_nodes, &truth)?,
        fidelity: fidelity(&dom, &expl, predictor)?,
        contrast: contrastivity(&expl.node_scores, n).ok(),
    })
}

/// Motif nodes to evaluate: all of them, or a seeded sample in ascending order.
pub fn evaluation_nodes(g: &Graph, sample: Option<usize>, seed: u64) -> Result<Vec<usize>> {
    let mut nodes = motif_nodes(g)?;
    if nodes.is_empty() {
        return Err(Error::MissingGroundTruth);
    }
    if let Some(s) = sample {
        if s < nodes.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            nodes.shuffle(&mut rng);
            nodes.truncate(s);
            nodes.sort_unstable();
        }
    }
    Ok(nodes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_nodes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub config: EvalConfig,
}

impl EvalReport {
    pub fn get(&self, method: Method, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.metric == metric)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?)?;
        std::fs::write(json_path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-node results for every configured method, in method then node order.
pub fn evaluate_nodes(
    g: &Graph,
    predictor: &dyn Predictor,
    cfg: &EvalConfig,
) -> Result<Vec<Vec<NodeResult>>> {
    if predictor.task() != Task::Node {
        return Err(Error::TaskMismatch {
            expected: Task::Node.name(),
            found: predictor.task().name(),
        });
    }
    if cfg.methods.is_empty() {
        return Ok(Vec::new());
    }
    let nodes = evaluation_nodes(g, cfg.sample, cfg.seed)?;
    cfg.methods
        .iter()
        .map(|&m| {
            nodes
                .par_iter()
                .map(|&i| evaluate_node(m, g, i, predictor, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Aggregates per-node results into report rows.
pub fn summarize(results: &[Vec<NodeResult>], cfg: &EvalConfig) -> EvalReport {
    let mut rows = Vec::new();
    for per_node in results {
        let Some(first) = per_node.first() else {
            continue;
        };
        let method = first.method;
        let ratios: Vec<f64> = per_node
            .iter()
            .filter_map(|r| r.contrast.map(|c| c.0))
            .filter(|v| v.is_finite())
            .collect();
        let diffs: Vec<f64> = per_node
            .iter()
            .filter_map(|r| r.contrast.map(|c| c.1))
            .filter(|v| v.is_finite())
            .collect();
        let metrics: [(&str, Vec<f64>); 4] = [
            ("accuracy", per_node.iter().map(|r| r.accuracy).collect()),
            ("fidelity", per_node.iter().map(|r| r.fidelity).collect()),
            ("contrast_ratio", ratios),
            ("contrast_diff", diffs),
        ];
        for (metric, values) in metrics {
            let (mean, std) = mean_std(&values);
            rows.push(ReportRow {
                dataset: cfg.dataset.clone(),
                method,
                metric: metric.to_string(),
                mean,
                std,
                n_nodes: values.len(),
                seed: cfg.seed,
            });
        }
    }
    EvalReport {
        rows,
        config: cfg.clone(),
    }
}

/// Runs every method over the motif nodes of `g` and averages the metrics.
pub fn evaluate(g: &Graph, predictor: &dyn Predictor, cfg: &EvalConfig) -> Result<EvalReport> {
    Ok(summarize(&evaluate_nodes(g, predictor, cfg)?, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[3, 2, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 8, 9], &[1, 2, 3, 4, 5]).unwrap(), 0.6);
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(Error::SelectionSizeMismatch { .. })
        ));
    }

    #[test]
    fn contrast_cases() {
        assert_eq!(contrastivity(&[1.0; 6], 3).unwrap(), (1.0, 0.0));
        assert_eq!(
            contrastivity(&[10.0, 10.0, 2.0, 2.0], 2).unwrap(),
            (5.0, 8.0)
        );
        assert_eq!(contrastivity(&[3.0, 0.0], 1).unwrap().0, f64::INFINITY);
        assert!(contrastivity(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn contrast_ratio_scale_invariant() {
        let s = [0.3, 1.7, 0.2, 0.9, 0.4];
        let scaled: Vec<f64> = s.iter().map(|v| v * 8.0).collect();
        assert_eq!(
            contrastivity(&s, 2).unwrap().0,
            contrastivity(&scaled, 2).unwrap().0
        );
    }

    #[test]
    fn empty_methods_give_empty_report() {
        use crate::graph::Adjacency;
        use crate::predictor::ReferenceGcn;
        use ndarray::Array2;
        let g = Graph::new(Adjacency::zeros(2), Array2::ones((2, 2)), false).unwrap();
        let model = ReferenceGcn::new(Task::Node, 2, 2, 4, 3, 0).unwrap();
        let cfg = EvalConfig {
            methods: vec![],
            ..Default::default()
        };
        assert!(evaluate(&g, &model, &cfg).unwrap().rows.is_empty());
    }
}
