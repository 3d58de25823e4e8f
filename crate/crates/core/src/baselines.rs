//! Reference explainers: random scores, greedy one-node masking, and input
//! gradient saliency. All of them emit the same [`Explanation`] as TraP2.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explanation::{extract, Explanation, Method};
use crate::graph::Adjacency;
use crate::perturbation::domain_response;
use crate::predictor::{argmax, Predictor, Task};
use crate::translation::InterpretationDomain;

/// Uniform random node and feature scores.
pub fn random_explainer(
    dom: &InterpretationDomain,
    seed: u64,
    n_select: usize,
) -> Result<Explanation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node_scores: Vec<f64> = (0..dom.n_hat()).map(|_| rng.random::<f64>()).collect();
    let feature_scores =
        Array2::from_shape_simple_fn((dom.n_hat(), dom.feature_dim()), || rng.random::<f64>());
    extract(
        Method::Random,
        dom,
        0,
        node_scores,
        feature_scores,
        n_select,
    )
}

/// How the greedy explainer hides a candidate node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyMask {
    /// Remove every edge incident to the node.
    #[default]
    IncidentEdges,
    /// Remove the incident edges and zero the node's features.
    WholeNode,
}

/// Greedy drops: for every non-center position `q`, the fall in the
/// probability of `class` after masking `q`. Issues exactly `n̂ − 1`
/// predictor calls. The center gets `+∞`.
pub fn greedy_scores(
    dom: &InterpretationDomain,
    predictor: &dyn Predictor,
    class: usize,
    base_prob: f64,
    mask: GreedyMask,
) -> Result<Vec<f64>> {
    let c = dom.center_pos();
    (0..dom.n_hat())
        .map(|q| {
            if q == c {
                return Ok(f64::INFINITY);
            }
            let mut a = dom.adjacency.clone();
            isolate(&mut a, q);
            let probs = if mask == GreedyMask::WholeNode {
                let mut x = dom.features.clone();
                x.row_mut(q).fill(0.0);
                domain_response(predictor, dom, &a, &x)?
            } else {
                domain_response(predictor, dom, &a, &dom.features)?
            };
            Ok(base_prob - probs[class])
        })
        .collect()
}

fn isolate(a: &mut Adjacency, q: usize) {
    for j in 0..a.n() {
        a.set(q, j, false);
        a.set(j, q, false);
    }
}

/// Ranks nodes by how much masking each one lowers the predicted class.
pub fn greedy_explainer(
    dom: &InterpretationDomain,
    predictor: &dyn Predictor,
    mask: GreedyMask,
    n_select: usize,
) -> Result<Explanation> {
    if predictor.task() != Task::Node {
        return Err(Error::TaskMismatch {
            expected: Task::Node.name(),
            found: predictor.task().name(),
        });
    }
    let base = domain_response(predictor, dom, &dom.adjacency, &dom.features)?;
    let class = argmax(&base);
    let node_scores = greedy_scores(dom, predictor, class, base[class], mask)?;
    let feature_scores = Array2::zeros((dom.n_hat(), dom.feature_dim()));
    extract(
        Method::Greedy,
        dom,
        class,
        node_scores,
        feature_scores,
        n_select,
    )
}

/// Which input the gradient explainer differentiates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradSource {
    #[default]
    Features,
    /// Node score is the L1 norm of the node's adjacency row and column
    /// gradients.
    Adjacency,
}

/// Gradient saliency at the unperturbed domain. `target_class` defaults to
/// the predicted class.
pub fn grad_explainer(
    dom: &InterpretationDomain,
    predictor: &dyn Predictor,
    target_class: Option<usize>,
    source: GradSource,
    n_select: usize,
) -> Result<Explanation> {
    let class = match target_class {
        Some(c) => c,
        None => argmax(&domain_response(
            predictor,
            dom,
            &dom.adjacency,
            &dom.features,
        )?),
    };
    let node = (predictor.task() == Task::Node).then(|| dom.center_pos());
    let grads = predictor.input_gradients(&dom.adjacency, &dom.features, class, node)?;
    let feature_scores = grads.features.mapv(f64::abs);
    let node_scores = match source {
        GradSource::Features => feature_scores.rows().into_iter().map(|r| r.sum()).collect(),
        GradSource::Adjacency => {
            let g = &grads.adjacency;
            (0..dom.n_hat())
                .map(|q| {
                    g.row(q).iter().map(|v| v.abs()).sum::<f64>()
                        + g.column(q).iter().map(|v| v.abs()).sum::<f64>()
                        - g[(q, q)].abs()
                })
                .collect()
        }
    };
    extract(
        Method::Grad,
        dom,
        class,
        node_scores,
        feature_scores,
        n_select,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::predictor::{BlackBox, ReferenceGcn};
    use crate::translation::translate;

    fn path_domain(n: usize, center: usize) -> InterpretationDomain {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        let a = Adjacency::from_edges(n, &edges, false).unwrap();
        let x = Array2::from_shape_fn((n, 3), |(i, f)| ((i * 3 + f) % 5) as f64 * 0.3 + 0.1);
        translate(&Graph::new(a, x, false).unwrap(), center, 3).unwrap()
    }

    #[test]
    fn random_is_seeded() {
        let d = path_domain(6, 0);
        let a = random_explainer(&d, 9, 2).unwrap();
        let b = random_explainer(&d, 9, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.node_scores,
            random_explainer(&d, 10, 2).unwrap().node_scores
        );
    }

    #[test]
    fn random_single_node() {
        let g = Graph::new(Adjacency::zeros(1), Array2::ones((1, 2)), false).unwrap();
        let d = translate(&g, 0, 2).unwrap();
        assert_eq!(random_explainer(&d, 1, 1).unwrap().selected_nodes, vec![0]);
    }

    #[test]
    fn greedy_includes_center_first() {
        let d = path_domain(5, 2);
        let model = ReferenceGcn::new(Task::Node, 3, 2, 8, 3, 4).unwrap();
        let e = greedy_explainer(&d, &model, GreedyMask::IncidentEdges, 3).unwrap();
        assert_eq!(e.selected_nodes[0], 2);
        assert_eq!(e.node_scores[0], f64::INFINITY);
    }

    #[test]
    fn greedy_symmetric_nodes_tie() {
        // star: leaves are interchangeable
        let a = Adjacency::from_edges(4, &[(0, 1), (0, 2), (0, 3)], false).unwrap();
        let g = Graph::new(a, Array2::ones((4, 2)), false).unwrap();
        let d = translate(&g, 0, 3).unwrap();
        let model = ReferenceGcn::new(Task::Node, 2, 2, 8, 3, 4).unwrap();
        let e = greedy_explainer(&d, &model, GreedyMask::IncidentEdges, 2).unwrap();
        assert_eq!(e.node_scores[1], e.node_scores[2]);
        assert_eq!(e.node_scores[2], e.node_scores[3]);
        assert_eq!(e.selected_nodes, vec![0, 1]);
    }

    #[test]
    fn grad_zero_model() {
        let d = path_domain(4, 0);
        let model = ReferenceGcn::zeros(Task::Node, 3, 2, 4, 3);
        let e = grad_explainer(&d, &model, None, GradSource::Features, 2).unwrap();
        assert!(e.node_scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn grad_needs_gradients() {
        let d = path_domain(4, 0);
        let model = BlackBox(ReferenceGcn::new(Task::Node, 3, 2, 4, 3, 1).unwrap());
        assert!(matches!(
            grad_explainer(&d, &model, None, GradSource::Features, 2),
            Err(Error::GradientUnsupported)
        ));
    }

    #[test]
    fn grad_ignores_nodes_beyond_reach() {
        // 2-layer model on a path: position of node 3 is three hops out
        let edges = [(0, 1), (1, 2), (2, 3)];
        let a = Adjacency::from_edges(4, &edges, false).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, f)| 0.2 + (i + f) as f64 * 0.1);
        let g = Graph::new(a, x, false).unwrap();
        let d = translate(&g, 0, 3).unwrap();
        let model = ReferenceGcn::new(Task::Node, 3, 2, 6, 2, 3).unwrap();
        let e = grad_explainer(&d, &model, None, GradSource::Features, 2).unwrap();
        assert_eq!(e.node_scores[3], 0.0);
        assert!(e.node_scores[0] > 0.0);
    }
}
