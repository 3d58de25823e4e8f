//! The explanation type shared by every explainer, its JSON layout and DOT
//! rendering.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::translation::InterpretationDomain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Trap2,
    Random,
    Greedy,
    Grad,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Trap2, Method::Random, Method::Greedy, Method::Grad];

    pub fn name(self) -> &'static str {
        match self {
            Method::Trap2 => "trap2",
            Method::Random => "random",
            Method::Greedy => "greedy",
            Method::Grad => "grad",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Node and feature attributions over a set of candidate nodes, plus the
/// selected explanation subgraph.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub method: Method,
    /// Explained node; `None` for graph-level explanations.
    pub center: Option<usize>,
    pub target_class: usize,
    /// Candidate nodes (original indices) in domain order.
    pub nodes: Vec<usize>,
    /// Contribution score per candidate node.
    pub node_scores: Vec<f64>,
    /// `|nodes| × d` per-(node, feature) scores.
    pub feature_scores: Array2<f64>,
    /// Selected nodes, highest score first.
    pub selected_nodes: Vec<usize>,
    pub selected_edges: Vec<(usize, usize)>,
    /// Feature indices kept for each selected node, aligned with
    /// `selected_nodes`.
    pub selected_features: Vec<Vec<usize>>,
}

impl Explanation {
    pub fn score_of(&self, original: usize) -> Option<f64> {
        self.nodes
            .iter()
            .position(|&v| v == original)
            .map(|p| self.node_scores[p])
    }

    pub fn to_file(&self, config: serde_json::Value) -> ExplanationFile {
        ExplanationFile {
            method: self.method,
            center: self.center,
            target_class: self.target_class,
            node_scores: self
                .nodes
                .iter()
                .copied()
                .zip(self.node_scores.iter().map(|&v| v.is_finite().then_some(v)))
                .collect(),
            feature_scores: self
                .nodes
                .iter()
                .copied()
                .zip(self.feature_scores.rows().into_iter().map(|r| r.to_vec()))
                .collect(),
            selected_nodes: self.selected_nodes.clone(),
            selected_edges: self.selected_edges.iter().map(|&(u, v)| [u, v]).collect(),
            selected_features: self
                .selected_nodes
                .iter()
                .copied()
                .zip(self.selected_features.iter().cloned())
                .collect(),
            config,
        }
    }

    /// Graphviz rendering of the candidate nodes: selected nodes filled, the
    /// center highlighted, and the selected edge set drawn.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let name = match self.center {
            Some(c) => format!("explanation_{c}"),
            None => "explanation_graph".to_string(),
        };
        writeln!(out, "graph {name} {{").unwrap();
        writeln!(out, "  node [shape=circle, style=filled, fillcolor=white];").unwrap();
        let mut order: Vec<(usize, f64)> = self
            .nodes
            .iter()
            .copied()
            .zip(self.node_scores.iter().copied())
            .collect();
        order.sort_by_key(|&(v, _)| v);
        for (v, s) in order {
            let selected = self.selected_nodes.contains(&v);
            let mut attrs = vec![
                format!("label=\"{v}\""),
                format!("tooltip=\"score={s:.6}\""),
            ];
            if Some(v) == self.center {
                attrs.push("fillcolor=orange".into());
                attrs.push("penwidth=3".into());
            } else if selected {
                attrs.push("fillcolor=lightblue".into());
            }
            writeln!(out, "  {v} [{}];", attrs.join(", ")).unwrap();
        }
        for &(u, v) in &self.selected_edges {
            writeln!(out, "  {u} -- {v};").unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// JSON layout of an explanation. Non-finite scores (the greedy explainer
/// pins the center at +∞) are written as `null`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExplanationFile {
    pub method: Method,
    pub center: Option<usize>,
    pub target_class: usize,
    pub node_scores: BTreeMap<usize, Option<f64>>,
    pub feature_scores: BTreeMap<usize, Vec<f64>>,
    pub selected_nodes: Vec<usize>,
    pub selected_edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub selected_features: BTreeMap<usize, Vec<usize>>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ExplanationFile {
    /// Rebuilds an [`Explanation`]. `null` scores come back as +∞.
    pub fn into_explanation(self) -> Result<Explanation> {
        let nodes: Vec<usize> = self.node_scores.keys().copied().collect();
        let node_scores: Vec<f64> = self
            .node_scores
            .values()
            .map(|s| s.unwrap_or(f64::INFINITY))
            .collect();
        let d = self.feature_scores.values().next().map_or(0, Vec::len);
        let mut feature_scores = Array2::zeros((nodes.len(), d));
        for (p, v) in nodes.iter().enumerate() {
            if let Some(row) = self.feature_scores.get(v) {
                if row.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "feature score row length",
                        expected: d,
                        found: row.len(),
                    });
                }
                for (f, &s) in row.iter().enumerate() {
                    feature_scores[(p, f)] = s;
                }
            }
        }
        let selected_features = self
            .selected_nodes
            .iter()
            .map(|v| self.selected_features.get(v).cloned().unwrap_or_default())
            .collect();
        Ok(Explanation {
            method: self.method,
            center: self.center,
            target_class: self.target_class,
            nodes,
            node_scores,
            feature_scores,
            selected_nodes: self.selected_nodes,
            selected_edges: self
                .selected_edges
                .into_iter()
                .map(|[u, v]| (u, v))
                .collect(),
            selected_features,
        })
    }
}

impl Serialize for Explanation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let file = self.to_file(serde_json::Value::Null);
        file.serialize(s)
    }
}

/// Positions of `scores` in selection order: descending score, ties broken
/// by ascending original index.
pub fn rank_positions(nodes: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| nodes[a].cmp(&nodes[b]))
    });
    order
}

/// Selects the top `n_select` candidates and the edges among them.
#[allow(clippy::too_many_arguments)]
pub fn extract_over(
    method: Method,
    center: Option<usize>,
    target_class: usize,
    nodes: &[usize],
    adjacency: &Adjacency,
    node_scores: Vec<f64>,
    feature_scores: Array2<f64>,
    n_select: usize,
) -> Result<Explanation> {
    let n = nodes.len();
    if n_select == 0 || n_select > n {
        return Err(Error::SelectionOutOfRange {
            requested: n_select,
            available: n,
        });
    }
    if node_scores.len() != n || feature_scores.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "score count",
            expected: n,
            found: node_scores.len(),
        });
    }
    let order = rank_positions(nodes, &node_scores);
    let chosen: Vec<usize> = order[..n_select].to_vec();
    let mut in_set = vec![false; n];
    for &p in &chosen {
        in_set[p] = true;
    }
    let directed = !adjacency.is_symmetric();
    let selected_edges = adjacency
        .edges(directed)
        .into_iter()
        .filter(|&(p, q)| in_set[p] && in_set[q])
        .map(|(p, q)| (nodes[p], nodes[q]))
        .collect();
    let selected_features = chosen
        .iter()
        .map(|&p| top_features(feature_scores.row(p).as_slice().expect("standard layout")))
        .collect();
    Ok(Explanation {
        method,
        center,
        target_class,
        nodes: nodes.to_vec(),
        node_scores,
        feature_scores,
        selected_nodes: chosen.iter().map(|&p| nodes[p]).collect(),
        selected_edges,
        selected_features,
    })
}

/// Features scoring positive and at least the row mean, best first.
fn top_features(row: &[f64]) -> Vec<usize> {
    if row.is_empty() {
        return Vec::new();
    }
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    let mut idx: Vec<usize> = (0..row.len())
        .filter(|&f| row[f] > 0.0 && row[f] >= mean)
        .collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// [`extract_over`] on an interpretation domain.
pub fn extract(
    method: Method,
    dom: &InterpretationDomain,
    target_class: usize,
    node_scores: Vec<f64>,
    feature_scores: Array2<f64>,
    n_select: usize,
) -> Result<Explanation> {
    extract_over(
        method,
        Some(dom.center),
        target_class,
        &dom.nodes,
        &dom.adjacency,
        node_scores,
        feature_scores,
        n_select,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::translation::translate;

    fn triangle_tail() -> InterpretationDomain {
        let a = Adjacency::from_edges(4, &[(0, 1), (1, 2), (0, 2), (2, 3)], false).unwrap();
        translate(&Graph::new(a, Array2::ones((4, 2)), false).unwrap(), 0, 2).unwrap()
    }

    #[test]
    fn ranks_by_score() {
        let a = Adjacency::from_edges(3, &[(0, 1), (1, 2)], false).unwrap();
        let d = translate(&Graph::new(a, Array2::ones((3, 1)), false).unwrap(), 0, 2).unwrap();
        let e = extract(
            Method::Trap2,
            &d,
            0,
            vec![3.0, 1.0, 2.0],
            Array2::zeros((3, 1)),
            2,
        )
        .unwrap();
        assert_eq!(e.selected_nodes, vec![0, 2]);
        assert!(e.selected_edges.is_empty());
    }

    #[test]
    fn ties_prefer_low_indices() {
        let d = triangle_tail();
        let e = extract(
            Method::Random,
            &d,
            0,
            vec![1.0; 4],
            Array2::zeros((4, 2)),
            2,
        )
        .unwrap();
        assert_eq!(e.selected_nodes, vec![0, 1]);
        assert_eq!(e.selected_edges, vec![(0, 1)]);
    }

    #[test]
    fn selecting_everything_keeps_every_edge() {
        let d = triangle_tail();
        let e = extract(
            Method::Trap2,
            &d,
            0,
            vec![0.4, 0.3, 0.2, 0.1],
            Array2::zeros((4, 2)),
            4,
        )
        .unwrap();
        assert_eq!(e.selected_edges.len(), 4);
    }

    #[test]
    fn selection_bounds() {
        let d = triangle_tail();
        for n in [0, 5] {
            assert!(matches!(
                extract(Method::Trap2, &d, 0, vec![0.0; 4], Array2::zeros((4, 2)), n),
                Err(Error::SelectionOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn json_round_trip_and_dot() {
        let d = triangle_tail();
        let fs =
            Array2::from_shape_vec((4, 2), vec![0.1, 0.5, 0.0, 0.0, 0.3, 0.3, 1.0, 0.0]).unwrap();
        let e = extract(
            Method::Greedy,
            &d,
            1,
            vec![f64::INFINITY, 0.2, 0.7, 0.1],
            fs,
            2,
        )
        .unwrap();
        let text = serde_json::to_string(&e.to_file(serde_json::json!({"m": 10}))).unwrap();
        let back: ExplanationFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_explanation().unwrap(), e);
        let dot = e.to_dot();
        assert!(dot.starts_with("graph explanation_0 {"));
        assert!(dot.contains("0 [label=\"0\", tooltip=\"score=inf\", fillcolor=orange"));
        assert!(dot.contains("2 [label=\"2\""));
        assert!(dot.contains("0 -- 2;"));
        assert_eq!(e.selected_features[1], vec![0, 1]);
    }
}
