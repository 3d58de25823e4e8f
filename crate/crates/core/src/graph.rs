//! Dense graph representation and the two matrix primitives the rest of the
//! crate is built on: k-hop reachability and induced submatrices.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense binary adjacency matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Adjacency {
    n: usize,
    bits: Vec<u8>,
}

impl Adjacency {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![0; n * n],
        }
    }

    /// Builds an adjacency from an edge list. Undirected edges are mirrored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], directed: bool) -> Result<Self> {
        let mut a = Self::zeros(n);
        for &(u, v) in edges {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::NodeOutOfRange { index: idx, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            a.set(u, v, true);
            if !directed {
                a.set(v, u, true);
            }
        }
        Ok(a)
    }

    /// Validates a real-valued square matrix as a binary adjacency.
    pub fn from_dense(m: &Array2<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "adjacency columns",
                expected: n,
                found: m.ncols(),
            });
        }
        let mut a = Self::zeros(n);
        for ((row, col), &value) in m.indexed_iter() {
            if value == 1.0 {
                if row == col {
                    return Err(Error::SelfLoop(row));
                }
                a.set(row, col, true);
            } else if value != 0.0 {
                return Err(Error::NonBinary { row, col, value });
            }
        }
        Ok(a)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j] != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.n + j] = value as u8;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| (b != 0).then_some(j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b != 0).count()
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_symmetric(&self) -> bool {
        self.first_asymmetry().is_none()
    }

    fn first_asymmetry(&self) -> Option<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .find(|&(i, j)| self.get(i, j) != self.get(j, i))
    }

    /// Edge list; for undirected graphs each edge appears once with `u < v`.
    pub fn edges(&self, directed: bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in self.neighbors(i) {
                if directed || i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.get(i, j) as u8 as f64)
    }

    /// Reachability rows from `source` for every hop bound `1..=k`.
    ///
    /// Entry `t - 1` of the result is row `source` of the `t`-hop reachability
    /// matrix. Each step multiplies the current reach vector by `A` (boolean
    /// semiring) restricted to the nodes that were added in the last step.
    pub fn reachability_rows(&self, source: usize, k: usize) -> Vec<Vec<u8>> {
        let mut reach = vec![0u8; self.n];
        reach[source] = 1;
        let mut frontier = vec![source];
        let mut rows = Vec::with_capacity(k);
        for _ in 0..k {
            let mut next = Vec::new();
            for &i in &frontier {
                for (j, &b) in self.row(i).iter().enumerate() {
                    if b != 0 && reach[j] == 0 {
                        reach[j] = 1;
                        next.push(j);
                    }
                }
            }
            rows.push(reach.clone());
            frontier = next;
        }
        rows
    }

    /// Row `source` of the `k`-hop reachability matrix.
    pub fn reachability_row(&self, source: usize, k: usize) -> Vec<u8> {
        if k == 0 {
            let mut row = vec![0; self.n];
            row[source] = 1;
            return row;
        }
        self.reachability_rows(source, k).pop().unwrap_or_default()
    }

    /// The `k`-hop reachability matrix. Entry `(i, j)` is 1 iff a path of
    /// length at most `k` joins `i` to `j`; the diagonal is always 1.
    pub fn reachability(&self, k: usize) -> Result<Adjacency> {
        if k == 0 {
            return Err(Error::InvalidHops(k));
        }
        let mut out = Adjacency::zeros(self.n);
        for i in 0..self.n {
            let row = self.reachability_row(i, k);
            out.bits[i * self.n..(i + 1) * self.n].copy_from_slice(&row);
        }
        Ok(out)
    }

    /// Hop distance from `source` to every node within `k` hops.
    pub fn hop_distances(&self, source: usize, k: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut frontier = vec![source];
        for hop in 1..=k {
            let mut next = Vec::new();
            for &i in &frontier {
                for j in self.neighbors(i) {
                    if dist[j].is_none() {
                        dist[j] = Some(hop);
                        next.push(j);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        dist
    }

    /// Submatrix over `nodes`, keeping the order of the list.
    pub fn induced_submatrix(&self, nodes: &[usize]) -> Result<Adjacency> {
        let mut seen = HashSet::with_capacity(nodes.len());
        for &v in nodes {
            if v >= self.n {
                return Err(Error::NodeOutOfRange {
                    index: v,
                    n: self.n,
                });
            }
            if !seen.insert(v) {
                return Err(Error::DuplicateNode(v));
            }
        }
        let m = nodes.len();
        let mut out = Adjacency::zeros(m);
        for (p, &u) in nodes.iter().enumerate() {
            for (q, &v) in nodes.iter().enumerate() {
                if self.get(u, v) {
                    out.set(p, q, true);
                }
            }
        }
        Ok(out)
    }
}

/// A node-attributed graph with optional labels and motif ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub adjacency: Adjacency,
    pub features: Array2<f64>,
    pub node_labels: Option<Vec<usize>>,
    pub graph_label: Option<usize>,
    /// Motif instance id per node, -1 for base-graph nodes.
    pub motif_of: Option<Vec<i64>>,
    pub directed: bool,
}

impl Graph {
    pub fn new(adjacency: Adjacency, features: Array2<f64>, directed: bool) -> Result<Self> {
        let g = Self {
            adjacency,
            features,
            node_labels: None,
            graph_label: None,
            motif_of: None,
            directed,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            if self.adjacency.get(i, i) {
                return Err(Error::SelfLoop(i));
            }
        }
        if !self.directed {
            if let Some((i, j)) = self.adjacency.first_asymmetry() {
                return Err(Error::Asymmetric(i, j));
            }
        }
        if self.features.nrows() != n {
            return Err(Error::FeatureRows {
                expected: n,
                found: self.features.nrows(),
            });
        }
        if self.features.ncols() == 0 {
            return Err(Error::EmptyFeatures);
        }
        if let Some(labels) = &self.node_labels {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "node label count",
                    expected: n,
                    found: labels.len(),
                });
            }
        }
        if let Some(motifs) = &self.motif_of {
            if motifs.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "motif membership count",
                    expected: n,
                    found: motifs.len(),
                });
            }
        }
        Ok(())
    }

    pub fn num_node_classes(&self) -> Option<usize> {
        self.node_labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GraphFile::from(self))?)
    }
}

/// Loads either a single graph object or a JSON array of graphs.
pub fn load_graphs(path: impl AsRef<Path>) -> Result<Vec<Graph>> {
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<serde_json::Value>(&text)? {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|v| Graph::try_from(serde_json::from_value::<GraphFile>(v)?))
            .collect(),
        other => Ok(vec![serde_json::from_value::<GraphFile>(other)?.try_into()?]),
    }
}

/// On-disk JSON layout of a [`Graph`].
///
/// Structure is normally given as `edges`; undirected edges are mirrored.
/// A dense 0/1 `adjacency` matrix may be supplied instead, in which case it is
/// taken verbatim and checked for symmetry when `directed` is false.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    #[serde(default)]
    pub directed: bool,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
    pub features: Vec<Vec<f64>>,
    #[serde(default)]
    pub node_labels: Option<Vec<usize>>,
    #[serde(default)]
    pub graph_label: Option<usize>,
    #[serde(default)]
    pub motif_of: Option<Vec<i64>>,
}

impl From<&Graph> for GraphFile {
    fn from(g: &Graph) -> Self {
        Self {
            n: g.n(),
            directed: g.directed,
            edges: g
                .adjacency
                .edges(g.directed)
                .into_iter()
                .map(|(u, v)| [u, v])
                .collect(),
            adjacency: None,
            features: g.features.rows().into_iter().map(|r| r.to_vec()).collect(),
            node_labels: g.node_labels.clone(),
            graph_label: g.graph_label,
            motif_of: g.motif_of.clone(),
        }
    }
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        let mut adjacency = Adjacency::zeros(f.n);
        if let Some(rows) = &f.adjacency {
            if rows.len() != f.n {
                return Err(Error::DimensionMismatch {
                    what: "adjacency rows",
                    expected: f.n,
                    found: rows.len(),
                });
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != f.n {
                    return Err(Error::DimensionMismatch {
                        what: "adjacency row length",
                        expected: f.n,
                        found: row.len(),
                    });
                }
                for (j, &b) in row.iter().enumerate() {
                    match b {
                        0 => {}
                        1 => adjacency.set(i, j, true),
                        _ => {
                            return Err(Error::NonBinary {
                                row: i,
                                col: j,
                                value: b as f64,
                            })
                        }
                    }
                }
            }
        }
        for [u, v] in f.edges {
            for idx in [u, v] {
                if idx >= f.n {
                    return Err(Error::NodeOutOfRange { index: idx, n: f.n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            adjacency.set(u, v, true);
            if !f.directed {
                adjacency.set(v, u, true);
            }
        }
        if f.features.len() != f.n {
            return Err(Error::FeatureRows {
                expected: f.n,
                found: f.features.len(),
            });
        }
        let d = f.features.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::EmptyFeatures);
        }
        let mut flat = Vec::with_capacity(f.n * d);
        for row in &f.features {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "feature row length",
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let features = Array2::from_shape_vec((f.n, d), flat).expect("shape checked above");
        let g = Graph {
            adjacency,
            features,
            node_labels: f.node_labels,
            graph_label: f.graph_label,
            motif_of: f.motif_of,
            directed: f.directed,
        };
        g.validate()?;
        Ok(g)
    }
}
