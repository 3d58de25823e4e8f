//! Translation: restrict the source graph to the k-hop ball around the
//! explained node, the only region a k-layer message-passing model can see.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

#[derive(Clone, Debug, PartialEq)]
pub struct InterpretationDomain {
    /// Original index of the explained node.
    pub center: usize,
    /// Original indices, center first then ascending.
    pub nodes: Vec<usize>,
    pub adjacency: Adjacency,
    pub features: Array2<f64>,
    /// Hop distance from the center, per domain position.
    pub hop_of: Vec<usize>,
    pub hops: usize,
}

impl InterpretationDomain {
    pub fn n_hat(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Position of the center inside the domain. Always 0.
    pub fn center_pos(&self) -> usize {
        0
    }

    /// Domain position of an original node index.
    pub fn position_of(&self, original: usize) -> Option<usize> {
        self.nodes.iter().position(|&v| v == original)
    }
}

/// Builds the interpretation domain of node `i` with hop bound `k`.
pub fn translate(g: &Graph, i: usize, k: usize) -> Result<InterpretationDomain> {
    if i >= g.n() {
        return Err(Error::NodeOutOfRange { index: i, n: g.n() });
    }
    if k == 0 {
        return Err(Error::InvalidHops(k));
    }
    let reach = g.adjacency.reachability_row(i, k);
    let mut nodes = vec![i];
    nodes.extend((0..g.n()).filter(|&j| j != i && reach[j] != 0));
    let adjacency = g.adjacency.induced_submatrix(&nodes)?;
    let features = g.features.select(ndarray::Axis(0), &nodes);
    let dist = g.adjacency.hop_distances(i, k);
    let hop_of = nodes
        .iter()
        .map(|&v| dist[v].expect("reachable nodes have a distance"))
        .collect();
    Ok(InterpretationDomain {
        center: i,
        nodes,
        adjacency,
        features,
        hop_of,
        hops: k,
    })
}
