//! Seeded generators for the four motif benchmarks.
//!
//! Every generator plants motif instances (house, cycle, grid) on a base graph
//! (Barabási–Albert or a balanced binary tree), attaches each motif to a
//! uniformly random base node with a single edge, then sprinkles random noise
//! edges over the whole graph. `motif_of` records the motif instance of every
//! planted node and is the ground truth explanations are scored against.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    BaShapes,
    BaCommunity,
    TreeCycle,
    TreeGrid,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind::BaShapes,
        DatasetKind::BaCommunity,
        DatasetKind::TreeCycle,
        DatasetKind::TreeGrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::BaShapes => "ba-shapes",
            DatasetKind::BaCommunity => "ba-community",
            DatasetKind::TreeCycle => "tree-cycle",
            DatasetKind::TreeGrid => "tree-grid",
        }
    }

    pub fn motif(self) -> Motif {
        match self {
            DatasetKind::BaShapes | DatasetKind::BaCommunity => Motif::House,
            DatasetKind::TreeCycle => Motif::Cycle,
            DatasetKind::TreeGrid => Motif::Grid,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            DatasetKind::BaShapes => 4,
            DatasetKind::BaCommunity => 8,
            DatasetKind::TreeCycle | DatasetKind::TreeGrid => 2,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

/// Planted structure types.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motif {
    House,
    Cycle,
    Grid,
}

impl Motif {
    pub fn size(self) -> usize {
        match self {
            Motif::House => 5,
            Motif::Cycle => 6,
            Motif::Grid => 9,
        }
    }

    /// Local edges of one instance. Node 0 is the attachment point.
    fn edges(self) -> Vec<(usize, usize)> {
        match self {
            // 0,1 are the middle floor (adjacent to the roof 4); 2,3 the bottom.
            Motif::House => vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)],
            Motif::Cycle => (0..6).map(|i| (i, (i + 1) % 6)).collect(),
            Motif::Grid => {
                let mut e = Vec::new();
                for r in 0..3 {
                    for c in 0..3 {
                        let v = r * 3 + c;
                        if c < 2 {
                            e.push((v, v + 1));
                        }
                        if r < 2 {
                            e.push((v, v + 3));
                        }
                    }
                }
                e
            }
        }
    }

    /// Label of each local node, before any per-community offset.
    fn roles(self) -> Vec<usize> {
        match self {
            // 1 = top (roof), 2 = middle, 3 = bottom
            Motif::House => vec![2, 2, 3, 3, 1],
            Motif::Cycle => vec![1; 6],
            Motif::Grid => vec![1; 9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub seed: u64,
    /// Base graph size. For tree datasets this is derived from `tree_depth`.
    pub base_nodes: usize,
    pub motif_count: usize,
    /// Random edges added after construction, as a fraction of node count.
    pub noise_edge_fraction: f64,
    pub feature_dim: usize,
    /// Edges per new node in the Barabási–Albert process.
    pub ba_edges_per_node: usize,
    /// Depth of the balanced binary tree, root at level 0.
    pub tree_depth: u32,
    /// Random edges between the two halves of `ba-community`.
    pub community_bridge_edges: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::for_kind(DatasetKind::BaShapes, 0)
    }
}

impl DatasetSpec {
    pub fn for_kind(kind: DatasetKind, seed: u64) -> Self {
        let tree_depth = 8;
        let base_nodes = match kind {
            DatasetKind::BaShapes | DatasetKind::BaCommunity => 300,
            DatasetKind::TreeCycle | DatasetKind::TreeGrid => (1usize << (tree_depth + 1)) - 1,
        };
        Self {
            kind,
            seed,
            base_nodes,
            motif_count: 80,
            noise_edge_fraction: 0.01,
            feature_dim: 10,
            ba_edges_per_node: 1,
            tree_depth,
            community_bridge_edges: 70,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1");
        }
        if !(self.noise_edge_fraction >= 0.0 && self.noise_edge_fraction.is_finite()) {
            return bad("noise_edge_fraction must be a finite value >= 0");
        }
        match self.kind {
            DatasetKind::BaShapes | DatasetKind::BaCommunity => {
                if self.ba_edges_per_node == 0 {
                    return bad("ba_edges_per_node must be at least 1");
                }
                if self.base_nodes <= self.ba_edges_per_node {
                    return bad("base_nodes must exceed ba_edges_per_node");
                }
            }
            DatasetKind::TreeCycle | DatasetKind::TreeGrid => {
                if self.tree_depth > 20 {
                    return bad("tree_depth above 20 is not supported");
                }
            }
        }
        Ok(())
    }
}

/// Incrementally built undirected graph.
struct Builder {
    edges: BTreeSet<(usize, usize)>,
    labels: Vec<usize>,
    motif_of: Vec<i64>,
}

impl Builder {
    fn new() -> Self {
        Self {
            edges: BTreeSet::new(),
            labels: Vec::new(),
            motif_of: Vec::new(),
        }
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn add_node(&mut self, label: usize, motif: i64) -> usize {
        self.labels.push(label);
        self.motif_of.push(motif);
        self.labels.len() - 1
    }

    fn add_edge(&mut self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        self.edges.insert((u.min(v), u.max(v)))
    }

    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    fn adjacency(&self) -> Adjacency {
        let edges: Vec<_> = self.edges.iter().copied().collect();
        Adjacency::from_edges(self.n(), &edges, false).expect("builder edges are in range")
    }
}

/// Barabási–Albert preferential attachment over nodes `offset..offset + n`.
fn barabasi_albert(b: &mut Builder, n: usize, m: usize, label: usize, rng: &mut ChaCha8Rng) {
    let offset = b.n();
    for _ in 0..n {
        b.add_node(label, -1);
    }
    let mut targets: Vec<usize> = (0..m).collect();
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * n * m);
    for source in m..n {
        for &t in &targets {
            b.add_edge(offset + source, offset + t);
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
        let mut chosen = BTreeSet::new();
        while chosen.len() < m {
            chosen.insert(*repeated.choose(rng).expect("repeated is non-empty"));
        }
        targets = chosen.into_iter().collect();
    }
}

/// Balanced binary tree with levels `0..=depth`.
fn binary_tree(b: &mut Builder, depth: u32) -> usize {
    let offset = b.n();
    let n = (1usize << (depth + 1)) - 1;
    for _ in 0..n {
        b.add_node(0, -1);
    }
    for child in 1..n {
        b.add_edge(offset + child, offset + (child - 1) / 2);
    }
    n
}

fn attach_motifs(
    b: &mut Builder,
    motif: Motif,
    base: std::ops::Range<usize>,
    count: usize,
    label_offset: usize,
    first_id: i64,
    rng: &mut ChaCha8Rng,
) {
    let edges = motif.edges();
    let roles = motif.roles();
    for inst in 0..count {
        let start = b.n();
        for &role in &roles {
            b.add_node(role + label_offset, first_id + inst as i64);
        }
        for &(u, v) in &edges {
            b.add_edge(start + u, start + v);
        }
        let anchor = rng.random_range(base.clone());
        b.add_edge(start, anchor);
    }
}

fn add_noise_edges(b: &mut Builder, count: usize, rng: &mut ChaCha8Rng) {
    let n = b.n();
    let max_new = n * (n - 1) / 2 - b.edges.len();
    let mut added = 0;
    while added < count.min(max_new) {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !b.has_edge(u, v) {
            b.add_edge(u, v);
            added += 1;
        }
    }
}

/// Generates a benchmark graph. Deterministic for a fixed spec.
pub fn generate(spec: &DatasetSpec) -> Result<Graph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new();
    let motif = spec.kind.motif();
    let noise = |n: usize| (spec.noise_edge_fraction * n as f64).round() as usize;

    let features = match spec.kind {
        DatasetKind::BaShapes => {
            barabasi_albert(&mut b, spec.base_nodes, spec.ba_edges_per_node, 0, &mut rng);
            attach_motifs(
                &mut b,
                motif,
                0..spec.base_nodes,
                spec.motif_count,
                0,
                0,
                &mut rng,
            );
            let count = noise(b.n());
            add_noise_edges(&mut b, count, &mut rng);
            Array2::ones((b.n(), spec.feature_dim))
        }
        DatasetKind::TreeCycle | DatasetKind::TreeGrid => {
            let base = binary_tree(&mut b, spec.tree_depth);
            attach_motifs(&mut b, motif, 0..base, spec.motif_count, 0, 0, &mut rng);
            let count = noise(b.n());
            add_noise_edges(&mut b, count, &mut rng);
            Array2::ones((b.n(), spec.feature_dim))
        }
        DatasetKind::BaCommunity => {
            let mut community = Vec::new();
            for c in 0..2usize {
                let start = b.n();
                barabasi_albert(
                    &mut b,
                    spec.base_nodes,
                    spec.ba_edges_per_node,
                    4 * c,
                    &mut rng,
                );
                let first_id = (c * spec.motif_count) as i64;
                attach_motifs(
                    &mut b,
                    motif,
                    start..start + spec.base_nodes,
                    spec.motif_count,
                    4 * c,
                    first_id,
                    &mut rng,
                );
                let end = b.n();
                add_noise_edges_within(&mut b, start..end, noise(end - start), &mut rng);
                community.push(start..end);
            }
            let (a, c) = (community[0].clone(), community[1].clone());
            let mut bridges = 0;
            while bridges < spec.community_bridge_edges {
                let u = rng.random_range(a.clone());
                let v = rng.random_range(c.clone());
                if b.add_edge(u, v) {
                    bridges += 1;
                }
            }
            let mut x = Array2::zeros((b.n(), spec.feature_dim));
            for (ci, range) in community.iter().enumerate() {
                let mean = if ci == 0 { 1.0 } else { -1.0 };
                let dist = Normal::new(mean, 1.0).expect("unit variance");
                for i in range.clone() {
                    for f in 0..spec.feature_dim {
                        x[(i, f)] = dist.sample(&mut rng);
                    }
                }
            }
            x
        }
    };

    let mut g = Graph::new(b.adjacency(), features, false)?;
    g.node_labels = Some(b.labels);
    g.motif_of = Some(b.motif_of);
    Ok(g)
}

fn add_noise_edges_within(
    b: &mut Builder,
    range: std::ops::Range<usize>,
    count: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut added = 0;
    while added < count {
        let u = rng.random_range(range.clone());
        let v = rng.random_range(range.clone());
        if b.add_edge(u, v) {
            added += 1;
        }
    }
}

/// All nodes of the motif instance containing `node`.
pub fn ground_truth_motif(g: &Graph, node: usize) -> Result<Vec<usize>> {
    let motifs = g.motif_of.as_ref().ok_or(Error::MissingGroundTruth)?;
    let id = *motifs.get(node).ok_or(Error::NodeOutOfRange {
        index: node,
        n: g.n(),
    })?;
    if id < 0 {
        return Err(Error::NoGroundTruth(node));
    }
    Ok(motifs
        .iter()
        .enumerate()
        .filter_map(|(j, &m)| (m == id).then_some(j))
        .collect())
}

/// Nodes that belong to some motif instance, in ascending order.
pub fn motif_nodes(g: &Graph) -> Result<Vec<usize>> {
    let motifs = g.motif_of.as_ref().ok_or(Error::MissingGroundTruth)?;
    Ok(motifs
        .iter()
        .enumerate()
        .filter_map(|(j, &m)| (m >= 0).then_some(j))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn distinct_labels(g: &Graph) -> usize {
        g.node_labels
            .as_ref()
            .unwrap()
            .iter()
            .collect::<BTreeSet<_>>()
            .len()
    }

    #[test]
    fn default_sizes() {
        let ba = generate(&DatasetSpec::for_kind(DatasetKind::BaShapes, 7)).unwrap();
        assert_eq!(ba.n(), 300 + 80 * 5);
        assert_eq!(distinct_labels(&ba), 4);

        let cycle = generate(&DatasetSpec::for_kind(DatasetKind::TreeCycle, 7)).unwrap();
        assert_eq!(cycle.n(), 511 + 80 * 6);
        assert_eq!(distinct_labels(&cycle), 2);

        let grid = generate(&DatasetSpec::for_kind(DatasetKind::TreeGrid, 7)).unwrap();
        assert_eq!(grid.n(), 511 + 80 * 9);
        assert_eq!(distinct_labels(&grid), 2);

        let comm = generate(&DatasetSpec::for_kind(DatasetKind::BaCommunity, 7)).unwrap();
        assert_eq!(comm.n(), 2 * 700);
        assert_eq!(distinct_labels(&comm), 8);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(matches!(
            "ba-triangles".parse::<DatasetKind>(),
            Err(Error::UnknownDataset(_))
        ));
        assert_eq!(
            "tree-grid".parse::<DatasetKind>().unwrap(),
            DatasetKind::TreeGrid
        );
    }

    #[test]
    fn motif_lookup() {
        let g = generate(&DatasetSpec::for_kind(DatasetKind::TreeCycle, 1)).unwrap();
        let house = generate(&DatasetSpec::for_kind(DatasetKind::BaShapes, 1)).unwrap();
        assert_eq!(
            ground_truth_motif(&house, 300).unwrap(),
            (300..305).collect::<Vec<_>>()
        );
        assert_eq!(ground_truth_motif(&g, 511).unwrap().len(), 6);
        assert!(matches!(
            ground_truth_motif(&g, 0),
            Err(Error::NoGroundTruth(0))
        ));
    }

    #[test]
    fn roles_are_balanced_per_instance() {
        let g = generate(&DatasetSpec::for_kind(DatasetKind::BaShapes, 3)).unwrap();
        let labels = g.node_labels.as_ref().unwrap();
        let counts: Vec<usize> = (0..4)
            .map(|c| labels.iter().filter(|&&l| l == c).count())
            .collect();
        assert_eq!(counts, vec![300, 80, 160, 160]);
    }
}
