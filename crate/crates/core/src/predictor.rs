//! The black-box interface explained by this crate, and a small reference
//! graph convolutional network with hand-written backpropagation.
//!
//! The reference model stacks `depth` message-passing layers
//! `H' = relu(A H W + H S + b)`, summing transformed neighbor states and
//! adding the node's own transformed state, followed by a linear head: per
//! node for node classification, after mean pooling for graph
//! classification. A node's output therefore only depends on features
//! within `depth` hops.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayViewMutD, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Node,
    Graph,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Node => "node",
            Task::Graph => "graph",
        }
    }
}

/// Gradients of the cross-entropy loss at a target class.
#[derive(Clone, Debug)]
pub struct InputGradients {
    pub loss: f64,
    /// `∂loss/∂X`, same shape as the features.
    pub features: Array2<f64>,
    /// `∂loss/∂A` for a real-valued relaxation of the adjacency.
    pub adjacency: Array2<f64>,
}

/// A trained classifier over graphs.
///
/// `predict` returns one probability row per node (node task) or a single row
/// (graph task). Implementations must be pure: explainers call them from
/// several threads at once.
pub trait Predictor: Sync {
    fn task(&self) -> Task;
    fn num_classes(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// Number of message-passing rounds, i.e. the receptive field in hops.
    fn depth(&self) -> usize;

    fn predict(&self, a: &Adjacency, x: &Array2<f64>) -> Result<Array2<f64>>;

    fn input_gradients(
        &self,
        _a: &Adjacency,
        _x: &Array2<f64>,
        _target: usize,
        _node: Option<usize>,
    ) -> Result<InputGradients> {
        Err(Error::GradientUnsupported)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn task(&self) -> Task {
        (**self).task()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn depth(&self) -> usize {
        (**self).depth()
    }
    fn predict(&self, a: &Adjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
        (**self).predict(a, x)
    }
    fn input_gradients(
        &self,
        a: &Adjacency,
        x: &Array2<f64>,
        target: usize,
        node: Option<usize>,
    ) -> Result<InputGradients> {
        (**self).input_gradients(a, x, target, node)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn task(&self) -> Task {
        (**self).task()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn depth(&self) -> usize {
        (**self).depth()
    }
    fn predict(&self, a: &Adjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
        (**self).predict(a, x)
    }
    fn input_gradients(
        &self,
        a: &Adjacency,
        x: &Array2<f64>,
        target: usize,
        node: Option<usize>,
    ) -> Result<InputGradients> {
        (**self).input_gradients(a, x, target, node)
    }
}

/// Wraps a predictor so that only `predict` is visible.
#[derive(Clone, Debug)]
pub struct BlackBox<P>(pub P);

impl<P: Predictor> Predictor for BlackBox<P> {
    fn task(&self) -> Task {
        self.0.task()
    }
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }
    fn feature_dim(&self) -> usize {
        self.0.feature_dim()
    }
    fn depth(&self) -> usize {
        self.0.depth()
    }
    fn predict(&self, a: &Adjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.0.predict(a, x)
    }
}

/// Row-wise stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Adjacency operator in CSR form. Binary graphs store ones, relaxed
/// adjacencies store their real-valued entries.
struct Propagation {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Propagation {
    fn from_binary(a: &Adjacency) -> Self {
        let n = a.n();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        offsets.push(0);
        for i in 0..n {
            cols.extend(a.neighbors(i));
            offsets.push(cols.len());
        }
        let vals = vec![1.0; cols.len()];
        Self {
            offsets,
            cols,
            vals,
        }
    }

    fn from_relaxed(a: &Array2<f64>) -> Self {
        let n = a.nrows();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for row in a.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Self {
            offsets,
            cols,
            vals,
        }
    }

    fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `A · h`
    fn apply(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for i in 0..self.n() {
            let mut row = out.row_mut(i);
            for p in self.offsets[i]..self.offsets[i + 1] {
                row.scaled_add(self.vals[p], &h.row(self.cols[p]));
            }
        }
        out
    }

    /// `Aᵀ · g`
    fn apply_transpose(&self, g: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(g.raw_dim());
        for i in 0..self.n() {
            let gi = g.row(i);
            for p in self.offsets[i]..self.offsets[i + 1] {
                out.row_mut(self.cols[p]).scaled_add(self.vals[p], &gi);
            }
        }
        out
    }
}

fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
    Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-limit..limit))
}

/// Message-passing layer `relu(A H W + H S + b)`. Both matrices are
/// `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub weight: Array2<f64>,
    pub self_weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Conv {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            self_weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: glorot(inputs, outputs, rng),
            self_weight: glorot(inputs, outputs, rng),
            bias: Array1::zeros(outputs),
        }
    }
}

/// Affine map `x W + b`; `weight` is `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: glorot(inputs, outputs, rng),
            bias: Array1::zeros(outputs),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Fraction of labeled nodes (or graphs) used for training.
    pub split: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 0.005,
            split: 0.8,
            seed: 0,
            optimizer: Optimizer::Adam,
            weight_decay: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

struct Trace {
    prop: Propagation,
    /// Layer inputs `H_l`; `hidden[0]` is the feature matrix.
    hidden: Vec<Array2<f64>>,
    /// `A H_l`
    propagated: Vec<Array2<f64>>,
    /// Pre-activations `A H_l W_l + H_l S_l + b_l`.
    pre: Vec<Array2<f64>>,
    /// Head input: last hidden state (node task) or its mean (graph task).
    head_input: Array2<f64>,
    probs: Array2<f64>,
}

/// Parameter gradients, laid out like the model.
struct Grads {
    layers: Vec<Conv>,
    head: Dense,
}

/// Reference graph convolutional classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGcn {
    task: Task,
    layers: Vec<Conv>,
    head: Dense,
}

impl ReferenceGcn {
    pub const DEFAULT_DEPTH: usize = 3;
    pub const DEFAULT_HIDDEN: usize = 20;

    /// Glorot-initialized model.
    pub fn new(
        task: Task,
        feature_dim: usize,
        num_classes: usize,
        hidden: usize,
        depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidHops(0));
        }
        if feature_dim == 0 || hidden == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig(
                "feature_dim, hidden and num_classes must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(depth);
        let mut inputs = feature_dim;
        for _ in 0..depth {
            layers.push(Conv::glorot(inputs, hidden, &mut rng));
            inputs = hidden;
        }
        let head = Dense::glorot(hidden, num_classes, &mut rng);
        Ok(Self { task, layers, head })
    }

    /// Model with every weight and bias set to zero.
    pub fn zeros(
        task: Task,
        feature_dim: usize,
        num_classes: usize,
        hidden: usize,
        depth: usize,
    ) -> Self {
        let mut layers = Vec::with_capacity(depth);
        let mut inputs = feature_dim;
        for _ in 0..depth {
            layers.push(Conv::zeros(inputs, hidden));
            inputs = hidden;
        }
        Self {
            task,
            layers,
            head: Dense::zeros(hidden, num_classes),
        }
    }

    pub fn hidden(&self) -> usize {
        self.head.weight.nrows()
    }

    pub fn layers(&self) -> &[Conv] {
        &self.layers
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    fn check_inputs(&self, n: usize, x: &Array2<f64>) -> Result<()> {
        if x.nrows() != n {
            return Err(Error::FeatureRows {
                expected: n,
                found: x.nrows(),
            });
        }
        if x.ncols() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: self.feature_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    fn forward(&self, prop: Propagation, x: &Array2<f64>) -> Trace {
        let mut hidden = vec![x.clone()];
        let mut propagated = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = hidden.last().expect("at least the input");
            let ph = prop.apply(h);
            let z = ph.dot(&layer.weight) + h.dot(&layer.self_weight) + &layer.bias;
            hidden.push(z.mapv(|v| v.max(0.0)));
            propagated.push(ph);
            pre.push(z);
        }
        let last = hidden.last().expect("at least the input");
        let head_input = match self.task {
            Task::Node => last.clone(),
            Task::Graph => last
                .mean_axis(Axis(0))
                .unwrap_or_else(|| Array1::zeros(self.hidden()))
                .insert_axis(Axis(0)),
        };
        let probs = softmax_rows(&self.head.apply(&head_input));
        Trace {
            prop,
            hidden,
            propagated,
            pre,
            head_input,
            probs,
        }
    }

    /// Backpropagates `∂loss/∂logits`. Returns parameter gradients, the
    /// feature gradient, and optionally `∂loss/∂A` (dense).
    fn backward(
        &self,
        trace: &Trace,
        dlogits: &Array2<f64>,
        want_adjacency: bool,
    ) -> (Grads, Array2<f64>, Option<Array2<f64>>) {
        let n = trace.hidden[0].nrows();
        let head = Dense {
            weight: trace.head_input.t().dot(dlogits),
            bias: dlogits.sum_axis(Axis(0)),
        };
        let dhead_input = dlogits.dot(&self.head.weight.t());
        let mut dh = match self.task {
            Task::Node => dhead_input,
            Task::Graph => {
                let row = dhead_input.row(0).to_owned() / n as f64;
                Array2::from_shape_fn((n, row.len()), |(_, c)| row[c])
            }
        };
        let mut dadj = want_adjacency.then(|| Array2::<f64>::zeros((n, n)));
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let h = &trace.hidden[l];
            let dz = dh * &trace.pre[l].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let dph = dz.dot(&layer.weight.t());
            if let Some(total) = dadj.as_mut() {
                *total += &dph.dot(&h.t());
            }
            dh = trace.prop.apply_transpose(&dph) + dz.dot(&layer.self_weight.t());
            layers.push(Conv {
                weight: trace.propagated[l].t().dot(&dz),
                self_weight: h.t().dot(&dz),
                bias: dz.sum_axis(Axis(0)),
            });
        }
        layers.reverse();
        (Grads { layers, head }, dh, dadj)
    }

    /// Gradient of the cross-entropy at `target` for the row selected by
    /// `node` (node task) or the graph row.
    fn loss_gradient(
        &self,
        probs: &Array2<f64>,
        target: usize,
        node: Option<usize>,
    ) -> Result<(f64, Array2<f64>)> {
        let row = match (self.task, node) {
            (Task::Node, Some(i)) if i < probs.nrows() => i,
            (Task::Node, Some(i)) => {
                return Err(Error::NodeOutOfRange {
                    index: i,
                    n: probs.nrows(),
                })
            }
            (Task::Node, None) => {
                return Err(Error::InvalidConfig(
                    "node-task gradients need a target node".into(),
                ))
            }
            (Task::Graph, _) => 0,
        };
        if target >= self.num_classes() {
            return Err(Error::InvalidClass {
                label: target,
                classes: self.num_classes(),
            });
        }
        let mut dlogits = Array2::zeros(probs.raw_dim());
        for c in 0..self.num_classes() {
            dlogits[(row, c)] = probs[(row, c)] - if c == target { 1.0 } else { 0.0 };
        }
        Ok((-probs[(row, target)].ln(), dlogits))
    }

    /// Class probabilities for a real-valued (relaxed) adjacency.
    pub fn predict_relaxed(&self, a: &Array2<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(a.nrows(), x)?;
        Ok(self.forward(Propagation::from_relaxed(a), x).probs)
    }

    /// Loss gradients for a real-valued adjacency. Entries of `A` are treated
    /// as independent variables (no symmetry tying).
    pub fn input_gradients_relaxed(
        &self,
        a: &Array2<f64>,
        x: &Array2<f64>,
        target: usize,
        node: Option<usize>,
    ) -> Result<InputGradients> {
        self.check_inputs(a.nrows(), x)?;
        let trace = self.forward(Propagation::from_relaxed(a), x);
        let (loss, dlogits) = self.loss_gradient(&trace.probs, target, node)?;
        let (_, dx, da) = self.backward(&trace, &dlogits, true);
        Ok(InputGradients {
            loss,
            features: dx,
            adjacency: da.expect("requested"),
        })
    }

    /// Trains on one graph's node labels with full-batch updates.
    pub fn train_nodes(&mut self, g: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
        if self.task != Task::Node {
            return Err(Error::TaskMismatch {
                expected: "node",
                found: self.task.name(),
            });
        }
        let labels = g.node_labels.as_ref().ok_or(Error::MissingLabels)?;
        self.check_inputs(g.n(), &g.features)?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.num_classes()) {
            return Err(Error::InvalidClass {
                label: bad,
                classes: self.num_classes(),
            });
        }
        let (train, test) = split_indices(g.n(), cfg.split, cfg.seed)?;
        let mut opt = OptimizerState::new(self, cfg);
        let mut final_loss = f64::NAN;
        for _ in 0..cfg.epochs {
            let trace = self.forward(Propagation::from_binary(&g.adjacency), &g.features);
            let mut dlogits = Array2::zeros(trace.probs.raw_dim());
            let mut loss = 0.0;
            let scale = 1.0 / train.len() as f64;
            for &i in &train {
                let y = labels[i];
                loss -= trace.probs[(i, y)].ln() * scale;
                for c in 0..self.num_classes() {
                    dlogits[(i, c)] =
                        (trace.probs[(i, c)] - if c == y { 1.0 } else { 0.0 }) * scale;
                }
            }
            let (grads, _, _) = self.backward(&trace, &dlogits, false);
            opt.step(self, grads);
            final_loss = loss;
        }
        let probs = self.predict(&g.adjacency, &g.features)?;
        let acc = |idx: &[usize]| accuracy_of(&probs, idx, |i| labels[i]);
        Ok(TrainReport {
            epochs: cfg.epochs,
            final_loss,
            train_accuracy: acc(&train),
            test_accuracy: acc(&test),
            train_size: train.len(),
            test_size: test.len(),
        })
    }

    /// Trains a graph classifier on a labeled collection of graphs.
    pub fn train_graphs(&mut self, graphs: &[Graph], cfg: &TrainConfig) -> Result<TrainReport> {
        if self.task != Task::Graph {
            return Err(Error::TaskMismatch {
                expected: "graph",
                found: self.task.name(),
            });
        }
        let mut labels = Vec::with_capacity(graphs.len());
        for g in graphs {
            self.check_inputs(g.n(), &g.features)?;
            let y = g.graph_label.ok_or(Error::MissingLabels)?;
            if y >= self.num_classes() {
                return Err(Error::InvalidClass {
                    label: y,
                    classes: self.num_classes(),
                });
            }
            labels.push(y);
        }
        let (train, test) = split_indices(graphs.len(), cfg.split, cfg.seed)?;
        let mut opt = OptimizerState::new(self, cfg);
        let mut final_loss = f64::NAN;
        for _ in 0..cfg.epochs {
            let mut total: Option<Grads> = None;
            let mut loss = 0.0;
            let scale = 1.0 / train.len() as f64;
            for &gi in &train {
                let g = &graphs[gi];
                let trace = self.forward(Propagation::from_binary(&g.adjacency), &g.features);
                let (l, dlogits) = self.loss_gradient(&trace.probs, labels[gi], None)?;
                loss += l * scale;
                let (grads, _, _) = self.backward(&trace, &(dlogits * scale), false);
                total = Some(match total {
                    None => grads,
                    Some(mut acc) => {
                        acc.add(&grads);
                        acc
                    }
                });
            }
            if let Some(grads) = total {
                opt.step(self, grads);
            }
            final_loss = loss;
        }
        let mut probs = Array2::zeros((graphs.len(), self.num_classes()));
        for (gi, g) in graphs.iter().enumerate() {
            probs
                .row_mut(gi)
                .assign(&self.predict(&g.adjacency, &g.features)?.row(0));
        }
        let acc = |idx: &[usize]| accuracy_of(&probs, idx, |i| labels[i]);
        Ok(TrainReport {
            epochs: cfg.epochs,
            final_loss,
            train_accuracy: acc(&train),
            test_accuracy: acc(&test),
            train_size: train.len(),
            test_size: test.len(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>, gradients: bool) -> Result<()> {
        let file = ModelFile::from_model(self, gradients);
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    /// Node accuracy of the model on a labeled graph, over `nodes`.
    pub fn node_accuracy(&self, g: &Graph, nodes: &[usize]) -> Result<f64> {
        let labels = g.node_labels.as_ref().ok_or(Error::MissingLabels)?;
        let probs = self.predict(&g.adjacency, &g.features)?;
        Ok(accuracy_of(&probs, nodes, |i| labels[i]))
    }
}

fn accuracy_of(probs: &Array2<f64>, idx: &[usize], label: impl Fn(usize) -> usize) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    let hits = idx
        .iter()
        .filter(|&&i| argmax(probs.row(i).as_slice().expect("standard layout")) == label(i))
        .count();
    hits as f64 / idx.len() as f64
}

/// Seeded train/test split of `0..n`.
pub fn split_indices(n: usize, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::InvalidConfig(format!(
            "split {split} outside [0, 1]"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5917));
    let cut = ((n as f64) * split).round() as usize;
    let cut = cut.clamp(usize::from(n > 0), n);
    let test = idx.split_off(cut);
    let mut train = idx;
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok((train, test))
}

impl Grads {
    fn add(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.self_weight += &b.self_weight;
            a.bias += &b.bias;
        }
        self.head.weight += &other.head.weight;
        self.head.bias += &other.head.bias;
    }
}

/// Every parameter tensor, paired with whether weight decay applies to it.
fn tensors_mut<'a>(
    layers: &'a mut [Conv],
    head: &'a mut Dense,
) -> Vec<(ArrayViewMutD<'a, f64>, bool)> {
    let mut out = Vec::with_capacity(3 * layers.len() + 2);
    for layer in layers {
        out.push((layer.weight.view_mut().into_dyn(), true));
        out.push((layer.self_weight.view_mut().into_dyn(), true));
        out.push((layer.bias.view_mut().into_dyn(), false));
    }
    out.push((head.weight.view_mut().into_dyn(), true));
    out.push((head.bias.view_mut().into_dyn(), false));
    out
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    weight_decay: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl OptimizerState {
    fn new(model: &ReferenceGcn, cfg: &TrainConfig) -> Self {
        let zeros = || Grads {
            layers: model
                .layers
                .iter()
                .map(|c| Conv::zeros(c.weight.nrows(), c.weight.ncols()))
                .collect(),
            head: Dense::zeros(model.head.weight.nrows(), model.head.weight.ncols()),
        };
        Self {
            kind: cfg.optimizer,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn step(&mut self, model: &mut ReferenceGcn, mut grads: Grads) {
        self.t += 1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let c1 = 1.0 - f64::powi(b1, self.t);
        let c2 = 1.0 - f64::powi(b2, self.t);
        let (lr, decay, kind) = (self.lr, self.weight_decay, self.kind);
        let params = tensors_mut(&mut model.layers, &mut model.head);
        let grads = tensors_mut(&mut grads.layers, &mut grads.head);
        let moms = tensors_mut(&mut self.m.layers, &mut self.m.head);
        let vels = tensors_mut(&mut self.v.layers, &mut self.v.head);
        for ((((mut p, decays), (g, _)), (mut m, _)), (mut v, _)) in
            params.into_iter().zip(grads).zip(moms).zip(vels)
        {
            let decay = if decays { decay } else { 0.0 };
            ndarray::Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|param, &grad, mom, vel| {
                    let grad = grad + decay * *param;
                    match kind {
                        Optimizer::Sgd => *param -= lr * grad,
                        Optimizer::Adam => {
                            *mom = b1 * *mom + (1.0 - b1) * grad;
                            *vel = b2 * *vel + (1.0 - b2) * grad * grad;
                            *param -= lr * (*mom / c1) / ((*vel / c2).sqrt() + eps);
                        }
                    }
                });
        }
    }
}

impl Predictor for ReferenceGcn {
    fn task(&self) -> Task {
        self.task
    }

    fn num_classes(&self) -> usize {
        self.head.weight.ncols()
    }

    fn feature_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    fn depth(&self) -> usize {
        self.layers.len()
    }

    fn predict(&self, a: &Adjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(a.n(), x)?;
        Ok(self.forward(Propagation::from_binary(a), x).probs)
    }

    fn input_gradients(
        &self,
        a: &Adjacency,
        x: &Array2<f64>,
        target: usize,
        node: Option<usize>,
    ) -> Result<InputGradients> {
        self.input_gradients_relaxed(&a.to_dense(), x, target, node)
    }
}

/// JSON layout of a saved model. Matrices are row-major nested lists with
/// shape `inputs × outputs`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub task: Task,
    pub feature_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub num_classes: usize,
    /// When false the model is loaded as a predict-only black box.
    #[serde(default = "default_true")]
    pub gradients: bool,
    pub layers: Vec<LayerFile>,
    pub head: LayerFile,
}

fn default_true() -> bool {
    true
}

/// A layer on disk. `self_weight` is absent for the head.
#[derive(Debug, Serialize, Deserialize)]
pub struct LayerFile {
    pub weight: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_weight: Option<Vec<Vec<f64>>>,
    pub bias: Vec<f64>,
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix_from(rows: Vec<Vec<f64>>, inputs: usize, outputs: usize) -> Result<Array2<f64>> {
    if rows.len() != inputs {
        return Err(Error::DimensionMismatch {
            what: "layer weight rows",
            expected: inputs,
            found: rows.len(),
        });
    }
    let mut flat = Vec::with_capacity(inputs * outputs);
    for row in rows {
        if row.len() != outputs {
            return Err(Error::DimensionMismatch {
                what: "layer weight columns",
                expected: outputs,
                found: row.len(),
            });
        }
        flat.extend(row);
    }
    Ok(Array2::from_shape_vec((inputs, outputs), flat).expect("checked"))
}

impl LayerFile {
    fn from_conv(c: &Conv) -> Self {
        Self {
            weight: rows_of(&c.weight),
            self_weight: Some(rows_of(&c.self_weight)),
            bias: c.bias.to_vec(),
        }
    }

    fn from_dense(d: &Dense) -> Self {
        Self {
            weight: rows_of(&d.weight),
            self_weight: None,
            bias: d.bias.to_vec(),
        }
    }

    fn bias(values: Vec<f64>, outputs: usize) -> Result<Array1<f64>> {
        if values.len() != outputs {
            return Err(Error::DimensionMismatch {
                what: "layer bias length",
                expected: outputs,
                found: values.len(),
            });
        }
        Ok(Array1::from(values))
    }

    fn into_conv(self, inputs: usize, outputs: usize) -> Result<Conv> {
        let own = self
            .self_weight
            .ok_or_else(|| Error::InvalidConfig("layer is missing self_weight".into()))?;
        Ok(Conv {
            weight: matrix_from(self.weight, inputs, outputs)?,
            self_weight: matrix_from(own, inputs, outputs)?,
            bias: Self::bias(self.bias, outputs)?,
        })
    }

    fn into_dense(self, inputs: usize, outputs: usize) -> Result<Dense> {
        Ok(Dense {
            weight: matrix_from(self.weight, inputs, outputs)?,
            bias: Self::bias(self.bias, outputs)?,
        })
    }
}

impl ModelFile {
    pub fn from_model(model: &ReferenceGcn, gradients: bool) -> Self {
        Self {
            task: model.task,
            feature_dim: model.feature_dim(),
            hidden: model.hidden(),
            depth: model.depth(),
            num_classes: model.num_classes(),
            gradients,
            layers: model.layers.iter().map(LayerFile::from_conv).collect(),
            head: LayerFile::from_dense(&model.head),
        }
    }

    pub fn into_model(self) -> Result<ReferenceGcn> {
        if self.layers.len() != self.depth || self.depth == 0 {
            return Err(Error::DimensionMismatch {
                what: "layer count",
                expected: self.depth,
                found: self.layers.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.depth);
        let mut inputs = self.feature_dim;
        for layer in self.layers {
            layers.push(layer.into_conv(inputs, self.hidden)?);
            inputs = self.hidden;
        }
        let head = self.head.into_dense(self.hidden, self.num_classes)?;
        Ok(ReferenceGcn {
            task: self.task,
            layers,
            head,
        })
    }
}

/// Loads a model file as a predictor. Files saved with `gradients: false`
/// come back as a [`BlackBox`].
pub fn load_predictor(path: impl AsRef<Path>) -> Result<Box<dyn Predictor + Send>> {
    let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let gradients = file.gradients;
    let model = file.into_model()?;
    Ok(if gradients {
        Box::new(model)
    } else {
        Box::new(BlackBox(model))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Adjacency {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Adjacency::from_edges(n, &edges, false).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ReferenceGcn::zeros(Task::Node, 3, 4, 5, 3);
        let p = m.predict(&path(4), &Array2::ones((4, 3))).unwrap();
        for v in p.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let g = m
            .input_gradients(&path(4), &Array2::ones((4, 3)), 1, Some(0))
            .unwrap();
        assert!(g.features.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let m = ReferenceGcn::new(Task::Node, 2, 3, 6, 3, 1).unwrap();
        let mut a = Adjacency::from_edges(4, &[(0, 1), (1, 2)], false).unwrap();
        let mut x = Array2::from_shape_fn((4, 2), |(i, j)| (i + 2 * j) as f64 * 0.3);
        let before = m.predict(&a, &x).unwrap().row(3).to_owned();
        a.set(0, 2, true);
        a.set(2, 0, true);
        x.row_mut(0).fill(-4.0);
        let after = m.predict(&a, &x).unwrap().row(3).to_owned();
        assert_eq!(before, after);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = ReferenceGcn::new(Task::Node, 2, 3, 6, 3, 1).unwrap();
        assert!(matches!(
            m.predict(&path(3), &Array2::ones((3, 5))),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let mut g = Graph::new(path(6), Array2::ones((6, 2)), false).unwrap();
        g.node_labels = Some(vec![0, 1, 0, 1, 0, 1]);
        let mut m = ReferenceGcn::new(Task::Node, 2, 2, 4, 3, 9).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        m.train_nodes(&g, &cfg).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn training_without_labels_fails() {
        let g = Graph::new(path(4), Array2::ones((4, 2)), false).unwrap();
        let mut m = ReferenceGcn::new(Task::Node, 2, 2, 4, 3, 9).unwrap();
        assert!(matches!(
            m.train_nodes(&g, &TrainConfig::default()),
            Err(Error::MissingLabels)
        ));
    }

    #[test]
    fn black_box_hides_gradients() {
        let m = BlackBox(ReferenceGcn::new(Task::Node, 2, 2, 4, 3, 9).unwrap());
        assert!(matches!(
            m.input_gradients(&path(3), &Array2::ones((3, 2)), 0, Some(0)),
            Err(Error::GradientUnsupported)
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let m = ReferenceGcn::new(Task::Graph, 3, 2, 5, 3, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p, true).unwrap();
        assert_eq!(ReferenceGcn::load(&p).unwrap(), m);
    }
}
