//! TraP2: model-agnostic local explanations for graph neural networks.
//!
//! The pipeline has three layers. [`translation`] cuts the k-hop
//! interpretation domain out of the graph, [`perturbation`] samples perturbed
//! copies of it and scores each with an energy level, and [`paraphrase`] fits
//! a sparse linear surrogate to the black box's answers and reads node and
//! feature contributions off its weights.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod explanation;
pub mod graph;
pub mod paraphrase;
pub mod perturbation;
pub mod predictor;
pub mod synthetic;
pub mod translation;

pub use error::{Error, Result};
pub use explanation::{Explanation, Method};
pub use graph::{Adjacency, Graph};
pub use paraphrase::{explain_graph, explain_node, ExplainConfig};
pub use perturbation::PerturbationConfig;
pub use predictor::{Predictor, ReferenceGcn, Task};
pub use translation::{translate, InterpretationDomain};
