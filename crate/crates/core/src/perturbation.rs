//! Perturbation: sample structural and feature perturbations of an
//! interpretation domain, score each with an energy level, and record the
//! black-box response.
//!
//! Structural energy compares the center's reachability rows for every hop
//! bound `1..=K` before and after perturbation, weighting closer hops more.
//! Feature energy sums a per-row similarity over the domain.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::predictor::{Predictor, Task};
use crate::translation::InterpretationDomain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructurePattern {
    /// Absent pairs become edges with probability `1 - p1`; edges are kept.
    Adding,
    /// Edges survive with probability `p1`; absent pairs stay absent.
    Removing,
    /// Every pair flips with probability `1 - p1`.
    AddingAndRemoving,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeaturePattern {
    /// Each entry survives with probability `p2`, otherwise it is zeroed.
    Masking,
    /// Each entry is multiplied by a standard normal draw.
    Scaling,
    None,
}

/// How the cosine term inside the similarity kernel is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CosineReading {
    /// `1 - cos(u, v)`: identical vectors have similarity 1.
    Distance,
    /// `cos(u, v)` taken literally; kept for ablations.
    Similarity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub structure_pattern: StructurePattern,
    pub feature_pattern: FeaturePattern,
    /// Edge-keep probability.
    pub p1: f64,
    /// Feature-keep probability.
    pub p2: f64,
    /// Leave every existing edge incident to the center untouched.
    pub protect_one_hop: bool,
    /// Number of perturbed instances.
    pub m: usize,
    /// Hop bound for the structural energy; defaults to the domain's.
    pub energy_hops: Option<usize>,
    /// Kernel width δ.
    pub delta: f64,
    pub lambda_a: f64,
    pub lambda_x: f64,
    pub seed: u64,
    pub cosine: CosineReading,
    /// Divide the feature energy by the domain size.
    pub normalize_feature_energy: bool,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            structure_pattern: StructurePattern::Removing,
            feature_pattern: FeaturePattern::Masking,
            p1: 0.5,
            p2: 0.8,
            protect_one_hop: true,
            m: 1500,
            energy_hops: None,
            delta: 25.0,
            lambda_a: 1.0,
            lambda_x: 1.0,
            seed: 0,
            cosine: CosineReading::Distance,
            normalize_feature_energy: false,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if !(self.lambda_a >= 0.0 && self.lambda_x >= 0.0) {
            return bad("lambda_a and lambda_x must be non-negative".into());
        }
        if self.lambda_a == 0.0 && self.lambda_x == 0.0 {
            return bad("lambda_a and lambda_x cannot both be zero".into());
        }
        if self.energy_hops == Some(0) {
            return bad("energy_hops must be at least 1".into());
        }
        Ok(())
    }
}

/// One perturbed copy of the domain and the black box's answer on it.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedInstance {
    pub adjacency: Adjacency,
    pub features: Array2<f64>,
    pub gamma_a: f64,
    pub gamma_x: f64,
    pub gamma: f64,
    /// Class probabilities for the center (node task) or the graph.
    pub response: Vec<f64>,
}

/// Perturbs the domain's adjacency. Undirected domains stay symmetric and the
/// diagonal stays zero.
pub fn perturb_structure(
    dom: &InterpretationDomain,
    cfg: &PerturbationConfig,
    rng: &mut impl Rng,
) -> Adjacency {
    let mut out = dom.adjacency.clone();
    if cfg.structure_pattern == StructurePattern::None {
        return out;
    }
    let n = dom.n_hat();
    let center = dom.center_pos();
    let symmetric = dom.adjacency.is_symmetric();
    for j in 0..n {
        let start = if symmetric { j + 1 } else { 0 };
        for k in start..n {
            if j == k {
                continue;
            }
            let u: f64 = rng.random();
            let present = dom.adjacency.get(j, k);
            if cfg.protect_one_hop && present && (j == center || k == center) {
                continue;
            }
            let value = match cfg.structure_pattern {
                StructurePattern::Removing => present && u < cfg.p1,
                StructurePattern::Adding => present || u >= cfg.p1,
                StructurePattern::AddingAndRemoving => present != (u >= cfg.p1),
                StructurePattern::None => present,
            };
            out.set(j, k, value);
            if symmetric {
                out.set(k, j, value);
            }
        }
    }
    out
}

/// Perturbs every entry of the domain's feature matrix.
pub fn perturb_features(
    dom: &InterpretationDomain,
    cfg: &PerturbationConfig,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let mut x = dom.features.clone();
    match cfg.feature_pattern {
        FeaturePattern::None => {}
        FeaturePattern::Masking => x.mapv_inplace(|v| {
            let u: f64 = rng.random();
            if u < cfg.p2 {
                v
            } else {
                0.0
            }
        }),
        FeaturePattern::Scaling => x.mapv_inplace(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v * z
        }),
    }
    x
}

/// Softmax over `w_k = K / (k + 1)` for `k = 1..=K`.
pub fn hop_weights(k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidHops(0));
    }
    let w: Vec<f64> = (1..=k_max)
        .map(|k| k_max as f64 / (k as f64 + 1.0))
        .collect();
    let top = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = w.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// Cosine distance with the conventions `d(u, 0) = 1` for `u ≠ 0` and
/// `d(0, 0) = 0`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    match (nu == 0.0, nv == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        (false, false) => 1.0 - dot / (nu.sqrt() * nv.sqrt()),
    }
}

/// Gaussian kernel on the cosine term: `exp(-c² / δ²)`.
pub fn sim(u: &[f64], v: &[f64], delta: f64) -> Result<f64> {
    sim_with(u, v, delta, CosineReading::Distance)
}

pub fn sim_with(u: &[f64], v: &[f64], delta: f64, reading: CosineReading) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "similarity operand length",
            expected: u.len(),
            found: v.len(),
        });
    }
    let dist = cosine_distance(u, v);
    let c = match reading {
        CosineReading::Distance => dist,
        CosineReading::Similarity => 1.0 - dist,
    };
    Ok((-(c * c) / (delta * delta)).exp())
}

fn as_f64(row: &[u8]) -> Vec<f64> {
    row.iter().map(|&b| b as f64).collect()
}

fn structure_energy_from_rows(
    original: &[Vec<u8>],
    perturbed: &[Vec<u8>],
    alpha: &[f64],
    delta: f64,
    reading: CosineReading,
) -> f64 {
    alpha
        .iter()
        .zip(original.iter().zip(perturbed))
        .map(|(a, (o, p))| {
            a * sim_with(&as_f64(p), &as_f64(o), delta, reading).expect("equal lengths")
        })
        .sum()
}

/// Structural energy `γ_A`.
pub fn energy_structure(
    dom: &InterpretationDomain,
    perturbed: &Adjacency,
    k_max: usize,
    delta: f64,
) -> Result<f64> {
    energy_structure_with(dom, perturbed, k_max, delta, CosineReading::Distance)
}

pub fn energy_structure_with(
    dom: &InterpretationDomain,
    perturbed: &Adjacency,
    k_max: usize,
    delta: f64,
    reading: CosineReading,
) -> Result<f64> {
    if perturbed.n() != dom.n_hat() {
        return Err(Error::DimensionMismatch {
            what: "perturbed adjacency size",
            expected: dom.n_hat(),
            found: perturbed.n(),
        });
    }
    let alpha = hop_weights(k_max)?;
    let c = dom.center_pos();
    Ok(structure_energy_from_rows(
        &dom.adjacency.reachability_rows(c, k_max),
        &perturbed.reachability_rows(c, k_max),
        &alpha,
        delta,
        reading,
    ))
}

/// Feature energy `γ_X`: per-row similarity summed over the domain.
pub fn energy_feature(
    dom: &InterpretationDomain,
    perturbed: &Array2<f64>,
    delta: f64,
) -> Result<f64> {
    energy_feature_with(dom, perturbed, delta, CosineReading::Distance)
}

pub fn energy_feature_with(
    dom: &InterpretationDomain,
    perturbed: &Array2<f64>,
    delta: f64,
    reading: CosineReading,
) -> Result<f64> {
    if perturbed.dim() != dom.features.dim() {
        return Err(Error::DimensionMismatch {
            what: "perturbed feature rows",
            expected: dom.n_hat(),
            found: perturbed.nrows(),
        });
    }
    let mut total = 0.0;
    for (p, o) in perturbed.rows().into_iter().zip(dom.features.rows()) {
        total += sim_with(&p.to_vec(), &o.to_vec(), delta, reading)?;
    }
    Ok(total)
}

/// `γ = λ_A γ_A + λ_X γ_X`
pub fn energy_total(gamma_a: f64, gamma_x: f64, lambda_a: f64, lambda_x: f64) -> f64 {
    lambda_a * gamma_a + lambda_x * gamma_x
}

/// Deterministic RNG for instance `index` of a batch seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The response row a predictor gives for the domain: the center's row for
/// node tasks, the single graph row otherwise.
pub fn domain_response(
    predictor: &dyn Predictor,
    dom: &InterpretationDomain,
    a: &Adjacency,
    x: &Array2<f64>,
) -> Result<Vec<f64>> {
    let probs = predictor.predict(a, x)?;
    let row = match predictor.task() {
        Task::Node => dom.center_pos(),
        Task::Graph => 0,
    };
    Ok(probs.row(row).to_vec())
}

/// Draws `cfg.m` perturbed instances, evaluated in parallel. Instance `j`
/// uses [`instance_rng`]`(cfg.seed, j)`, so the batch does not depend on how
/// many worker threads run it.
pub fn sample_batch(
    dom: &InterpretationDomain,
    predictor: &dyn Predictor,
    cfg: &PerturbationConfig,
) -> Result<Vec<PerturbedInstance>> {
    cfg.validate()?;
    if predictor.feature_dim() != dom.feature_dim() {
        return Err(Error::DimensionMismatch {
            what: "predictor feature dimension",
            expected: dom.feature_dim(),
            found: predictor.feature_dim(),
        });
    }
    let k_max = cfg.energy_hops.unwrap_or(dom.hops);
    let alpha = hop_weights(k_max)?;
    let c = dom.center_pos();
    let original_rows = dom.adjacency.reachability_rows(c, k_max);
    let n_hat = dom.n_hat() as f64;

    (0..cfg.m)
        .into_par_iter()
        .map(|j| {
            let mut rng = instance_rng(cfg.seed, j as u64);
            let adjacency = perturb_structure(dom, cfg, &mut rng);
            let features = perturb_features(dom, cfg, &mut rng);
            let rows = adjacency.reachability_rows(c, k_max);
            let gamma_a =
                structure_energy_from_rows(&original_rows, &rows, &alpha, cfg.delta, cfg.cosine);
            let mut gamma_x = energy_feature_with(dom, &features, cfg.delta, cfg.cosine)?;
            if cfg.normalize_feature_energy {
                gamma_x /= n_hat;
            }
            let gamma = energy_total(gamma_a, gamma_x, cfg.lambda_a, cfg.lambda_x);
            let response = domain_response(predictor, dom, &adjacency, &features)?;
            Ok(PerturbedInstance {
                adjacency,
                features,
                gamma_a,
                gamma_x,
                gamma,
                response,
            })
        })
        .collect()
}
