//! Checks shared by the property tests and the acceptance report. Each one
//! returns a description of the first violation it finds.
#![allow(dead_code)]

use std::collections::VecDeque;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trap2_core::evaluation::{evaluate, EvalConfig};
use trap2_core::graph::{Adjacency, Graph};
use trap2_core::paraphrase::{
    explain_node, fit, node_contributions, surrogate_forward, FitConfig, SurrogateModel,
};
use trap2_core::perturbation::{
    energy_feature, energy_structure, energy_total, hop_weights, instance_rng, perturb_features,
    perturb_structure, sample_batch, FeaturePattern, PerturbationConfig, PerturbedInstance,
    StructurePattern,
};
use trap2_core::predictor::{ModelFile, ReferenceGcn, Task, TrainConfig};
use trap2_core::synthetic::{generate, DatasetKind, DatasetSpec};
use trap2_core::translation::{translate, InterpretationDomain};
use trap2_core::{explain_graph, ExplainConfig, Method};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)*));
        }
    };
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64, directed: bool) -> Adjacency {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    Adjacency::from_edges(n, &edges, directed).unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
}

/// Domain of a random node in a random undirected graph of at most `max_n` nodes.
pub fn random_domain(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    d: usize,
    k: usize,
) -> InterpretationDomain {
    let n = rng.random_range(1..=max_n);
    let density = rng.random_range(0.05..0.5);
    let a = random_graph(rng, n, density, false);
    let x = random_features(rng, n, d);
    let g = Graph::new(a, x, false).unwrap();
    translate(&g, rng.random_range(0..n), k).unwrap()
}

fn bfs_within(a: &Adjacency, source: usize, k: usize) -> Vec<bool> {
    let mut dist = vec![usize::MAX; a.n()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for w in 0..a.n() {
            if a.get(v, w) && dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist.into_iter().map(|d| d <= k).collect()
}

pub fn reachability_matches_bfs(graphs: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..graphs {
        let n = rng.random_range(1..=50);
        let directed = rng.random_bool(0.3);
        let density = rng.random_range(0.0..0.15);
        let a = random_graph(&mut rng, n, density, directed);
        let k = rng.random_range(1..=4);
        let reach = a.reachability(k).map_err(|e| e.to_string())?;
        for i in 0..n {
            let oracle = bfs_within(&a, i, k);
            for (j, &want) in oracle.iter().enumerate() {
                ensure!(
                    reach.get(i, j) == want,
                    "n={n} k={k}: entry ({i},{j}) differs from BFS"
                );
            }
        }
    }
    Ok(())
}

pub fn hop_weights_hold() -> Check {
    for k in 1..=12 {
        let a = hop_weights(k).map_err(|e| e.to_string())?;
        ensure!(a.len() == k, "K={k}: {} weights", a.len());
        ensure!(
            (a.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
            "K={k}: weights sum to {}",
            a.iter().sum::<f64>()
        );
        ensure!(
            a.windows(2).all(|w| w[0] > w[1]),
            "K={k}: not strictly decreasing"
        );
    }
    let a = hop_weights(3).map_err(|e| e.to_string())?;
    for (got, want) in a.iter().zip([0.481, 0.292, 0.227]) {
        ensure!((got - want).abs() <= 1e-3, "K=3 weights {a:?}");
    }
    Ok(())
}

pub fn identity_energy_is_exact(domains: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..domains {
        let dom = random_domain(&mut rng, 25, 4, 3);
        let (la, lx) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let ga = energy_structure(&dom, &dom.adjacency, 3, 25.0).map_err(|e| e.to_string())?;
        let gx = energy_feature(&dom, &dom.features, 25.0).map_err(|e| e.to_string())?;
        let gamma = energy_total(ga, gx, la, lx);
        let want = la + lx * dom.n_hat() as f64;
        ensure!(
            (gamma - want).abs() <= 1e-9,
            "identity energy {gamma}, expected {want}"
        );
    }
    Ok(())
}

pub fn random_config(rng: &mut ChaCha8Rng) -> PerturbationConfig {
    let structure = [
        StructurePattern::Adding,
        StructurePattern::Removing,
        StructurePattern::AddingAndRemoving,
        StructurePattern::None,
    ];
    let features = [
        FeaturePattern::Masking,
        FeaturePattern::Scaling,
        FeaturePattern::None,
    ];
    PerturbationConfig {
        structure_pattern: structure[rng.random_range(0..structure.len())],
        feature_pattern: features[rng.random_range(0..features.len())],
        p1: rng.random_range(0.0..=1.0),
        p2: rng.random_range(0.0..=1.0),
        protect_one_hop: rng.random_bool(0.5),
        lambda_a: rng.random_range(0.1..2.0),
        lambda_x: rng.random_range(0.0..2.0),
        delta: rng.random_range(0.5..30.0),
        ..PerturbationConfig::default()
    }
}

pub fn energies_stay_positive(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut dom = random_domain(&mut rng, 20, 3, 3);
    for t in 0..instances {
        if t % 100 == 0 {
            dom = random_domain(&mut rng, 20, 3, 3);
        }
        let cfg = random_config(&mut rng);
        let a = perturb_structure(&dom, &cfg, &mut rng);
        let x = perturb_features(&dom, &cfg, &mut rng);
        let ga = energy_structure(&dom, &a, 3, cfg.delta).map_err(|e| e.to_string())?;
        let gx = energy_feature(&dom, &x, cfg.delta).map_err(|e| e.to_string())?;
        let gamma = energy_total(ga, gx, cfg.lambda_a, cfg.lambda_x);
        ensure!(gamma > 0.0, "instance {t}: gamma = {gamma}");
    }
    Ok(())
}

pub fn patterns_hold(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..instances {
        let dom = random_domain(&mut rng, 20, 2, 3);
        let cfg = random_config(&mut rng);
        let a = perturb_structure(&dom, &cfg, &mut rng);
        let orig = &dom.adjacency;
        let c = dom.center_pos();
        for i in 0..dom.n_hat() {
            ensure!(!a.get(i, i), "instance {t}: self loop at {i}");
            for j in 0..dom.n_hat() {
                ensure!(
                    a.get(i, j) == a.get(j, i),
                    "instance {t}: asymmetric at ({i},{j})"
                );
                let ok = match cfg.structure_pattern {
                    StructurePattern::Removing => !a.get(i, j) || orig.get(i, j),
                    StructurePattern::Adding => a.get(i, j) || !orig.get(i, j),
                    StructurePattern::None => a.get(i, j) == orig.get(i, j),
                    StructurePattern::AddingAndRemoving => true,
                };
                ensure!(
                    ok,
                    "instance {t}: {:?} broken at ({i},{j})",
                    cfg.structure_pattern
                );
            }
            if cfg.protect_one_hop && orig.get(c, i) {
                ensure!(
                    a.get(c, i),
                    "instance {t}: protected edge (center,{i}) removed"
                );
            }
        }
    }
    Ok(())
}

/// Instances whose responses come from a known surrogate.
fn planted_batch(
    dom: &InterpretationDomain,
    planted: &SurrogateModel,
    cfg: &PerturbationConfig,
) -> Vec<PerturbedInstance> {
    (0..cfg.m)
        .map(|j| {
            let mut rng = instance_rng(cfg.seed, j as u64);
            let adjacency = perturb_structure(dom, cfg, &mut rng);
            let features = perturb_features(dom, cfg, &mut rng);
            let gamma_a = energy_structure(dom, &adjacency, dom.hops, cfg.delta).unwrap();
            let gamma_x = energy_feature(dom, &features, cfg.delta).unwrap();
            let response = surrogate_forward(planted, &adjacency, &features).unwrap();
            PerturbedInstance {
                adjacency,
                features,
                gamma_a,
                gamma_x,
                gamma: energy_total(gamma_a, gamma_x, cfg.lambda_a, cfg.lambda_x),
                response,
            }
        })
        .collect()
}

fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn planted_surrogate_is_recovered(domains: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut done = 0;
    while done < domains {
        let mut dom = random_domain(&mut rng, 30, 2, 2);
        if dom.n_hat() < 3 {
            continue;
        }
        // keep every slot well excited
        dom.features
            .mapv_inplace(|v| v.signum() * (0.5 + 0.5 * v.abs()));
        let n = dom.n_hat();
        let d = dom.feature_dim();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut planted = SurrogateModel::zeros(dom.clone(), 2);
        for (rank, &q) in order.iter().enumerate() {
            let magnitude = 0.5 * 0.8f64.powi(rank as i32);
            for f in 0..d {
                let w = if f == 0 { magnitude } else { -magnitude * 0.5 };
                planted.weights[(0, q * d + f)] = w;
                planted.weights[(1, q * d + f)] = -w;
            }
        }
        let cfg = PerturbationConfig {
            feature_pattern: FeaturePattern::Scaling,
            m: 1500,
            seed: done as u64,
            ..PerturbationConfig::default()
        };
        let batch = planted_batch(&dom, &planted, &cfg);
        let fitted = fit(&dom, &batch, &FitConfig::default()).map_err(|e| e.to_string())?;
        let top = n.div_ceil(2);
        let want = ranking(&node_contributions(&planted, 0).unwrap());
        let got = ranking(&node_contributions(&fitted, 0).unwrap());
        ensure!(
            got[..top] == want[..top],
            "domain {done} ({n} nodes): top ranking {:?}, planted {:?}",
            &got[..top],
            &want[..top]
        );
        done += 1;
    }
    Ok(())
}

pub fn never_gated_slots_stay_zero(domains: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let predictor = ReferenceGcn::new(Task::Node, 3, 3, 8, 3, 1).unwrap();
    let mut checked = 0;
    for _ in 0..domains {
        let dom = random_domain(&mut rng, 25, 3, 3);
        let cfg = PerturbationConfig {
            structure_pattern: StructurePattern::Removing,
            p1: 0.0,
            protect_one_hop: true,
            m: 200,
            ..PerturbationConfig::default()
        };
        let batch = sample_batch(&dom, &predictor, &cfg).map_err(|e| e.to_string())?;
        let model = fit(&dom, &batch, &FitConfig::default()).map_err(|e| e.to_string())?;
        for (q, &hop) in dom.hop_of.iter().enumerate() {
            if hop < 2 {
                continue;
            }
            checked += 1;
            for c in 0..model.weights.nrows() {
                for f in 0..3 {
                    let w = model.weights[(c, q * 3 + f)];
                    ensure!(
                        w == 0.0,
                        "slot ({q},{f}) of a never-gated node has weight {w}"
                    );
                }
            }
        }
    }
    ensure!(checked > 0, "no never-gated node was sampled");
    Ok(())
}

/// Random model with nonzero biases, so no pre-activation is exactly zero.
pub fn biased_model(
    task: Task,
    classes: usize,
    hidden: usize,
    depth: usize,
    seed: u64,
) -> ReferenceGcn {
    let base = ReferenceGcn::new(task, 3, classes, hidden, depth, seed).unwrap();
    let mut file = ModelFile::from_model(&base, true);
    for (l, layer) in file.layers.iter_mut().enumerate() {
        for (k, b) in layer.bias.iter_mut().enumerate() {
            *b = ((seed as f64) * 0.37 + (l * 7 + k) as f64 * 1.3).sin() * 0.5;
        }
    }
    file.into_model().unwrap()
}

fn loss(
    m: &ReferenceGcn,
    a: &Array2<f64>,
    x: &Array2<f64>,
    target: usize,
    node: Option<usize>,
) -> f64 {
    let p = m.predict_relaxed(a, x).unwrap();
    -p[(node.unwrap_or(0), target)].ln()
}

fn central(
    m: &ReferenceGcn,
    a: &Array2<f64>,
    x: &Array2<f64>,
    at: (bool, usize, usize),
    h: f64,
    target: usize,
    node: Option<usize>,
) -> f64 {
    let (on_a, i, j) = at;
    let (mut ap, mut xp, mut am, mut xm) = (a.clone(), x.clone(), a.clone(), x.clone());
    if on_a {
        ap[(i, j)] += h;
        am[(i, j)] -= h;
    } else {
        xp[(i, j)] += h;
        xm[(i, j)] -= h;
    }
    (loss(m, &ap, &xp, target, node) - loss(m, &am, &xm, target, node)) / (2.0 * h)
}

/// Relative error between the analytic input gradient and central
/// differences with step `1e-4`, over every entry of `a` and `x`. Entries
/// whose difference quotient moves between step `h` and `h / 2` sit next to
/// a ReLU kink and are skipped; their count is returned too.
pub fn gradient_error(
    m: &ReferenceGcn,
    a: &Array2<f64>,
    x: &Array2<f64>,
    target: usize,
    node: Option<usize>,
) -> (f64, usize) {
    const H: f64 = 1e-4;
    let g = m.input_gradients_relaxed(a, x, target, node).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut skipped = 0;
    for (on_a, analytic) in [(true, &g.adjacency), (false, &g.features)] {
        for ((i, j), &an) in analytic.indexed_iter() {
            let fd = central(m, a, x, (on_a, i, j), H, target, node);
            let half = central(m, a, x, (on_a, i, j), H / 2.0, target, node);
            if (fd - half).abs() > 1e-7 {
                skipped += 1;
                continue;
            }
            num += (fd - an).powi(2);
            den += an.powi(2);
        }
    }
    (num.sqrt() / den.sqrt().max(1e-8), skipped)
}

pub fn relaxed_input(rng: &mut ChaCha8Rng, n: usize) -> (Array2<f64>, Array2<f64>) {
    let a = Array2::from_shape_fn((n, n), |(i, j)| {
        if i != j && rng.random_bool(0.6) {
            rng.random_range(0.2..1.0)
        } else {
            0.0
        }
    });
    (a, random_features(rng, n, 3))
}

pub fn gradients_match_finite_differences(cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for t in 0..cases {
        let n = rng.random_range(2..7);
        let (a, x) = relaxed_input(&mut rng, n);
        let seed = rng.random();
        let (m, node, target) = if t % 2 == 0 {
            (
                biased_model(Task::Node, 3, 5, 3, seed),
                Some(rng.random_range(0..n)),
                rng.random_range(0..3),
            )
        } else {
            (
                biased_model(Task::Graph, 2, 4, 2, seed),
                None,
                rng.random_range(0..2),
            )
        };
        let (err, skipped) = gradient_error(&m, &a, &x, target, node);
        ensure!(err < 1e-4, "case {t}: relative error {err}");
        ensure!(
            skipped <= n * (n + 3) / 2,
            "case {t}: {skipped} entries next to a kink"
        );
    }
    Ok(())
}

fn on_workers<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

fn small_spec() -> DatasetSpec {
    DatasetSpec {
        base_nodes: 60,
        motif_count: 8,
        ..DatasetSpec::for_kind(DatasetKind::BaShapes, 5)
    }
}

fn small_model(g: &Graph) -> ReferenceGcn {
    let classes = g.num_node_classes().unwrap();
    let mut m = ReferenceGcn::new(Task::Node, g.feature_dim(), classes, 8, 3, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        ..TrainConfig::default()
    };
    m.train_nodes(g, &cfg).unwrap();
    m
}

fn quick_explain() -> ExplainConfig {
    ExplainConfig {
        perturbation: PerturbationConfig {
            m: 120,
            seed: 9,
            ..PerturbationConfig::default()
        },
        ..ExplainConfig::default()
    }
}

pub fn generation_and_training_repeat() -> Check {
    let a = generate(&small_spec()).unwrap();
    let b = generate(&small_spec()).unwrap();
    ensure!(
        a.to_json().unwrap() == b.to_json().unwrap(),
        "generated graphs differ"
    );
    ensure!(small_model(&a) == small_model(&b), "trained models differ");
    Ok(())
}

pub fn batches_ignore_workers() -> Check {
    let g = generate(&small_spec()).unwrap();
    let m = small_model(&g);
    let dom = translate(&g, 65, 3).unwrap();
    let cfg = PerturbationConfig {
        m: 300,
        ..PerturbationConfig::default()
    };
    let one = on_workers(1, || sample_batch(&dom, &m, &cfg).unwrap());
    let four = on_workers(4, || sample_batch(&dom, &m, &cfg).unwrap());
    ensure!(
        one == four,
        "perturbation batch depends on the worker count"
    );
    Ok(())
}

pub fn explanations_ignore_workers() -> Check {
    let g = generate(&small_spec()).unwrap();
    let m = small_model(&g);
    let cfg = quick_explain();
    let one = on_workers(1, || explain_node(&g, 62, &m, &cfg).unwrap());
    let three = on_workers(3, || explain_node(&g, 62, &m, &cfg).unwrap());
    let again = explain_node(&g, 62, &m, &cfg).unwrap();
    ensure!(one == three, "node explanation depends on the worker count");
    ensure!(one == again, "node explanation differs between runs");
    Ok(())
}

pub fn reports_ignore_workers() -> Check {
    let g = generate(&small_spec()).unwrap();
    let m = small_model(&g);
    let cfg = EvalConfig {
        dataset: "small".into(),
        methods: Method::ALL.to_vec(),
        explain: quick_explain(),
        sample: Some(6),
        seed: 3,
        greedy_mask: Default::default(),
        grad_source: Default::default(),
    };
    let one = on_workers(1, || evaluate(&g, &m, &cfg).unwrap().to_csv().unwrap());
    let four = on_workers(4, || evaluate(&g, &m, &cfg).unwrap().to_csv().unwrap());
    ensure!(one == four, "evaluation report depends on the worker count");
    Ok(())
}

pub fn graph_explanations_ignore_workers() -> Check {
    let g = generate(&DatasetSpec {
        base_nodes: 12,
        motif_count: 2,
        ..DatasetSpec::for_kind(DatasetKind::BaShapes, 1)
    })
    .unwrap();
    let m = ReferenceGcn::new(Task::Graph, g.feature_dim(), 2, 6, 2, 4).unwrap();
    let cfg = quick_explain();
    let one = on_workers(1, || explain_graph(&g, &m, &cfg).unwrap());
    let four = on_workers(4, || explain_graph(&g, &m, &cfg).unwrap());
    ensure!(one == four, "graph explanation depends on the worker count");
    Ok(())
}
