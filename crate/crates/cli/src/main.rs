mod args;
mod config;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde_json::json;
use trap2_core::baselines::{grad_explainer, greedy_explainer, random_explainer};
use trap2_core::evaluation::{evaluate, EvalConfig};
use trap2_core::explanation::ExplanationFile;
use trap2_core::graph::load_graphs;
use trap2_core::paraphrase::{center_seed, explain_domain, explain_graph};
use trap2_core::predictor::{load_predictor, ReferenceGcn, Task};
use trap2_core::synthetic::generate;
use trap2_core::{translate, Explanation, Graph, Method, Predictor};

use args::{Cli, Command, EvalArgs, ExplainArgs, ExportDotArgs, GenArgs, TrainArgs};
use config::{apply_explainer, dataset_spec, train_settings, RunConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => gen(&cfg, &args),
        Command::Train(args) => train(&cfg, &args),
        Command::Explain(args) => explain(cfg, &args),
        Command::Eval(args) => eval(cfg, &args),
        Command::ExportDot(args) => export_dot(&args),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_graph(path: &Path) -> Result<Graph> {
    Graph::load(path).with_context(|| format!("loading graph {}", path.display()))
}

fn gen(cfg: &RunConfig, args: &GenArgs) -> Result<()> {
    let spec = dataset_spec(cfg, args)?;
    let g = generate(&spec)?;
    g.save(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "{}: {} nodes, {} edges -> {}",
        spec.kind,
        g.n(),
        g.adjacency.edge_count() / 2,
        args.output.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let (tcfg, shape) = train_settings(cfg, args);
    let graphs =
        load_graphs(&args.graph).with_context(|| format!("loading {}", args.graph.display()))?;
    let Some(first) = graphs.first() else {
        bail!("{} contains no graphs", args.graph.display());
    };
    let d = first.feature_dim();
    let (model, report) = match shape.task {
        Task::Node => {
            if graphs.len() != 1 {
                bail!(
                    "node task trains on exactly one graph, found {}",
                    graphs.len()
                );
            }
            let classes = first
                .num_node_classes()
                .context("graph has no node labels")?;
            let mut model =
                ReferenceGcn::new(Task::Node, d, classes, shape.hidden, shape.depth, tcfg.seed)?;
            let report = model.train_nodes(first, &tcfg)?;
            (model, report)
        }
        Task::Graph => {
            let classes = graphs
                .iter()
                .map(|g| g.graph_label.map(|l| l + 1))
                .collect::<Option<Vec<_>>>()
                .context("every graph needs a graph_label")?
                .into_iter()
                .max()
                .unwrap_or(1);
            let mut model = ReferenceGcn::new(
                Task::Graph,
                d,
                classes,
                shape.hidden,
                shape.depth,
                tcfg.seed,
            )?;
            let report = model.train_graphs(&graphs, &tcfg)?;
            (model, report)
        }
    };
    model.save(&args.output, !args.black_box)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn explain_one(
    method: Method,
    g: &Graph,
    node: usize,
    predictor: &dyn Predictor,
    cfg: &RunConfig,
) -> Result<Explanation> {
    let dom = translate(g, node, cfg.explain.hops_for(predictor))?;
    let n_select = cfg.explain.select_count(dom.n_hat()).min(dom.n_hat());
    let seed = cfg.explain.perturbation.seed;
    Ok(match method {
        Method::Trap2 => explain_domain(dom, predictor, &cfg.explain)?,
        Method::Random => random_explainer(&dom, center_seed(seed, node), n_select)?,
        Method::Greedy => greedy_explainer(&dom, predictor, cfg.greedy_mask, n_select)?,
        Method::Grad => grad_explainer(&dom, predictor, None, cfg.grad_source, n_select)?,
    })
}

fn explain(mut cfg: RunConfig, args: &ExplainArgs) -> Result<()> {
    apply_explainer(&mut cfg, &args.explainer);
    cfg.explain.perturbation.validate()?;
    let g = load_graph(&args.graph)?;
    let predictor = load_predictor(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let method = args.method.unwrap_or(Method::Trap2);
    let expl = match (args.node, predictor.task()) {
        (Some(node), Task::Node) => explain_one(method, &g, node, &*predictor, &cfg)?,
        (None, Task::Graph) if method == Method::Trap2 => {
            explain_graph(&g, &*predictor, &cfg.explain)?
        }
        (None, Task::Graph) => bail!("graph-level explanations are only available for trap2"),
        (Some(_), Task::Graph) => bail!("the model is a graph classifier; omit --node"),
        (None, Task::Node) => bail!("the model is a node classifier; pass --node"),
    };
    let config = json!({
        "method": method,
        "explain": cfg.explain,
        "greedy_mask": cfg.greedy_mask,
        "grad_source": cfg.grad_source,
    });
    let file = expl.to_file(config);
    match &args.output {
        Some(path) => write_json(path, &file)?,
        None => println!("{}", serde_json::to_string_pretty(&file)?),
    }
    if let Some(path) = &args.export_dot {
        std::fs::write(path, expl.to_dot())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn eval(mut cfg: RunConfig, args: &EvalArgs) -> Result<()> {
    apply_explainer(&mut cfg, &args.explainer);
    cfg.explain.perturbation.validate()?;
    let g = load_graph(&args.dataset)?;
    let predictor = load_predictor(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let dataset = args.name.clone().unwrap_or_else(|| {
        args.dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let ecfg = EvalConfig {
        dataset,
        methods: args
            .methods
            .clone()
            .or(cfg.methods.clone())
            .unwrap_or_else(|| Method::ALL.to_vec()),
        sample: args.sample.or(cfg.sample),
        seed: cfg.explain.perturbation.seed,
        greedy_mask: cfg.greedy_mask,
        grad_source: cfg.grad_source,
        explain: cfg.explain,
    };
    let report = evaluate(&g, &*predictor, &ecfg)?;
    let csv = report.to_csv()?;
    match &args.csv {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    Ok(())
}

fn export_dot(args: &ExportDotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.explanation)
        .with_context(|| format!("reading {}", args.explanation.display()))?;
    let file: ExplanationFile = serde_json::from_str(&text)?;
    let dot = file.into_explanation()?.to_dot();
    match &args.output {
        Some(path) => {
            std::fs::write(path, dot).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{dot}"),
    }
    Ok(())
}
