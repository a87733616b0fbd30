use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use linecon_core::congraph::{build_graph, load_graph, save_graph, ConvGraph, EdgeAttr, EdgeAttrKind, ShiftWeights};
use linecon_core::corpus::{load_corpus, synth_corpus, validate_corpus, write_corpus, SynthSpec};
use linecon_core::nn::gradcheck::{self, GradCheckSpec};
use linecon_core::nn::{Checkpoint, ModelConfig, ModelKind, DEFAULT_HIDDEN_DIM, DEFAULT_LEAKY_SLOPE};
use linecon_core::optim::AdamWConfig;
use linecon_core::train::{self, confusion_csv, evaluate, predict, MetricsReport, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BuildGraphArgs, EvalArgs, GradcheckArgs, PredictArgs, SynthArgs, TrainArgs, ValidateArgs};
use crate::manifest::{sidecar, Recorder};

/// How a command ended when it did not fail outright.
pub enum Outcome {
    Success,
    /// Input rejected by validation or a check that did not pass.
    Rejected,
    /// Arguments that parse but do not fit together.
    Usage(String),
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn validate(args: &ValidateArgs) -> Result<Outcome> {
    let rec = Recorder::start("validate", &[&args.input.manifest, &args.input.features])?;
    let corpus = load_corpus(&args.input.manifest, &args.input.features)?;
    let report = validate_corpus(&corpus);
    write_json(&args.report, &report)?;
    rec.finish(serde_json::json!({}), None, &[&args.report])?;
    let [train, dev, test] = corpus.split_counts();
    println!(
        "{} conversations, {} utterances (train {train}, dev {dev}, test {test}), {} emotions, feature dim {}",
        corpus.conversations.len(),
        corpus.n_utterances(),
        corpus.n_classes(),
        corpus.feature_dim()
    );
    for w in &report.warnings {
        println!("warning: {}: {}", w.location, w.message);
    }
    for e in &report.errors {
        println!("error: {}: {}", e.location, e.message);
    }
    if report.is_ok() {
        println!("ok; report written to {}", args.report.display());
        Ok(Outcome::Success)
    } else {
        println!("{} error(s); report written to {}", report.errors.len(), args.report.display());
        Ok(Outcome::Rejected)
    }
}

pub fn synth(args: &SynthArgs) -> Result<Outcome> {
    let rec = Recorder::start("synth", &[])?;
    let spec = SynthSpec {
        seed: args.seed,
        n_convs: args.convs,
        min_len: args.min_len,
        max_len: args.max_len,
        n_classes: args.classes,
        dim: args.dim,
        noise: args.noise,
    };
    let corpus = synth_corpus(&spec)?;
    write_corpus(&corpus, &args.manifest, &args.features)?;
    rec.finish(&spec, Some(spec.seed), &[&args.manifest, &args.features])?;
    println!(
        "wrote {} utterances in {} conversations to {}",
        corpus.n_utterances(),
        corpus.conversations.len(),
        args.manifest.display()
    );
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct GraphConfig {
    topology: linecon_core::congraph::Topology,
    edge_attr: EdgeAttrKind,
    shift_weights: Option<ShiftWeights>,
}

pub fn build_graph_cmd(args: &BuildGraphArgs) -> Result<Outcome> {
    let rec = Recorder::start("build-graph", &[&args.input.manifest, &args.input.features])?;
    let corpus = load_corpus(&args.input.manifest, &args.input.features)?;
    let report = validate_corpus(&corpus);
    if !report.is_ok() {
        for e in &report.errors {
            eprintln!("error: {}: {}", e.location, e.message);
        }
        eprintln!("corpus has {} validation error(s); run `linecon validate` for a report", report.errors.len());
        return Ok(Outcome::Rejected);
    }
    let edge_attr = EdgeAttrKind::from(args.edge_attr);
    let scheme = ShiftWeights {
        shift: args.shift,
        noshift: args.noshift,
        selfloop: args.selfloop,
    };
    let graph = build_graph(&corpus, args.topology.into())?;
    let graph = edge_attr.apply(&graph, scheme)?;
    save_graph(&graph, &args.out)?;
    let config = GraphConfig {
        topology: graph.topology(),
        edge_attr,
        shift_weights: (edge_attr == EdgeAttrKind::SsWeight).then_some(scheme),
    };
    rec.finish(&config, None, &[&args.out])?;
    println!(
        "{} nodes, {} directed edges, {} conversations -> {}",
        graph.n_nodes(),
        graph.n_edges(),
        graph.n_conversations(),
        args.out.display()
    );
    Ok(Outcome::Success)
}

/// Training settings accepted from a TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    model: Option<ModelKind>,
    seed: Option<u64>,
    hidden: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    leaky_slope: Option<f64>,
    ignore_edge_attr: Option<bool>,
}

fn read_train_file(path: &Path) -> Result<TrainFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Whether the model should consume the graph's edge attribute.
fn edge_attr_use(kind: ModelKind, graph: &ConvGraph, ignore: bool) -> Result<bool, String> {
    if ignore {
        return Ok(false);
    }
    match (kind, graph.attr()) {
        (_, EdgeAttr::None) => Ok(false),
        (ModelKind::Gcn, EdgeAttr::Weights(_)) | (ModelKind::Gat, EdgeAttr::Features(_)) => Ok(true),
        (ModelKind::Gcn, EdgeAttr::Features(_)) => {
            Err("gcn consumes ss-weight edges but the graph carries ss-feature; rebuild it or pass --ignore-edge-attr".into())
        }
        (ModelKind::Gat, EdgeAttr::Weights(_)) => {
            Err("gat consumes ss-feature edges but the graph carries ss-weight; rebuild it or pass --ignore-edge-attr".into())
        }
    }
}

pub fn train_cmd(args: &TrainArgs) -> Result<Outcome> {
    let mut inputs: Vec<&Path> = vec![&args.graph];
    if let Some(c) = &args.config {
        inputs.push(c);
    }
    let rec = Recorder::start("train", &inputs)?;
    let file = match &args.config {
        Some(p) => read_train_file(p)?,
        None => TrainFile::default(),
    };
    let graph = load_graph(&args.graph)?;

    let kind = args.model.map(ModelKind::from).or(file.model).unwrap_or(ModelKind::Gat);
    let ignore = args.ignore_edge_attr || file.ignore_edge_attr.unwrap_or(false);
    let use_edge_attr = match edge_attr_use(kind, &graph, ignore) {
        Ok(u) => u,
        Err(msg) => return Ok(Outcome::Usage(msg)),
    };
    let defaults = AdamWConfig::default();
    let config = TrainConfig {
        max_epochs: args.max_epochs.or(file.max_epochs).unwrap_or(train::DEFAULT_MAX_EPOCHS),
        patience: args.patience.or(file.patience).unwrap_or(train::DEFAULT_PATIENCE),
        model: ModelConfig {
            kind,
            hidden_dim: args.hidden.or(file.hidden).unwrap_or(DEFAULT_HIDDEN_DIM),
            n_classes: graph.n_classes(),
            seed: args.seed.or(file.seed).unwrap_or(0),
            leaky_slope: file.leaky_slope.unwrap_or(DEFAULT_LEAKY_SLOPE),
            use_edge_attr,
        },
        optimizer: AdamWConfig {
            lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
            weight_decay: args.weight_decay.or(file.weight_decay).unwrap_or(defaults.weight_decay),
            beta1: file.beta1.unwrap_or(defaults.beta1),
            beta2: file.beta2.unwrap_or(defaults.beta2),
            eps: file.eps.unwrap_or(defaults.eps),
        },
    };
    if let Err(e) = config.validate() {
        return Ok(Outcome::Usage(e.to_string()));
    }

    let (ckpt, history) = train::train(&graph, &config)?;
    ckpt.save(&args.out)?;
    let history_path = sidecar(&args.out, "history.json");
    write_json(&history_path, &history)?;
    let manifest = rec
        .with_epoch_seconds(history.epoch_seconds.clone())
        .finish(&config, Some(config.seed()), &[&args.out, &history_path])?;

    let best = &history.epochs[history.best_epoch];
    let dev = best
        .dev_weighted_f1
        .map_or_else(|| "n/a".to_string(), |f| format!("{f:.4}"));
    println!(
        "{kind}: {} epochs, best epoch {} (train loss {:.4}, dev weighted F1 {dev}) -> {}",
        history.epochs.len() - 1,
        history.best_epoch,
        best.train_loss,
        args.out.display()
    );
    println!("run manifest: {}", manifest.display());
    Ok(Outcome::Success)
}

pub fn eval_cmd(args: &EvalArgs) -> Result<Outcome> {
    let rec = Recorder::start("eval", &[&args.ckpt, &args.graph])?;
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let graph = load_graph(&args.graph)?;
    let split = args.split.into();
    let metrics = evaluate(&ckpt, &graph, split)?;
    let csv = confusion_csv(&metrics, graph.class_names());
    let report = MetricsReport::new(split, graph.class_names(), metrics);
    write_json(&args.out, &report)?;
    let confusion: PathBuf = args.confusion.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    fs::write(&confusion, csv).with_context(|| format!("writing {}", confusion.display()))?;
    rec.finish(serde_json::json!({ "split": split }), Some(ckpt.config.seed), &[&args.out, &confusion])?;

    let m = &report.metrics;
    println!(
        "{split}: {} nodes, weighted F1 {:.4}, accuracy {:.4}",
        report.n_nodes, m.weighted_f1, m.accuracy
    );
    for (name, c) in graph.class_names().iter().zip(&m.per_class) {
        println!(
            "  {name:<12} P {:.4}  R {:.4}  F1 {:.4}  support {}",
            c.precision, c.recall, c.f1, c.support
        );
    }
    Ok(Outcome::Success)
}

pub fn predict_cmd(args: &PredictArgs) -> Result<Outcome> {
    let rec = Recorder::start("predict", &[&args.ckpt, &args.graph])?;
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let graph = load_graph(&args.graph)?;
    let preds = predict(&ckpt, &graph)?;
    let mut out = String::from("utt_id,emotion\n");
    for (id, &p) in graph.utt_ids().iter().zip(&preds) {
        writeln!(out, "{},{}", csv_field(id), csv_field(&graph.class_names()[p]))?;
    }
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    rec.finish(serde_json::json!({}), Some(ckpt.config.seed), &[&args.out])?;
    println!("{} predictions -> {}", preds.len(), args.out.display());
    Ok(Outcome::Success)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn gradcheck_cmd(args: &GradcheckArgs) -> Result<Outcome> {
    let kind = ModelKind::from(args.model);
    let edge_attr = EdgeAttrKind::from(args.edge_attr);
    let fits = matches!(
        (kind, edge_attr),
        (_, EdgeAttrKind::None) | (ModelKind::Gcn, EdgeAttrKind::SsWeight) | (ModelKind::Gat, EdgeAttrKind::SsFeature)
    );
    if !fits {
        return Ok(Outcome::Usage(format!("{kind} does not consume {edge_attr} edge attributes")));
    }
    if args.nodes == 0 || args.seeds == 0 || args.step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Ok(Outcome::Usage("--nodes, --seeds and --step must be positive".into()));
    }
    let mut all_pass = true;
    for seed in args.seed..args.seed + args.seeds {
        let spec = GradCheckSpec::new(
            kind,
            args.nodes,
            (args.dims.input, args.dims.hidden, args.dims.classes),
            seed,
        )
        .with_edge_attr(edge_attr);
        let report = gradcheck::run(&spec, args.step)?;
        println!("seed {seed}: {kind} edge-attr {edge_attr}");
        for t in &report.tensors {
            let ok = t.max_rel_error < args.tolerance;
            println!("  {:<10} max rel error {:.3e}  {}", t.name, t.max_rel_error, if ok { "ok" } else { "FAIL" });
        }
        if report.kink_steps > 0 {
            println!("  ({} entries used a smaller step near an activation kink)", report.kink_steps);
        }
        all_pass &= report.passes(args.tolerance);
    }
    Ok(if all_pass { Outcome::Success } else { Outcome::Rejected })
}
