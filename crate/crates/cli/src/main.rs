use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mrefg::checkpoint::Checkpoint;
use mrefg::config::RunConfig;
use mrefg::corpus::{build_relation_vocab, load_corpus, split_corpus, split_with_eval, Sample};
use mrefg::evaluation::{emit_curves, Metrics};
use mrefg::features::{load_embeddings, EmbeddingTable};
use mrefg::refgraph::{parse_graph_list, GraphConfig, GraphKind, GraphSet};
use mrefg::synthgen::{generate, SynthSpec};
use mrefg::trainer::{evaluate, run_semi_supervised, TrainHistory};
use mrefg::{Error, Result};

const DATA_DIR_VAR: &str = "MREFG_DATA_DIR";

#[derive(Parser)]
#[command(name = "mrefg", version, about = "Semi-supervised relation extraction with multiple reference graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the lexical reference graphs (and the semantic graph when
    /// sentence embeddings are available) and write them as an edge list.
    BuildGraphs(BuildGraphsArgs),
    /// Run the training loop and write the run log, checkpoint and curves.
    Train(TrainArgs),
    /// Score a checkpoint's prediction module on a test corpus.
    Eval(EvalArgs),
    /// Turn a run log into curve tables, plots and a per-sample augmentation trace.
    TraceAugmentation(TraceArgs),
    /// Write a synthetic corpus and its ground-truth edge list.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BuildGraphsArgs {
    /// Samples with a relation become labeled nodes, the others unlabeled.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    delta: f64,
    /// Degree cap of the semantic graph; 0 disables it.
    #[arg(long, default_value_t = 50)]
    max_degree: usize,
    #[arg(long, default_value = "entity,verb,semantics")]
    graphs: String,
    /// Sentence embeddings from a trained encoder.
    #[arg(long, conflicts_with = "embeddings")]
    checkpoint: Option<PathBuf>,
    /// Word vectors; sentences are embedded as their mean token vector.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, requires = "embeddings")]
    embedding_dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    graphs: Option<String>,
    #[arg(long)]
    labeled_frac: Option<f64>,
    #[arg(long)]
    unlabeled_frac: Option<f64>,
    #[arg(long)]
    select_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Print the metrics as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    run_log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    relations: usize,
    #[arg(long, default_value_t = 100)]
    samples_per_relation: usize,
    #[arg(long, default_value_t = 8)]
    verbs: usize,
    #[arg(long, default_value_t = 16)]
    entities: usize,
    #[arg(long, default_value_t = 0.4)]
    adjacency: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Relative corpus and embedding paths are resolved against `MREFG_DATA_DIR` when it is set.
fn data_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

fn default_corpus() -> Result<PathBuf> {
    std::env::var_os(DATA_DIR_VAR)
        .map(|root| Path::new(&root).join("corpus.jsonl"))
        .ok_or_else(|| Error::Argument(format!("no corpus given and {DATA_DIR_VAR} is not set")))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn mean_vectors(samples: &[&Sample], table: &EmbeddingTable) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let mut v = vec![0.0; table.dim()];
            for t in &s.tokens {
                let w = table.get(&t.to_lowercase()).or_else(|| table.get(t));
                if let Some(w) = w {
                    v.iter_mut().zip(w).for_each(|(a, b)| *a += b);
                }
            }
            let n = s.tokens.len() as f64;
            v.iter_mut().for_each(|a| *a /= n);
            v
        })
        .collect()
}

fn build_graphs(a: BuildGraphsArgs) -> Result<()> {
    let corpus = a.corpus.as_deref().map_or_else(default_corpus, |p| Ok(data_path(p)))?;
    let samples = load_corpus(&corpus)?;
    let (labeled, unlabeled): (Vec<Sample>, Vec<Sample>) =
        samples.into_iter().partition(|s| s.relation.is_some());
    let cfg = GraphConfig {
        delta: a.delta,
        max_degree: (a.max_degree > 0).then_some(a.max_degree),
        ..GraphConfig::default()
    };
    let kinds = parse_graph_list(&a.graphs)?;
    let mut graphs = GraphSet::new(&labeled, &unlabeled, &cfg)?;
    if kinds.contains(&GraphKind::Semantic) {
        let by_id: std::collections::HashMap<&str, &Sample> =
            labeled.iter().chain(&unlabeled).map(|s| (s.id.as_str(), s)).collect();
        let ordered: Vec<&Sample> = graphs.nodes.ids().iter().map(|id| by_id[id.as_str()]).collect();
        let embeddings = if let Some(ck) = &a.checkpoint {
            let ck = Checkpoint::load(ck)?;
            Some(
                ordered
                    .iter()
                    .map(|s| ck.encoder.encode(&ck.encoder.prepare(s)).to_vec())
                    .collect(),
            )
        } else if let Some(e) = &a.embeddings {
            let dim = a.embedding_dim.unwrap_or(RunConfig::default().train.encoder.word_dim);
            Some(mean_vectors(&ordered, &load_embeddings(&data_path(e), dim)?))
        } else {
            log::warn!("no --checkpoint or --embeddings given; the semantic graph is left empty");
            None
        };
        if let Some(e) = embeddings {
            graphs = graphs.with_semantic(&e);
        }
    }
    create_dir(&a.out)?;
    write_file(&a.out.join("edges.tsv"), graphs.edge_list(&kinds))?;
    let nodes: String = graphs
        .nodes
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| format!("{id}\t{}\n", if graphs.nodes.is_labeled(i) { "labeled" } else { "unlabeled" }))
        .collect();
    write_file(&a.out.join("nodes.tsv"), nodes)?;
    for k in &kinds {
        println!("{k}\t{} edges", graphs.graph(*k).num_edges());
    }
    Ok(())
}

fn print_metrics(label: &str, m: &Metrics) {
    println!(
        "{label}: P {:.4}  R {:.4}  F1 {:.4}",
        m.precision, m.recall, m.f1
    );
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags: [(&str, Option<String>); 9] = [
        ("corpus", a.corpus.map(|p| p.display().to_string())),
        ("graphs", a.graphs),
        ("labeled_frac", a.labeled_frac.map(|v| v.to_string())),
        ("unlabeled_frac", a.unlabeled_frac.map(|v| v.to_string())),
        ("select_frac", a.select_frac.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("mode", a.mode),
        ("max_iters", a.max_iters.map(|v| v.to_string())),
        ("out", a.out.map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;

    let corpus = cfg.corpus.as_deref().map_or_else(default_corpus, |p| Ok(data_path(p)))?;
    let samples = load_corpus(&corpus)?;
    let seed = cfg.train.seed;
    let split = match (&cfg.dev, &cfg.test) {
        (Some(d), Some(t)) => {
            let dev = load_corpus(&data_path(d))?;
            let test = load_corpus(&data_path(t))?;
            split_with_eval(&samples, dev, test, cfg.labeled_frac, cfg.unlabeled_frac, seed)?
        }
        (None, None) => split_corpus(&samples, cfg.labeled_frac, cfg.unlabeled_frac, seed)?,
        _ => return Err(Error::Argument("dev and test files must be given together".into())),
    };
    let all: Vec<Sample> = samples
        .iter()
        .chain(&split.dev)
        .chain(&split.test)
        .cloned()
        .collect();
    let vocab = build_relation_vocab(&all);
    let pretrained = cfg
        .embeddings
        .as_deref()
        .map(|p| load_embeddings(&data_path(p), cfg.train.encoder.word_dim))
        .transpose()?;
    log::info!(
        "{} labeled, {} unlabeled, {} dev, {} test; config {}",
        split.labeled.len(),
        split.unlabeled.len(),
        split.dev.len(),
        split.test.len(),
        &cfg.hash()[..12]
    );

    let outcome = run_semi_supervised(&split, &vocab, pretrained.as_ref(), &cfg.train)?;

    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.hash()[..12]));
    create_dir(&out)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    write_file(&out.join("run_log.jsonl"), outcome.history.to_jsonl())?;
    split.write_manifest(&out.join("split"))?;
    Checkpoint::new(
        &cfg,
        vocab.clone(),
        outcome.best_iteration,
        outcome.encoder.clone(),
        outcome.mgat.clone(),
    )
    .save(&out.join("checkpoint.json"))?;
    emit_curves(&outcome.history, &out.join("curves"))?;

    let first = &outcome.history.iterations[0];
    if let Some(m) = &first.test {
        print_metrics("supervised test", m);
    }
    if let Some(m) = &outcome.best().test {
        print_metrics(&format!("best-dev test (iteration {})", outcome.best_iteration), m);
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let test = load_corpus(&data_path(&a.test))?;
    let m = evaluate(&ck.encoder, &test, &ck.relations)?
        .ok_or_else(|| Error::Argument("test corpus is empty".into()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    } else {
        print_metrics("test", &m);
        for (label, c) in &m.per_class {
            println!("  {label}\ttp {}\tfp {}\tfn {}", c.tp, c.fp, c.fn_);
        }
    }
    Ok(())
}

fn trace(a: TraceArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.run_log).map_err(|e| Error::io(&a.run_log, e))?;
    let history = TrainHistory::from_jsonl(&text)?;
    emit_curves(&history, &a.out)?;
    let mut trace = String::from("iteration\tid\tlabel\tscore\n");
    for r in &history.iterations {
        for s in &r.selected {
            trace.push_str(&format!("{}\t{}\t{}\t{}\n", r.iteration, s.id, s.label, s.score));
        }
    }
    write_file(&a.out.join("augmentation.tsv"), trace)?;
    for r in &history.iterations {
        println!(
            "iteration {}: labeled {}, selected {}, augmentation precision {}",
            r.iteration,
            r.labeled,
            r.selected.len(),
            r.augmentation_precision.map_or("NA".into(), |p| format!("{p:.4}"))
        );
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec::with_sizes(
        a.relations,
        a.samples_per_relation,
        a.verbs,
        a.entities,
        a.adjacency,
        a.noise,
        a.seed,
    );
    let corpus = generate(&spec)?;
    corpus.write(&a.out)?;
    println!("{} samples written to {}", corpus.samples.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildGraphs(a) => build_graphs(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::TraceAugmentation(a) => trace(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
