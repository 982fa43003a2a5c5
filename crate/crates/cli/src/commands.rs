//! One function per subcommand. Each writes its artifacts under the output
//! directory next to `resolved_config.toml` and returns a JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use quadfuse_annotate::{parse_tokens, AppState, Corpus, Store};
use quadfuse_community::{
    betweenness, build_graph, clustering_coefficient, detect_communities, sunburst_export, Grouping, Lexicon,
};
use quadfuse_core::classify::checkpoint::Checkpoint;
use quadfuse_core::embed::{Providers, VectorStore};
use quadfuse_core::record::{save_dataset, validate_mask};
use quadfuse_crawl::{generate_world, load_world, parse_scores, run_crawl, save_world, CrawlIndex, CrawlState, Detector, SyntheticWorld};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, InputKind};
use crate::error::{CliError, Result};
use crate::experiment::{self, load_records};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic quadruple dataset (dataset.jsonl).
    GenSynth,
    /// Write synthetic embeddings for every text and image of the dataset
    /// into file-backed vector stores (text_store/, image_store/).
    Embed,
    /// Train the configured fusion on the training split (model.qfck).
    Train,
    /// Evaluate a checkpoint on the test split (metrics.json).
    Eval,
    /// Run the protocol x strategy grid plus decision-level fusion (results.*).
    Experiment,
    /// Sweep negative/positive ratios (curve.*).
    RatioSweep,
    /// Simulate hashtag-driven crawling over a synthetic world (crawl_report.json).
    CrawlSim,
    /// Hashtag co-occurrence graph, centrality and communities (communities.json).
    Community,
    /// Two-level hashtag breakdown for sunburst charts (sunburst.json).
    Sunburst,
    /// Serve the annotation HTTP API until interrupted.
    ServeAnnotation,
    /// Convert an annotation log into quadruple records (dataset.jsonl).
    ExportDataset,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value).expect("outputs serialize") + "\n")
}

/// Creates the output directory and echoes the resolved configuration.
pub fn prepare_out(cfg: &Config) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    write(&cfg.out.join("resolved_config.toml"), cfg.to_toml())
}

pub fn run(command: Command, cfg: &Config) -> Result<Value> {
    prepare_out(cfg)?;
    match command {
        Command::GenSynth => gen_synth(cfg),
        Command::Embed => embed(cfg),
        Command::Train => train(cfg),
        Command::Eval => eval(cfg),
        Command::Experiment => experiment(cfg),
        Command::RatioSweep => ratio_sweep(cfg),
        Command::CrawlSim => crawl_sim(cfg),
        Command::Community => community(cfg),
        Command::Sunburst => sunburst(cfg),
        Command::ServeAnnotation => serve_annotation(cfg),
        Command::ExportDataset => export_dataset(cfg),
    }
}

fn gen_synth(cfg: &Config) -> Result<Value> {
    let ds = quadfuse_core::synth::generate(&cfg.synth_spec())?;
    let path = cfg.out.join("dataset.jsonl");
    save_dataset(&ds, &path)?;
    let mut masks: BTreeMap<String, usize> = BTreeMap::new();
    for r in &ds.records {
        *masks.entry(r.mask().to_string()).or_insert(0) += 1;
    }
    Ok(json!({
        "path": path,
        "records": ds.len(),
        "positives": ds.positives(),
        "fusible": ds.records.iter().filter(|r| validate_mask(r.mask())).count(),
        "masks": masks,
    }))
}

fn embed(cfg: &Config) -> Result<Value> {
    let ds = load_records(cfg)?;
    let e = &cfg.embedding;
    let providers = Providers::synthetic(e.text_dim, e.image_dim, cfg.seed)?;
    let mut text = VectorStore::create(cfg.out.join("text_store"))?;
    let mut image = VectorStore::create(cfg.out.join("image_store"))?;
    use quadfuse_core::embed::Source;
    for r in &ds.records {
        for (t, source) in [(&r.pc_text, Source::PostComment), (&r.hb_text, Source::HomepageBio)] {
            if let Some(t) = t {
                if !text.contains(t) {
                    text.insert(t, providers.text.embed_text(t, source)?.values())?;
                }
            }
        }
        let images = r.pi_ref.iter().map(|i| (i, Source::PostImage)).chain(r.hi_refs.iter().map(|i| (i, Source::HomepageImage)));
        for (i, source) in images {
            if !image.contains(i) {
                image.insert(i, providers.image.embed_image(i, source)?.values())?;
            }
        }
    }
    Ok(json!({
        "text_store": text.dir(),
        "text_vectors": text.len(),
        "image_store": image.dir(),
        "image_vectors": image.len(),
    }))
}

fn model_path(cfg: &Config) -> PathBuf {
    cfg.eval.model.clone().unwrap_or_else(|| cfg.out.join("model.qfck"))
}

fn train(cfg: &Config) -> Result<Value> {
    let ds = load_records(cfg)?;
    let (ckpt, summary) = experiment::train_model(cfg, &ds)?;
    let path = cfg.out.join("model.qfck");
    ckpt.save(&path)?;
    write_json(&cfg.out.join("train_summary.json"), &summary)?;
    Ok(json!({
        "model": path,
        "train_examples": summary.train_examples,
        "excluded": summary.excluded,
        "final_loss": summary.epoch_losses.last(),
    }))
}

fn eval(cfg: &Config) -> Result<Value> {
    let path = model_path(cfg);
    Config::require(Some(&path), "eval.model")?;
    let ckpt = Checkpoint::load(&path)?;
    let ds = load_records(cfg)?;
    let summary = experiment::evaluate_model(cfg, &ds, &ckpt)?;
    write_json(&cfg.out.join("metrics.json"), &summary)?;
    Ok(serde_json::to_value(summary).unwrap())
}

fn experiment(cfg: &Config) -> Result<Value> {
    let ds = load_records(cfg)?;
    let rows = experiment::run_experiment(cfg, &ds)?;
    write_json(&cfg.out.join("results.json"), &rows)?;
    write(&cfg.out.join("results.tsv"), experiment::rows_tsv(&rows))?;
    let table = experiment::render_rows(&rows);
    write(&cfg.out.join("results.txt"), &table)?;
    eprint!("{table}");
    Ok(json!({ "rows": rows.len(), "results": cfg.out.join("results.json") }))
}

fn ratio_sweep(cfg: &Config) -> Result<Value> {
    let ds = load_records(cfg)?;
    let points = experiment::ratio_sweep(cfg, &ds)?;
    write_json(&cfg.out.join("curve.json"), &points)?;
    write(&cfg.out.join("curve.tsv"), experiment::curve_tsv(&points))?;
    Ok(json!({
        "points": points.len(),
        "accuracy": points.iter().map(|p| (p.ratio.to_string(), p.metrics.accuracy)).collect::<BTreeMap<_, _>>(),
    }))
}

/// The world named by `path`, or one generated from `[crawl.world_spec]`
/// and saved as `world.jsonl`.
fn world(cfg: &Config, path: Option<&Path>, key: &str) -> Result<SyntheticWorld> {
    match path {
        Some(p) => {
            Config::require(Some(p), key)?;
            Ok(load_world(p)?)
        }
        None => {
            let w = generate_world(&cfg.crawl.world_spec)?;
            save_world(&w, cfg.out.join("world.jsonl"))?;
            Ok(w)
        }
    }
}

fn crawl_sim(cfg: &Config) -> Result<Value> {
    let c = &cfg.crawl;
    let world = world(cfg, c.world.as_deref(), "crawl.world")?;
    let mut index = CrawlIndex::new(&world);
    if let Some(path) = &c.detector_scores {
        Config::require(Some(path), "crawl.detector_scores")?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        index = index.with_detector(Detector::Table(parse_scores(&text)?));
    }
    let mut state = CrawlState::seed_hashtags(&c.seeds)?.with_threshold(c.account_threshold);
    let report = run_crawl(&mut state, &index, c.detector_threshold);
    write(&cfg.out.join("trajectory.jsonl"), report.trajectory_jsonl())?;
    let accounts: String = state.collected_accounts.iter().map(|a| format!("{a}\n")).collect();
    write(&cfg.out.join("accounts.txt"), accounts)?;
    let summary = json!({
        "steps": report.steps,
        "collected_posts": report.collected_posts,
        "collected_accounts": report.collected_accounts,
        "dealers_collected": report.dealers_collected,
        "dealer_recall": report.dealer_recall,
        "hashtag_coverage": report.hashtag_coverage,
        "exhausted": report.exhausted,
    });
    write_json(&cfg.out.join("crawl_report.json"), &summary)?;
    Ok(summary)
}

/// Hashtag sets, one per post, from a crawl world or a record file.
fn hashtag_posts(cfg: &Config) -> Result<Vec<Vec<String>>> {
    let input = cfg.community.input.as_deref();
    match cfg.community.input_kind {
        InputKind::World => {
            let path = input.or(cfg.crawl.world.as_deref());
            let w = world(cfg, path, "community.input")?;
            Ok(w.posts.into_iter().map(|p| p.hashtags.into_iter().collect()).collect())
        }
        InputKind::Dataset => {
            let ds = match input {
                Some(p) => {
                    Config::require(Some(p), "community.input")?;
                    quadfuse_core::record::load_dataset(p)?
                }
                None => load_records(cfg)?,
            };
            Ok(ds.records.into_iter().map(|r| r.hashtags.into_iter().collect()).collect())
        }
    }
}

fn community(cfg: &Config) -> Result<Value> {
    let posts = hashtag_posts(cfg)?;
    let g = build_graph(&posts);
    if g.node_count() == 0 {
        return Err(CliError::Data("input has no hashtags".into()));
    }
    let partition = detect_communities(&g, cfg.community.max_nodes_per_cluster);
    let bc = betweenness(&g);
    let cc = clustering_coefficient(&g);
    let mut tsv = String::from("tag\tfrequency\tdegree\tbetweenness\tclustering\n");
    for (v, name) in g.names().iter().enumerate() {
        tsv.push_str(&format!(
            "{name}\t{}\t{}\t{:.9}\t{:.9}\n",
            g.frequency(v),
            g.degree(v),
            bc[name],
            cc[name]
        ));
    }
    write(&cfg.out.join("centrality.tsv"), tsv)?;
    write(&cfg.out.join("edges.tsv"), g.edge_list())?;
    let doc = json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "modularity": partition.modularity,
        "reported": partition.reported(),
        "clusters": partition.clusters,
    });
    write_json(&cfg.out.join("communities.json"), &doc)?;
    Ok(json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "communities": partition.clusters.len(),
        "modularity": partition.modularity,
    }))
}

fn sunburst(cfg: &Config) -> Result<Value> {
    let s = &cfg.sunburst;
    let lexicon = match (&s.lexicon, s.grouping) {
        (Some(path), _) => {
            Config::require(Some(path), "sunburst.lexicon")?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Lexicon::parse(&text)?
        }
        (None, Grouping::DrugType) => Lexicon::drug_taxonomy(),
        (None, Grouping::Geography) => Lexicon::places(),
    };
    let posts = hashtag_posts(cfg)?;
    let doc = sunburst_export(&posts, s.grouping, &lexicon, s.seed_tag.as_deref())?;
    write_json(&cfg.out.join("sunburst.json"), &doc)?;
    Ok(json!({
        "root": doc.name,
        "groups": doc.children.iter().map(|c| (c.name.clone(), c.value)).collect::<BTreeMap<_, _>>(),
    }))
}

fn annotation_store(cfg: &Config) -> Result<Store> {
    let a = &cfg.annotation;
    let corpus_path = a
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Config("annotation.corpus is required".into()))?;
    Config::require(Some(corpus_path), "annotation.corpus")?;
    let text = fs::read_to_string(corpus_path).map_err(|e| CliError::io(corpus_path, e))?;
    let corpus = Corpus::parse(&text)?;
    let log = a.log.clone().unwrap_or_else(|| cfg.out.join("annotation-log.jsonl"));
    Ok(Store::open(corpus, log)?)
}

fn serve_annotation(cfg: &Config) -> Result<Value> {
    let a = &cfg.annotation;
    let addr: SocketAddr = a
        .addr
        .parse()
        .map_err(|e| CliError::Config(format!("annotation.addr {:?}: {e}", a.addr)))?;
    let tokens_path = a
        .tokens
        .as_deref()
        .ok_or_else(|| CliError::Config("annotation.tokens is required".into()))?;
    Config::require(Some(tokens_path), "annotation.tokens")?;
    let text = fs::read_to_string(tokens_path).map_err(|e| CliError::io(tokens_path, e))?;
    let tokens = parse_tokens(&text).map_err(|e| CliError::Config(format!("annotation.tokens: {e}")))?;
    if tokens.is_empty() {
        return Err(CliError::Config("annotation.tokens lists no tokens".into()));
    }
    let store = annotation_store(cfg)?;
    let export_dir = a.export_dir.clone().unwrap_or_else(|| cfg.out.join("exports"));
    let state = AppState::new(store, tokens, export_dir);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    eprintln!("serving annotation API on http://{addr}/api/v1");
    runtime
        .block_on(quadfuse_annotate::serve(state, addr))
        .map_err(|e| CliError::Other(format!("{addr}: {e}")))?;
    Ok(json!({ "stopped": true }))
}

fn export_dataset(cfg: &Config) -> Result<Value> {
    let store = annotation_store(cfg)?;
    let ds = store.export();
    let path = cfg.out.join("dataset.jsonl");
    save_dataset(&ds, &path)?;
    let stats = store.stats();
    Ok(json!({
        "path": path,
        "records": ds.len(),
        "positives": ds.positives(),
        "negatives": ds.len() - ds.positives(),
        "tasks_done": stats.done,
    }))
}
