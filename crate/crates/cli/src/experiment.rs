//! Experiment grid and negative/positive ratio sweep.

use std::fmt::Write as _;

use quadfuse_core::classify::{self, checkpoint::Checkpoint, Metrics};
use quadfuse_core::embed::{EmbeddingProvider, Providers, Source};
use quadfuse_core::embed::store::VectorStore;
use quadfuse_core::fusion::{Fuser, Protocol, Strategy};
use quadfuse_core::pipeline::{
    evaluate_decision, featurize_dataset, fused_examples, single_source_examples, train_decision_fusion,
    LabeledFeatures,
};
use quadfuse_core::{synth, Dataset};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, Result};

/// Records from `data.path`, or generated from `[synth]` when no path is set.
pub fn load_records(cfg: &Config) -> Result<Dataset> {
    match &cfg.data.path {
        Some(path) => {
            Config::require(Some(path), "data.path")?;
            let ds = quadfuse_core::record::load_dataset(path)?;
            if ds.is_empty() {
                return Err(CliError::Data(format!("{}: no records", path.display())));
            }
            Ok(ds)
        }
        None => Ok(synth::generate(&cfg.synth_spec())?),
    }
}

/// Synthetic providers, with either side replaced by a file-backed store
/// when one is configured.
pub fn providers(cfg: &Config) -> Result<Providers> {
    let e = &cfg.embedding;
    let mut p = Providers::synthetic(e.text_dim, e.image_dim, cfg.seed)?;
    if let Some(dir) = &e.text_store {
        Config::require(Some(dir), "embedding.text_store")?;
        p.text = EmbeddingProvider::file_backed(VectorStore::open(dir)?, e.text_dim)?;
    }
    if let Some(dir) = &e.image_store {
        Config::require(Some(dir), "embedding.image_store")?;
        p.image = EmbeddingProvider::file_backed(VectorStore::open(dir)?, e.image_dim)?;
    }
    Ok(p)
}

pub struct Split {
    pub train: Vec<LabeledFeatures>,
    pub test: Vec<LabeledFeatures>,
}

pub fn featurize_split(cfg: &Config, ds: &Dataset, providers: &Providers) -> Result<Split> {
    let (train, test) = ds.split(cfg.train.train_fraction, cfg.seed)?;
    Ok(Split {
        train: featurize_dataset(&train, providers)?,
        test: featurize_dataset(&test, providers)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Feature,
    Decision,
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub name: String,
    pub kind: RowKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Records the cell could not use because of their presence mask.
    pub excluded: usize,
    pub metrics: Metrics,
}

#[derive(Clone, Copy, Debug)]
enum Cell {
    Feature(Protocol, Strategy),
    Decision,
    Single(Source),
}

fn empty_train(name: &str) -> CliError {
    CliError::Data(format!("{name}: no usable training records"))
}

fn feature_cell(cfg: &Config, split: &Split, dims: (usize, usize), protocol: Protocol, strategy: Strategy) -> Result<ResultRow> {
    let name = format!("{protocol}/{strategy}");
    let fuser = Fuser::new(cfg.fusion_config(strategy, protocol), dims.0, dims.1)?;
    let (train, ex_train) = fused_examples(&fuser, &split.train)?;
    let (test, ex_test) = fused_examples(&fuser, &split.test)?;
    if train.is_empty() {
        return Err(empty_train(&name));
    }
    let tc = cfg.train_config();
    let report = classify::train(&train, &tc)?;
    Ok(ResultRow {
        metrics: classify::evaluate(&report.params, &test, tc.threshold)?,
        name,
        kind: RowKind::Feature,
        protocol: Some(protocol),
        strategy: Some(strategy),
        source: None,
        train_examples: train.len(),
        test_examples: test.len(),
        excluded: ex_train + ex_test,
    })
}

fn run_cell(cfg: &Config, split: &Split, dims: (usize, usize), cell: Cell) -> Result<ResultRow> {
    let tc = cfg.train_config();
    match cell {
        Cell::Feature(p, s) => feature_cell(cfg, split, dims, p, s),
        Cell::Decision => {
            let model = train_decision_fusion(&split.train, &tc, cfg.experiment.decision_weights)?;
            Ok(ResultRow {
                name: "decision".into(),
                kind: RowKind::Decision,
                protocol: None,
                strategy: None,
                source: None,
                train_examples: split.train.len(),
                test_examples: split.test.len(),
                excluded: 0,
                metrics: evaluate_decision(&model, &split.test, tc.threshold)?,
            })
        }
        Cell::Single(source) => {
            let name = format!("single/{}", source.short_name());
            let train = single_source_examples(source, &split.train);
            let test = single_source_examples(source, &split.test);
            if train.is_empty() {
                return Err(empty_train(&name));
            }
            let report = classify::train(&train, &tc)?;
            Ok(ResultRow {
                metrics: classify::evaluate(&report.params, &test, tc.threshold)?,
                name,
                kind: RowKind::Single,
                protocol: None,
                strategy: None,
                source: Some(source.short_name().to_string()),
                train_examples: train.len(),
                test_examples: test.len(),
                excluded: split.train.len() + split.test.len() - train.len() - test.len(),
            })
        }
    }
}

/// One row per (protocol, strategy) cell, then decision-level fusion and
/// single-source rows when enabled. Cells run in parallel; each is
/// single-threaded and seeded, so the table is identical across runs.
pub fn run_experiment(cfg: &Config, ds: &Dataset) -> Result<Vec<ResultRow>> {
    let providers = providers(cfg)?;
    let split = featurize_split(cfg, ds, &providers)?;
    let dims = (providers.text_dim(), providers.image_dim());
    let x = &cfg.experiment;
    let mut cells: Vec<Cell> = x
        .protocols
        .iter()
        .flat_map(|&p| x.strategies.iter().map(move |&s| Cell::Feature(p, s)))
        .collect();
    if x.decision {
        cells.push(Cell::Decision);
    }
    if x.single_source {
        cells.extend(Source::ALL.into_iter().map(Cell::Single));
    }
    if cells.is_empty() {
        return Err(CliError::Config("experiment has no cells".into()));
    }
    let rows = cells
        .par_iter()
        .map(|&c| run_cell(cfg, &split, dims, c))
        .collect::<Result<Vec<_>>>()?;
    for r in rows.iter().filter(|r| r.excluded > 0) {
        eprintln!("{}: excluded {} records with unusable presence masks", r.name, r.excluded);
    }
    Ok(rows)
}

pub fn render_rows(rows: &[ResultRow]) -> String {
    let named: Vec<(String, Metrics)> = rows.iter().map(|r| (r.name.clone(), r.metrics)).collect();
    classify::metrics::render_table(&named)
}

pub fn rows_tsv(rows: &[ResultRow]) -> String {
    let mut out = String::from("name\tkind\ttrain\ttest\texcluded\taccuracy\tprecision\trecall\tf1\n");
    for r in rows {
        let m = &r.metrics;
        let kind = serde_json::to_value(r.kind).unwrap();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.name,
            kind.as_str().unwrap(),
            r.train_examples,
            r.test_examples,
            r.excluded,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Negatives per positive.
    pub ratio: f64,
    pub positives: usize,
    pub negatives: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub metrics: Metrics,
}

/// For each N/P ratio keeps every positive and a seeded subsample of
/// negatives, then splits, trains and evaluates the configured fusion. The
/// negative subsamples are nested: a larger ratio sees a superset.
pub fn ratio_sweep(cfg: &Config, ds: &Dataset) -> Result<Vec<CurvePoint>> {
    let mut ratios = Vec::new();
    if cfg.ratio_sweep.include_balanced {
        ratios.push(1.0);
    }
    for &r in &cfg.ratio_sweep.ratios {
        if !ratios.contains(&r) {
            ratios.push(r);
        }
    }
    if ratios.is_empty() {
        return Err(CliError::Config("ratio_sweep.ratios is empty".into()));
    }
    let positives: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].label.is_positive()).collect();
    let mut negatives: Vec<usize> = (0..ds.len()).filter(|&i| !ds.records[i].label.is_positive()).collect();
    if positives.is_empty() {
        return Err(CliError::Data("ratio sweep needs at least one positive record".into()));
    }
    let need = |r: f64| (r * positives.len() as f64).round() as usize;
    if let Some(&r) = ratios.iter().find(|&&r| need(r) > negatives.len()) {
        return Err(CliError::Data(format!(
            "insufficient negatives: ratio {r} needs {} but only {} exist",
            need(r),
            negatives.len()
        )));
    }
    negatives.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let providers = providers(cfg)?;
    let dims = (providers.text_dim(), providers.image_dim());
    ratios
        .par_iter()
        .map(|&ratio| {
            let mut chosen: Vec<usize> = positives.iter().copied().chain(negatives[..need(ratio)].iter().copied()).collect();
            chosen.sort_unstable();
            let sub = Dataset {
                records: chosen.iter().map(|&i| ds.records[i].clone()).collect(),
                split_seed: ds.split_seed,
            };
            let split = featurize_split(cfg, &sub, &providers)?;
            let row = feature_cell(cfg, &split, dims, cfg.fusion.protocol, cfg.fusion.strategy)?;
            Ok(CurvePoint {
                ratio,
                positives: positives.len(),
                negatives: need(ratio),
                train_examples: row.train_examples,
                test_examples: row.test_examples,
                metrics: row.metrics,
            })
        })
        .collect()
}

pub fn curve_tsv(points: &[CurvePoint]) -> String {
    let mut out = String::from("ratio\tpositives\tnegatives\taccuracy\tprecision\trecall\tf1\n");
    for p in points {
        let m = &p.metrics;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            p.ratio, p.positives, p.negatives, m.accuracy, m.precision, m.recall, m.f1
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub strategy: Strategy,
    pub protocol: Protocol,
    pub input_dim: usize,
    pub train_examples: usize,
    pub excluded: usize,
    pub epoch_losses: Vec<f64>,
}

/// Trains the configured fusion on the training split.
pub fn train_model(cfg: &Config, ds: &Dataset) -> Result<(Checkpoint, TrainSummary)> {
    let providers = providers(cfg)?;
    let (train, _) = ds.split(cfg.train.train_fraction, cfg.seed)?;
    let items = featurize_dataset(&train, &providers)?;
    let (s, p) = (cfg.fusion.strategy, cfg.fusion.protocol);
    let fuser = Fuser::new(cfg.fusion_config(s, p), providers.text_dim(), providers.image_dim())?;
    let (examples, excluded) = fused_examples(&fuser, &items)?;
    if examples.is_empty() {
        return Err(empty_train(&format!("{p}/{s}")));
    }
    if excluded > 0 {
        eprintln!("excluded {excluded} training records with unusable presence masks");
    }
    let report = classify::train(&examples, &cfg.train_config())?;
    let summary = TrainSummary {
        strategy: s,
        protocol: p,
        input_dim: fuser.input_dim(),
        train_examples: examples.len(),
        excluded,
        epoch_losses: report.epoch_losses,
    };
    let ckpt = Checkpoint {
        strategy: Some(s),
        protocol: Some(p),
        seed: cfg.seed,
        params: report.params,
    };
    Ok((ckpt, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub test_examples: usize,
    pub excluded: usize,
    pub metrics: Metrics,
}

/// Scores a checkpoint on the test split of the same (data, seed).
pub fn evaluate_model(cfg: &Config, ds: &Dataset, ckpt: &Checkpoint) -> Result<EvalSummary> {
    let (s, p) = (cfg.fusion.strategy, cfg.fusion.protocol);
    if ckpt.strategy != Some(s) || ckpt.protocol != Some(p) {
        return Err(CliError::Config(format!(
            "checkpoint was trained with {:?}/{:?} but the config asks for {p}/{s}",
            ckpt.protocol, ckpt.strategy
        )));
    }
    let providers = providers(cfg)?;
    let (_, test) = ds.split(cfg.train.train_fraction, cfg.seed)?;
    let items = featurize_dataset(&test, &providers)?;
    let fuser = Fuser::new(cfg.fusion_config(s, p), providers.text_dim(), providers.image_dim())?;
    let (examples, excluded) = fused_examples(&fuser, &items)?;
    Ok(EvalSummary {
        test_examples: examples.len(),
        excluded,
        metrics: classify::evaluate(&ckpt.params, &examples, cfg.train.threshold)?,
    })
}
