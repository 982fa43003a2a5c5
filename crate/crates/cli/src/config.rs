//! TOML run configuration. Every section and key is optional; unknown keys
//! are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use quadfuse_core::classify::{LossKind, TrainConfig};
use quadfuse_core::fusion::{FbcSpec, FusionConfig, Protocol, Strategy};
use quadfuse_core::synth::{MissingRates, SynthSpec};
use quadfuse_crawl::{default_seeds, WorldSpec, DEFAULT_ACCOUNT_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Every key with its default, printed by `--help`.
pub const CONFIG_HELP: &str = r#"Configuration file (TOML). All keys are optional; defaults shown.

seed = 0                      # drives every random choice (data, split, init, sketches, worlds)
out = "out"                   # output directory

[data]
path = "records.jsonl"        # quadruple records; when absent, [synth] generates them

[synth]
records = 2000
positive_fraction = 0.5
signal = 0.5                  # probability a token is drawn from the class vocabulary
tokens_per_text = 8
only_fusible = true
positive_missing = [0.033, 0.0, 0.5598, 0.5715]   # pc, pi, hb, hi
negative_missing = [0.0, 0.0, 0.169, 0.2239]

[embedding]
text_dim = 768
image_dim = 2048
text_store = "dir"            # optional file-backed vector stores written by `embed`
image_store = "dir"

[fusion]
strategy = "concat"           # concat | bilinear | compact_bilinear | fbc
protocol = "quadruple"        # post_level | homepage_level | text_source | image_source | quadruple
sketch_dim = 1024
bilinear_normalize = true
fbc_atoms = 64
fbc_rank = 2
fbc_lambda = 0.001

[train]
lr = 0.001
beta1 = 0.9
beta2 = 0.999
epsilon = 1e-8
batch_size = 10
epochs = 50
threshold = 0.5
loss = "binary_cross_entropy"  # or positive_only
train_fraction = 0.7

[eval]
model = "<out>/model.qfck"

[experiment]
protocols = ["post_level", "homepage_level", "quadruple"]
strategies = ["concat"]
decision = true               # add the decision-level fusion row
decision_weights = [0.25, 0.25, 0.25, 0.25]   # pc, pi, hb, hi
single_source = false         # add one row per single source

[ratio_sweep]
ratios = [2.0, 4.0, 6.0, 8.0] # negatives per positive, each >= 1
include_balanced = false      # also run ratio 1

[crawl]
world = "world.jsonl"         # when absent a world is generated from [crawl.world_spec]
seeds = ["plug", "xanax", ...]
account_threshold = 50
detector_threshold = 0.5
detector_scores = "scores.tsv" # optional post_id<TAB>score table

[crawl.world_spec]
posts = 1000
users = 500
dealer_fraction = 0.1
clusters = 3
disconnected_clusters = 0

[community]
input = "file"                # crawl world or quadruple records; defaults to the [crawl] world
input_kind = "world"          # world | dataset
max_nodes_per_cluster = 10

[sunburst]
grouping = "drug_type"        # drug_type | geography
seed_tag = "xanax"            # required for geography
lexicon = "file.tsv"          # tag<TAB>group; defaults to the shipped table

[annotation]
corpus = "corpus.jsonl"
log = "<out>/annotation-log.jsonl"
tokens = "tokens.tsv"         # token<TAB>annotator
export_dir = "<out>/exports"
addr = "127.0.0.1:8080"
"#;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    pub synth: SynthSection,
    pub embedding: EmbeddingSection,
    pub fusion: FusionSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub experiment: ExperimentSection,
    pub ratio_sweep: RatioSweepSection,
    pub crawl: CrawlSection,
    pub community: CommunitySection,
    pub sunburst: SunburstSection,
    pub annotation: AnnotationSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub records: usize,
    pub positive_fraction: f64,
    pub signal: f64,
    pub tokens_per_text: usize,
    pub only_fusible: bool,
    pub positive_missing: [f64; 4],
    pub negative_missing: [f64; 4],
}

fn rates(r: MissingRates) -> [f64; 4] {
    [r.pc, r.pi, r.hb, r.hi]
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthSpec::default();
        SynthSection {
            records: s.records,
            positive_fraction: s.positive_fraction,
            signal: s.signal,
            tokens_per_text: s.tokens_per_text,
            only_fusible: s.only_fusible,
            positive_missing: rates(s.positive_missing),
            negative_missing: rates(s.negative_missing),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub text_dim: usize,
    pub image_dim: usize,
    pub text_store: Option<PathBuf>,
    pub image_store: Option<PathBuf>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            text_dim: 768,
            image_dim: 2048,
            text_store: None,
            image_store: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub strategy: Strategy,
    pub protocol: Protocol,
    pub sketch_dim: usize,
    pub bilinear_normalize: bool,
    pub fbc_atoms: usize,
    pub fbc_rank: usize,
    pub fbc_lambda: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        FusionSection {
            strategy: f.strategy,
            protocol: f.protocol,
            sketch_dim: f.sketch_dim,
            bilinear_normalize: f.bilinear_normalize,
            fbc_atoms: f.fbc.atoms,
            fbc_rank: f.fbc.rank,
            fbc_lambda: f.fbc.lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub threshold: f64,
    pub loss: LossKind,
    pub train_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            threshold: t.threshold,
            loss: t.loss,
            train_fraction: 0.7,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub model: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub protocols: Vec<Protocol>,
    pub strategies: Vec<Strategy>,
    pub decision: bool,
    pub decision_weights: [f64; 4],
    pub single_source: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            protocols: vec![Protocol::PostLevel, Protocol::HomepageLevel, Protocol::Quadruple],
            strategies: vec![Strategy::Concat],
            decision: true,
            decision_weights: [0.25; 4],
            single_source: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSweepSection {
    pub ratios: Vec<f64>,
    pub include_balanced: bool,
}

impl Default for RatioSweepSection {
    fn default() -> Self {
        RatioSweepSection {
            ratios: vec![2.0, 4.0, 6.0, 8.0],
            include_balanced: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlSection {
    pub world: Option<PathBuf>,
    pub world_spec: WorldSpec,
    pub seeds: Vec<String>,
    pub account_threshold: usize,
    pub detector_threshold: f64,
    pub detector_scores: Option<PathBuf>,
}

impl Default for CrawlSection {
    fn default() -> Self {
        CrawlSection {
            world: None,
            world_spec: WorldSpec::default(),
            seeds: default_seeds(),
            account_threshold: DEFAULT_ACCOUNT_THRESHOLD,
            detector_threshold: 0.5,
            detector_scores: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    #[default]
    World,
    Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunitySection {
    pub input: Option<PathBuf>,
    pub input_kind: InputKind,
    pub max_nodes_per_cluster: usize,
}

impl Default for CommunitySection {
    fn default() -> Self {
        CommunitySection {
            input: None,
            input_kind: InputKind::World,
            max_nodes_per_cluster: quadfuse_community::DEFAULT_MAX_NODES_PER_CLUSTER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SunburstSection {
    pub grouping: quadfuse_community::Grouping,
    pub seed_tag: Option<String>,
    pub lexicon: Option<PathBuf>,
}

impl Default for SunburstSection {
    fn default() -> Self {
        SunburstSection {
            grouping: quadfuse_community::Grouping::DrugType,
            seed_tag: None,
            lexicon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    pub corpus: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub export_dir: Option<PathBuf>,
    pub addr: String,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            corpus: None,
            log: None,
            tokens: None,
            export_dir: None,
            addr: "127.0.0.1:8080".into(),
        }
    }
}

fn bad(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        if cfg.out.as_os_str().is_empty() {
            cfg.out = PathBuf::from("out");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies command-line overrides, then checks value ranges.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        if self.out.as_os_str().is_empty() {
            self.out = PathBuf::from("out");
        }
        self.crawl.world_spec.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.embedding;
        if e.text_dim == 0 || e.image_dim == 0 {
            return Err(bad("embedding dims must be positive"));
        }
        let t = &self.train;
        if !(t.train_fraction > 0.0 && t.train_fraction < 1.0) {
            return Err(bad(format!("train.train_fraction must lie in (0, 1), got {}", t.train_fraction)));
        }
        self.train_config().validate().map_err(|e| bad(e.to_string()))?;
        if self.fusion.sketch_dim == 0 || self.fusion.fbc_atoms == 0 || self.fusion.fbc_rank == 0 {
            return Err(bad("fusion.sketch_dim, fbc_atoms and fbc_rank must be positive"));
        }
        if !(self.fusion.fbc_lambda >= 0.0 && self.fusion.fbc_lambda.is_finite()) {
            return Err(bad("fusion.fbc_lambda must be a non-negative number"));
        }
        if let Some(r) = self.ratio_sweep.ratios.iter().find(|r| !(**r >= 1.0 && r.is_finite())) {
            return Err(bad(format!("ratio_sweep.ratios must all be >= 1, got {r}")));
        }
        let w = &self.experiment.decision_weights;
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(bad("experiment.decision_weights must be non-negative and sum to 1"));
        }
        if self.community.max_nodes_per_cluster == 0 {
            return Err(bad("community.max_nodes_per_cluster must be positive"));
        }
        if !(0.0..=1.0).contains(&self.crawl.detector_threshold) {
            return Err(bad("crawl.detector_threshold must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Fails with a config error when a declared input file is absent.
    pub fn require(path: Option<&Path>, key: &str) -> Result<()> {
        match path {
            Some(p) if !p.exists() => Err(bad(format!("{key}: {} does not exist", p.display()))),
            _ => Ok(()),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seed,
            threshold: t.threshold,
            loss: t.loss,
        }
    }

    pub fn fusion_config(&self, strategy: Strategy, protocol: Protocol) -> FusionConfig {
        let f = &self.fusion;
        FusionConfig {
            strategy,
            protocol,
            sketch_dim: f.sketch_dim,
            sketch_seed: self.seed,
            bilinear_normalize: f.bilinear_normalize,
            fbc: FbcSpec {
                atoms: f.fbc_atoms,
                rank: f.fbc_rank,
                lambda: f.fbc_lambda,
                seed: self.seed,
            },
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let s = &self.synth;
        let m = |r: [f64; 4]| MissingRates {
            pc: r[0],
            pi: r[1],
            hb: r[2],
            hi: r[3],
        };
        SynthSpec {
            records: s.records,
            positive_fraction: s.positive_fraction,
            signal: s.signal,
            tokens_per_text: s.tokens_per_text,
            positive_missing: m(s.positive_missing),
            negative_missing: m(s.negative_missing),
            only_fusible: s.only_fusible,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configs serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::parse("").unwrap().resolve(None, None).unwrap();
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.ratio_sweep.ratios, [2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(Config::parse("sed = 1"), Err(CliError::Config(_))));
        assert!(matches!(Config::parse("[train]\nepoch = 3"), Err(CliError::Config(_))));
        assert!(matches!(Config::parse("[fusion]\nstrategy = \"mlb\""), Err(CliError::Config(_))));
    }

    #[test]
    fn range_checks() {
        let check = |s: &str| Config::parse(s).unwrap().resolve(None, None);
        assert!(check("[ratio_sweep]\nratios = [0.5]").is_err());
        assert!(check("[train]\ntrain_fraction = 1.0").is_err());
        assert!(check("[experiment]\ndecision_weights = [0.5, 0.5, 0.5, 0.5]").is_err());
        assert!(check("[embedding]\ntext_dim = 0").is_err());
        assert!(check("[train]\nbatch_size = 0").is_err());
    }

    #[test]
    fn overrides_and_echo_round_trip() {
        let cfg = Config::parse("seed = 3\n[fusion]\nstrategy = \"fbc\"")
            .unwrap()
            .resolve(Some(9), Some("elsewhere".into()))
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.crawl.world_spec.seed, 9);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
        let again = Config::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}
