use std::collections::{BTreeMap, BTreeSet, VecDeque};

use quadfuse_core::record::normalize_hashtag;
use serde::{Deserialize, Serialize};

use crate::error::{CrawlError, Result};
use crate::world::SyntheticWorld;

/// Ground-truth dealer accounts to collect before stopping.
pub const DEFAULT_ACCOUNT_THRESHOLD: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrawlState {
    pub hashtag_pool: BTreeSet<String>,
    pub hashtag_freq: BTreeMap<String, u64>,
    pub visited_hashtags: BTreeSet<String>,
    pub collected_posts: BTreeSet<String>,
    pub collected_accounts: BTreeSet<String>,
    pub threshold: usize,
    seed_queue: VecDeque<String>,
}

impl CrawlState {
    /// Seeds are normalized (lowercase, `#` stripped) and deduplicated,
    /// keeping first occurrence order.
    pub fn seed_hashtags<I, S>(seeds: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut pool = BTreeSet::new();
        let mut queue = VecDeque::new();
        for s in seeds {
            let tag = normalize_hashtag(s.as_ref());
            if !tag.is_empty() && pool.insert(tag.clone()) {
                queue.push_back(tag);
            }
        }
        if pool.is_empty() {
            return Err(CrawlError::EmptySeeds);
        }
        Ok(CrawlState {
            hashtag_freq: pool.iter().map(|t| (t.clone(), 0)).collect(),
            hashtag_pool: pool,
            visited_hashtags: BTreeSet::new(),
            collected_posts: BTreeSet::new(),
            collected_accounts: BTreeSet::new(),
            threshold: DEFAULT_ACCOUNT_THRESHOLD,
            seed_queue: queue,
        })
    }

    pub fn with_threshold(mut self, threshold: usize) -> Self {
        self.threshold = threshold;
        self
    }

    /// Unvisited seeds in input order, then the most frequent unvisited
    /// hashtag with ties broken lexicographically.
    pub fn next_hashtag(&self) -> Option<&str> {
        if let Some(seed) = self.seed_queue.iter().find(|s| !self.visited_hashtags.contains(*s)) {
            return Some(seed);
        }
        let mut best: Option<(&str, u64)> = None;
        for tag in self.hashtag_pool.difference(&self.visited_hashtags) {
            let f = self.hashtag_freq.get(tag).copied().unwrap_or(0);
            // Pool iteration is ascending, so strict `>` keeps the smallest tag on ties.
            if best.map_or(true, |(_, bf)| f > bf) {
                best = Some((tag, f));
            }
        }
        best.map(|(t, _)| t)
    }

    pub fn is_exhausted(&self) -> bool {
        self.next_hashtag().is_none()
    }

    pub fn dealers_collected(&self, world: &SyntheticWorld) -> usize {
        self.collected_accounts.intersection(&world.ground_truth_dealers).count()
    }
}

/// Where post scores come from: the world's oracle score, or a table of
/// external detector outputs. Posts missing from the table fall back to the
/// oracle score.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Detector {
    #[default]
    Oracle,
    Table(BTreeMap<String, f64>),
}

/// Parses `post_id<TAB>score` lines; `#` starts a comment line.
pub fn parse_scores(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CrawlError::Parse { line: i + 1, message };
        let (id, score) = line
            .split_once('\t')
            .ok_or_else(|| err("expected post_id<TAB>score".into()))?;
        let score: f64 = score.trim().parse().map_err(|e| err(format!("bad score: {e}")))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(err(format!("score {score} outside [0, 1]")));
        }
        if id.is_empty() {
            return Err(err("empty post id".into()));
        }
        if out.insert(id.to_string(), score).is_some() {
            return Err(err(format!("duplicate post id {id}")));
        }
    }
    Ok(out)
}

/// Hashtag → post index over a world, plus the score source.
#[derive(Clone, Debug)]
pub struct CrawlIndex<'w> {
    world: &'w SyntheticWorld,
    by_tag: BTreeMap<&'w str, Vec<usize>>,
    detector: Detector,
}

impl<'w> CrawlIndex<'w> {
    pub fn new(world: &'w SyntheticWorld) -> Self {
        let mut by_tag: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, post) in world.posts.iter().enumerate() {
            for tag in &post.hashtags {
                by_tag.entry(tag.as_str()).or_default().push(i);
            }
        }
        CrawlIndex {
            world,
            by_tag,
            detector: Detector::Oracle,
        }
    }

    pub fn with_detector(mut self, detector: Detector) -> Self {
        self.detector = detector;
        self
    }

    pub fn world(&self) -> &'w SyntheticWorld {
        self.world
    }

    fn score(&self, post: usize) -> f64 {
        let p = &self.world.posts[post];
        match &self.detector {
            Detector::Oracle => p.image_drug_score,
            Detector::Table(t) => t.get(&p.post_id).copied().unwrap_or(p.image_drug_score),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub hashtag: String,
    /// Posts carrying the hashtag whose score clears the threshold.
    pub posts_hit: usize,
    pub new_posts: usize,
    pub accounts_added: usize,
    pub new_hashtags: usize,
}

/// Visits one hashtag. Returns `CrawlError::Exhausted` when no unvisited
/// hashtag remains.
pub fn crawl_step(state: &mut CrawlState, index: &CrawlIndex<'_>, detector_threshold: f64) -> Result<StepLog> {
    let tag = state.next_hashtag().ok_or(CrawlError::Exhausted)?.to_string();
    let inserted = state.visited_hashtags.insert(tag.clone());
    debug_assert!(inserted, "hashtag {tag} visited twice");
    let mut log = StepLog {
        step: state.visited_hashtags.len(),
        hashtag: tag.clone(),
        posts_hit: 0,
        new_posts: 0,
        accounts_added: 0,
        new_hashtags: 0,
    };
    let Some(posts) = index.by_tag.get(tag.as_str()) else {
        return Ok(log);
    };
    for &i in posts {
        if index.score(i) < detector_threshold {
            continue;
        }
        log.posts_hit += 1;
        let post = &index.world.posts[i];
        // A post reached again through another hashtag adds nothing new.
        if !state.collected_posts.insert(post.post_id.clone()) {
            continue;
        }
        log.new_posts += 1;
        for c in &post.commenter_ids {
            if state.collected_accounts.insert(c.clone()) {
                log.accounts_added += 1;
            }
        }
        for other in post.hashtags.iter().filter(|t| **t != tag) {
            *state.hashtag_freq.entry(other.clone()).or_insert(0) += 1;
            if state.hashtag_pool.insert(other.clone()) {
                log.new_hashtags += 1;
            }
        }
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub steps: usize,
    pub collected_posts: usize,
    pub collected_accounts: usize,
    pub dealers_collected: usize,
    pub dealer_recall: f64,
    pub hashtag_coverage: f64,
    pub exhausted: bool,
    pub trajectory: Vec<StepLog>,
}

impl CrawlReport {
    pub fn trajectory_jsonl(&self) -> String {
        self.trajectory
            .iter()
            .map(|s| serde_json::to_string(s).expect("step logs serialize") + "\n")
            .collect()
    }
}

/// Steps until the dealer-account threshold is met or the frontier runs
/// out. An empty ground truth gives recall 1.0.
pub fn run_crawl(state: &mut CrawlState, index: &CrawlIndex<'_>, detector_threshold: f64) -> CrawlReport {
    let world = index.world;
    let mut trajectory = Vec::new();
    while state.dealers_collected(world) < state.threshold {
        match crawl_step(state, index, detector_threshold) {
            Ok(log) => trajectory.push(log),
            Err(_) => break,
        }
    }
    let dealers = state.dealers_collected(world);
    let truth = world.ground_truth_dealers.len();
    let all_tags = world.hashtags();
    let covered = state.visited_hashtags.iter().filter(|t| all_tags.contains(t.as_str())).count();
    CrawlReport {
        steps: trajectory.len(),
        collected_posts: state.collected_posts.len(),
        collected_accounts: state.collected_accounts.len(),
        dealers_collected: dealers,
        dealer_recall: if truth == 0 { 1.0 } else { dealers as f64 / truth as f64 },
        hashtag_coverage: if all_tags.is_empty() {
            1.0
        } else {
            covered as f64 / all_tags.len() as f64
        },
        exhausted: state.is_exhausted(),
        trajectory,
    }
}
