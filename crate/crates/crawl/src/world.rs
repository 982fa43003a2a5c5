//! Synthetic social worlds: posts with hashtags, commenters, and an oracle
//! drug-image score, plus the ground-truth dealer set.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use quadfuse_core::record::normalize_hashtag;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CrawlError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimPost {
    pub post_id: String,
    pub hashtags: BTreeSet<String>,
    pub image_drug_score: f64,
    pub commenter_ids: Vec<String>,
    #[serde(default)]
    pub caption: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimHomepage {
    pub user_id: String,
    #[serde(default)]
    pub bio: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SyntheticWorld {
    pub posts: Vec<SimPost>,
    pub users: BTreeMap<String, SimHomepage>,
    pub ground_truth_dealers: BTreeSet<String>,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for post in &self.posts {
            if !ids.insert(post.post_id.as_str()) {
                return Err(CrawlError::InvalidWorld(format!("duplicate post id {}", post.post_id)));
            }
            if !(0.0..=1.0).contains(&post.image_drug_score) {
                return Err(CrawlError::InvalidWorld(format!(
                    "post {}: image_drug_score {} outside [0, 1]",
                    post.post_id, post.image_drug_score
                )));
            }
            if let Some(c) = post.commenter_ids.iter().find(|c| !self.users.contains_key(*c)) {
                return Err(CrawlError::InvalidWorld(format!("post {}: unknown commenter {c}", post.post_id)));
            }
            if let Some(t) = post.hashtags.iter().find(|t| normalize_hashtag(t) != **t || t.is_empty()) {
                return Err(CrawlError::InvalidWorld(format!("post {}: hashtag {t:?} is not normalized", post.post_id)));
            }
        }
        if let Some(d) = self.ground_truth_dealers.iter().find(|d| !self.users.contains_key(*d)) {
            return Err(CrawlError::InvalidWorld(format!("unknown ground-truth dealer {d}")));
        }
        Ok(())
    }

    pub fn hashtags(&self) -> BTreeSet<&str> {
        self.posts.iter().flat_map(|p| p.hashtags.iter().map(String::as_str)).collect()
    }
}

/// Generator parameters. Dealer posts are grouped into hashtag clusters;
/// cluster 0 uses the bare dealer vocabulary, other clusters suffix it with
/// their index. Every connected cluster has at least one post that also
/// carries cluster 0's hub tag. The last `disconnected_clusters` clusters
/// never do, and never carry general tags either.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub posts: usize,
    pub users: usize,
    pub dealer_fraction: f64,
    pub clusters: usize,
    pub disconnected_clusters: usize,
    pub dealer_score: (f64, f64),
    pub other_score: (f64, f64),
    /// Probability that a connected dealer post also carries a general tag.
    pub general_tag_rate: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            posts: 1000,
            users: 500,
            dealer_fraction: 0.1,
            clusters: 3,
            disconnected_clusters: 0,
            dealer_score: (0.55, 1.0),
            other_score: (0.0, 0.6),
            general_tag_rate: 0.2,
            seed: 0,
        }
    }
}

const DEALER_ROOTS: &[&str] = &[
    "plug", "xanax", "lsd", "pills", "mdma", "codeine", "shrooms", "percs", "molly", "tabs",
];
const GENERAL_TAGS: &[&str] = &[
    "love", "travel", "food", "fitness", "music", "nature", "fashion", "photography", "art", "party",
    "friends", "weekend",
];
const CONTACT_APPS: &[&str] = &["wickr", "snapchat", "kik", "telegram", "whatsapp"];

/// Seed hashtags that reach cluster 0 directly.
pub fn default_seeds() -> Vec<String> {
    DEALER_ROOTS.iter().map(|s| s.to_string()).collect()
}

fn cluster_vocab(cluster: usize) -> Vec<String> {
    DEALER_ROOTS
        .iter()
        .map(|r| if cluster == 0 { r.to_string() } else { format!("{r}{cluster}") })
        .collect()
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

impl WorldSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CrawlError::InvalidConfig(m.to_string()));
        if self.posts == 0 || self.users == 0 {
            return bad("posts and users must be positive");
        }
        if !(0.0..=1.0).contains(&self.dealer_fraction) {
            return bad("dealer_fraction must lie in [0, 1]");
        }
        if self.clusters == 0 {
            return bad("clusters must be positive");
        }
        if self.disconnected_clusters >= self.clusters {
            return bad("disconnected_clusters must be smaller than clusters");
        }
        for (lo, hi) in [self.dealer_score, self.other_score] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad("score ranges must satisfy 0 ≤ lo ≤ hi ≤ 1");
            }
        }
        if !(0.0..=1.0).contains(&self.general_tag_rate) {
            return bad("general_tag_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn generate_world(spec: &WorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_dealers = (spec.dealer_fraction * spec.users as f64).round() as usize;
    let n_dealer_posts = if n_dealers == 0 {
        0
    } else {
        ((spec.dealer_fraction * spec.posts as f64).round() as usize).max(1)
    };

    let mut users = BTreeMap::new();
    let user_id = |i: usize| format!("user{i:05}");
    for i in 0..spec.users {
        let dealer = i < n_dealers;
        let bio = if dealer {
            let app = CONTACT_APPS.choose(&mut rng).unwrap();
            format!("{app} for menu, fast delivery")
        } else {
            format!("{} and {}", GENERAL_TAGS.choose(&mut rng).unwrap(), GENERAL_TAGS.choose(&mut rng).unwrap())
        };
        let n_images = rng.gen_range(0..=10);
        let image_refs = (0..n_images).map(|j| format!("hp/{}_{j}.jpg", user_id(i))).collect();
        users.insert(
            user_id(i),
            SimHomepage {
                user_id: user_id(i),
                bio,
                image_refs,
            },
        );
    }
    let dealers: Vec<String> = (0..n_dealers).map(user_id).collect();
    let regular: Vec<String> = (n_dealers..spec.users).map(user_id).collect();
    let connected = spec.clusters - spec.disconnected_clusters;
    let hub0 = cluster_vocab(0)[0].clone();

    let mut posts = Vec::with_capacity(spec.posts);
    let mut cluster_posts: Vec<Vec<usize>> = vec![Vec::new(); spec.clusters];
    for i in 0..spec.posts {
        let post_id = format!("post{i:06}");
        if i < n_dealer_posts {
            let cluster = i % spec.clusters;
            let vocab = cluster_vocab(cluster);
            let mut tags = BTreeSet::from([vocab[0].clone()]);
            for _ in 0..rng.gen_range(1..=3) {
                tags.insert(vocab.choose(&mut rng).unwrap().clone());
            }
            let is_connected = cluster < connected;
            if is_connected && cluster > 0 && (cluster_posts[cluster].is_empty() || rng.gen_bool(0.3)) {
                tags.insert(hub0.clone());
            }
            if is_connected && rng.gen_bool(spec.general_tag_rate) {
                tags.insert(GENERAL_TAGS.choose(&mut rng).unwrap().to_string());
            }
            let members: Vec<&String> = dealers.iter().skip(cluster).step_by(spec.clusters).collect();
            let mut commenters: Vec<String> = Vec::new();
            if !members.is_empty() {
                let k = cluster_posts[cluster].len();
                commenters.push(members[k % members.len()].clone());
                if rng.gen_bool(0.5) {
                    commenters.push(members.choose(&mut rng).unwrap().to_string());
                }
            }
            for _ in 0..rng.gen_range(0..=3) {
                if let Some(u) = regular.choose(&mut rng) {
                    commenters.push(u.clone());
                }
            }
            dedup_in_order(&mut commenters);
            cluster_posts[cluster].push(posts.len());
            let caption = tags.iter().map(|t| format!("#{t}")).collect::<Vec<_>>().join(" ");
            posts.push(SimPost {
                post_id,
                hashtags: tags,
                image_drug_score: uniform(&mut rng, spec.dealer_score),
                commenter_ids: commenters,
                caption,
            });
        } else {
            let mut tags = BTreeSet::new();
            for _ in 0..rng.gen_range(1..=3) {
                tags.insert(GENERAL_TAGS.choose(&mut rng).unwrap().to_string());
            }
            let mut commenters: Vec<String> = (0..rng.gen_range(0..=4))
                .filter_map(|_| regular.choose(&mut rng).cloned())
                .collect();
            dedup_in_order(&mut commenters);
            let caption = format!("{} vibes", tags.iter().next().unwrap());
            posts.push(SimPost {
                post_id,
                hashtags: tags,
                image_drug_score: uniform(&mut rng, spec.other_score),
                commenter_ids: commenters,
                caption,
            });
        }
    }

    // Dealers whose turn never came still comment somewhere in their cluster.
    for (d, dealer) in dealers.iter().enumerate() {
        let cluster = d % spec.clusters;
        let commented = cluster_posts[cluster]
            .iter()
            .any(|&p| posts[p].commenter_ids.contains(dealer));
        if !commented {
            if let Some(&p) = cluster_posts[cluster].choose(&mut rng) {
                posts[p].commenter_ids.push(dealer.clone());
            }
        }
    }

    let world = SyntheticWorld {
        posts,
        users,
        ground_truth_dealers: dealers.into_iter().collect(),
        seed: spec.seed,
    };
    debug_assert!(world.validate().is_ok());
    Ok(world)
}

fn dedup_in_order(v: &mut Vec<String>) {
    let mut seen = BTreeSet::new();
    v.retain(|x| seen.insert(x.clone()));
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum WorldLine {
    Meta { seed: u64 },
    User(SimHomepage),
    Post(SimPost),
    Dealer { user_id: String },
}

/// Parses a world file: one JSON object per line tagged by `kind`
/// (`meta`, `user`, `post`, `dealer`). Lines may come in any order.
pub fn parse_world(text: &str) -> Result<SyntheticWorld> {
    let mut world = SyntheticWorld::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: WorldLine = serde_json::from_str(line).map_err(|e| CrawlError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed {
            WorldLine::Meta { seed } => world.seed = seed,
            WorldLine::User(u) => {
                if world.users.insert(u.user_id.clone(), u).is_some() {
                    return Err(CrawlError::Parse {
                        line: i + 1,
                        message: "duplicate user".into(),
                    });
                }
            }
            WorldLine::Post(p) => world.posts.push(p),
            WorldLine::Dealer { user_id } => {
                world.ground_truth_dealers.insert(user_id);
            }
        }
    }
    world.validate()?;
    Ok(world)
}

pub fn write_world<W: Write>(world: &SyntheticWorld, mut out: W) -> Result<()> {
    let mut emit = |line: &WorldLine| -> Result<()> {
        let s = serde_json::to_string(line).expect("world lines serialize");
        writeln!(out, "{s}").map_err(|e| CrawlError::Io {
            path: "<writer>".into(),
            message: e.to_string(),
        })
    };
    emit(&WorldLine::Meta { seed: world.seed })?;
    for u in world.users.values() {
        emit(&WorldLine::User(u.clone()))?;
    }
    for p in &world.posts {
        emit(&WorldLine::Post(p.clone()))?;
    }
    for d in &world.ground_truth_dealers {
        emit(&WorldLine::Dealer { user_id: d.clone() })?;
    }
    Ok(())
}

pub fn load_world(path: impl AsRef<Path>) -> Result<SyntheticWorld> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CrawlError::io(path, e))?;
    parse_world(&text)
}

pub fn save_world(world: &SyntheticWorld, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_world(world, &mut buf)?;
    fs::write(path, buf).map_err(|e| CrawlError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = WorldSpec {
            posts: 1000,
            dealer_fraction: 0.1,
            seed: 7,
            ..WorldSpec::default()
        };
        let a = generate_world(&spec).unwrap();
        assert_eq!(a, generate_world(&spec).unwrap());
        assert_eq!(a.posts.len(), 1000);
        assert_eq!(a.ground_truth_dealers.len(), 50);
        a.validate().unwrap();
    }

    #[test]
    fn zero_dealer_fraction_has_no_ground_truth() {
        let w = generate_world(&WorldSpec {
            dealer_fraction: 0.0,
            ..WorldSpec::default()
        })
        .unwrap();
        assert!(w.ground_truth_dealers.is_empty());
    }

    #[test]
    fn dealer_posts_score_higher_on_average() {
        let w = generate_world(&WorldSpec {
            seed: 3,
            ..WorldSpec::default()
        })
        .unwrap();
        let dealer_vocab: BTreeSet<String> = (0..3).flat_map(cluster_vocab).collect();
        let (mut d, mut o) = (Vec::new(), Vec::new());
        for p in &w.posts {
            if p.hashtags.iter().any(|t| dealer_vocab.contains(t)) {
                d.push(p.image_drug_score);
            } else {
                o.push(p.image_drug_score);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&d) > mean(&o));
    }

    #[test]
    fn every_dealer_comments_on_a_post() {
        let w = generate_world(&WorldSpec {
            posts: 40,
            users: 200,
            dealer_fraction: 0.2,
            seed: 1,
            ..WorldSpec::default()
        })
        .unwrap();
        for d in &w.ground_truth_dealers {
            assert!(w.posts.iter().any(|p| p.commenter_ids.contains(d)), "{d}");
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let w = generate_world(&WorldSpec {
            posts: 30,
            users: 20,
            seed: 2,
            ..WorldSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_world(&w, &mut buf).unwrap();
        assert_eq!(parse_world(std::str::from_utf8(&buf).unwrap()).unwrap(), w);

        let err = parse_world("{\"kind\":\"post\",\"post_id\":\"p\",\"hashtags\":[\"a\"],\"image_drug_score\":0.5,\"commenter_ids\":[\"ghost\"]}")
            .unwrap_err();
        assert!(err.to_string().contains("unknown commenter ghost"));
        let err = parse_world("\n{\"kind\":\"nope\"}").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"));
        assert!(parse_world("{\"kind\":\"post\",\"post_id\":\"p\",\"hashtags\":[\"A\"],\"image_drug_score\":0.5,\"commenter_ids\":[]}").is_err());
        assert!(parse_world("{\"kind\":\"post\",\"post_id\":\"p\",\"hashtags\":[],\"image_drug_score\":1.5,\"commenter_ids\":[]}").is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            WorldSpec { posts: 0, ..WorldSpec::default() },
            WorldSpec { dealer_fraction: 2.0, ..WorldSpec::default() },
            WorldSpec { disconnected_clusters: 3, ..WorldSpec::default() },
            WorldSpec { dealer_score: (0.9, 0.1), ..WorldSpec::default() },
        ] {
            assert!(matches!(generate_world(&spec), Err(CrawlError::InvalidConfig(_))));
        }
    }
}
