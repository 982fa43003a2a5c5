use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use quadfuse_core::record::normalize_hashtag;
use serde::{Deserialize, Serialize};

use crate::error::{CommunityError, Result};

pub const DRUG_TAXONOMY: &str = include_str!("../assets/drug_taxonomy.tsv");
pub const PLACE_LEXICON: &str = include_str!("../assets/place_lexicon.tsv");

/// Group name for tags a taxonomy does not list.
pub const OTHER_GROUP: &str = "other";

/// Hashtag → group label table read from `tag<TAB>group` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    groups: BTreeMap<String, String>,
}

impl Lexicon {
    /// Blank lines and lines starting with `#` are skipped. Tags are
    /// normalized; a tag listed twice is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut groups = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CommunityError::Parse { line: i + 1, message };
            let (tag, group) = line
                .split_once('\t')
                .ok_or_else(|| err("expected tag<TAB>group".into()))?;
            let tag = normalize_hashtag(tag);
            let group = group.trim();
            if tag.is_empty() || group.is_empty() {
                return Err(err("empty tag or group".into()));
            }
            if groups.insert(tag.clone(), group.to_string()).is_some() {
                return Err(err(format!("tag {tag} listed twice")));
            }
        }
        Ok(Lexicon { groups })
    }

    pub fn drug_taxonomy() -> Self {
        Self::parse(DRUG_TAXONOMY).expect("shipped taxonomy parses")
    }

    pub fn places() -> Self {
        Self::parse(PLACE_LEXICON).expect("shipped place lexicon parses")
    }

    pub fn group(&self, tag: &str) -> Option<&str> {
        self.groups.get(tag).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    DrugType,
    Geography,
}

impl FromStr for Grouping {
    type Err = CommunityError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drug_type" => Ok(Grouping::DrugType),
            "geography" => Ok(Grouping::Geography),
            other => Err(CommunityError::InvalidArgument(format!(
                "unknown grouping {other:?}, expected drug_type or geography"
            ))),
        }
    }
}

/// Node of a sunburst document. Leaf and group values are fractions of the
/// whole, so each level sums to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SunburstNode {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<SunburstNode>,
}

impl SunburstNode {
    pub fn child(&self, name: &str) -> Option<&SunburstNode> {
        self.children.iter().find(|c| c.name == name)
    }
}

fn by_value_then_name(a: &SunburstNode, b: &SunburstNode) -> std::cmp::Ordering {
    b.value.total_cmp(&a.value).then_with(|| a.name.cmp(&b.name))
}

/// Two-level hierarchy (group → tag) from tag counts. Tags the lexicon does
/// not list go to [`OTHER_GROUP`] unless `drop_unlisted` is set.
pub fn sunburst_from_counts(
    root: &str,
    counts: &BTreeMap<String, u64>,
    lexicon: &Lexicon,
    drop_unlisted: bool,
) -> Result<SunburstNode> {
    let mut grouped: BTreeMap<&str, Vec<(&str, u64)>> = BTreeMap::new();
    for (tag, &n) in counts.iter().filter(|(_, &n)| n > 0) {
        match lexicon.group(tag) {
            Some(group) => grouped.entry(group).or_default().push((tag, n)),
            None if drop_unlisted => {}
            None => grouped.entry(OTHER_GROUP).or_default().push((tag, n)),
        }
    }
    let total: u64 = grouped.values().flatten().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(CommunityError::EmptyCorpus);
    }
    let total = total as f64;
    let mut children: Vec<SunburstNode> = grouped
        .into_iter()
        .map(|(group, tags)| {
            let mut leaves: Vec<SunburstNode> = tags
                .into_iter()
                .map(|(tag, n)| SunburstNode {
                    name: tag.to_string(),
                    value: n as f64 / total,
                    children: Vec::new(),
                })
                .collect();
            leaves.sort_by(by_value_then_name);
            SunburstNode {
                name: group.to_string(),
                value: leaves.iter().map(|l| l.value).sum(),
                children: leaves,
            }
        })
        .collect();
    children.sort_by(by_value_then_name);
    Ok(SunburstNode {
        name: root.to_string(),
        value: 1.0,
        children,
    })
}

/// Drug-type mode counts every hashtag occurrence. Geography mode keeps only
/// posts carrying `seed_tag` and only place hashtags from the lexicon; the
/// seed tag itself is not counted.
pub fn sunburst_export<I, P, S>(
    posts: I,
    grouping: Grouping,
    lexicon: &Lexicon,
    seed_tag: Option<&str>,
) -> Result<SunburstNode>
where
    I: IntoIterator<Item = P>,
    P: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let seed = match (grouping, seed_tag) {
        (Grouping::Geography, None) => {
            return Err(CommunityError::InvalidArgument("geography grouping requires a seed tag".into()))
        }
        (_, s) => s.map(normalize_hashtag),
    };
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut any_post = false;
    for post in posts {
        any_post = true;
        let tags: BTreeSet<String> = post
            .into_iter()
            .map(|t| normalize_hashtag(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        if let Some(seed) = &seed {
            if !tags.contains(seed) {
                continue;
            }
        }
        for t in tags {
            if grouping == Grouping::Geography && Some(&t) == seed.as_ref() {
                continue;
            }
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    if !any_post {
        return Err(CommunityError::EmptyCorpus);
    }
    let root = match (&seed, grouping) {
        (Some(s), Grouping::Geography) => format!("#{s} by place"),
        (_, Grouping::Geography) => unreachable!(),
        (Some(s), Grouping::DrugType) => format!("#{s} by drug type"),
        (None, Grouping::DrugType) => "hashtags by drug type".to_string(),
    };
    sunburst_from_counts(&root, &counts, lexicon, grouping == Grouping::Geography)
}
