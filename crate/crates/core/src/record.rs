//! Quadruple records, presence masks and the line-delimited JSON dataset format.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homepage images beyond this count are never kept for a user.
pub const MAX_HOMEPAGE_IMAGES: usize = 10;

/// Which of the four quadruple fields carry evidence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PresenceMask {
    pub pc: bool,
    pub pi: bool,
    pub hb: bool,
    pub hi: bool,
}

impl PresenceMask {
    pub const ALL: PresenceMask = PresenceMask {
        pc: true,
        pi: true,
        hb: true,
        hi: true,
    };

    pub const fn new(pc: bool, pi: bool, hb: bool, hi: bool) -> Self {
        PresenceMask { pc, pi, hb, hi }
    }

    /// Bit layout: pc = 8, pi = 4, hb = 2, hi = 1.
    pub fn from_bits(bits: u8) -> Self {
        PresenceMask {
            pc: bits & 0b1000 != 0,
            pi: bits & 0b0100 != 0,
            hb: bits & 0b0010 != 0,
            hi: bits & 0b0001 != 0,
        }
    }

    pub fn bits(self) -> u8 {
        (u8::from(self.pc) << 3) | (u8::from(self.pi) << 2) | (u8::from(self.hb) << 1) | u8::from(self.hi)
    }

    /// All 16 masks in bit order.
    pub fn enumerate() -> impl Iterator<Item = PresenceMask> {
        (0u8..16).map(PresenceMask::from_bits)
    }

    pub fn post_pair_present(self) -> bool {
        self.pi || self.pc
    }

    pub fn homepage_pair_present(self) -> bool {
        self.hi || self.hb
    }

    pub fn count_present(self) -> usize {
        [self.pc, self.pi, self.hb, self.hi].iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for PresenceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(pc={},pi={},hb={},hi={})",
            u8::from(self.pc),
            u8::from(self.pi),
            u8::from(self.hb),
            u8::from(self.hi)
        )
    }
}

/// A mask is fusible when both the post pair (PI, PC) and the homepage pair
/// (HB, HI) keep at least one element: 3 admissible states per pair, 9 of 16.
pub fn validate_mask(mask: PresenceMask) -> bool {
    mask.post_pair_present() && mask.homepage_pair_present()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NonDealer,
    Dealer,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Dealer
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Label::NonDealer => 0.0,
            Label::Dealer => 1.0,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::NonDealer),
            1 => Ok(Label::Dealer),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::NonDealer => 0,
            Label::Dealer => 1,
        }
    }
}

/// One user's ⟨PC, PI, HB, HI⟩ evidence for one post.
///
/// Fields are authoritative: the presence mask is always derived from them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrupleRecord {
    pub user_id: String,
    pub post_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hb_text: Option<String>,
    #[serde(default, deserialize_with = "null_as_empty")]
    pub hi_refs: Vec<String>,
    #[serde(default, deserialize_with = "null_as_empty")]
    pub hashtags: BTreeSet<String>,
}

fn null_as_empty<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Default + Deserialize<'de>,
{
    Ok(Option::<T>::deserialize(d)?.unwrap_or_default())
}

/// Lowercases and strips leading `#` characters.
pub fn normalize_hashtag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

impl QuadrupleRecord {
    pub fn new(user_id: impl Into<String>, post_id: impl Into<String>, label: Label) -> Self {
        QuadrupleRecord {
            user_id: user_id.into(),
            post_id: post_id.into(),
            label,
            pc_text: None,
            pi_ref: None,
            hb_text: None,
            hi_refs: Vec::new(),
            hashtags: BTreeSet::new(),
        }
    }

    pub fn with_pc(mut self, text: impl Into<String>) -> Self {
        self.pc_text = Some(text.into());
        self
    }

    pub fn with_pi(mut self, reference: impl Into<String>) -> Self {
        self.pi_ref = Some(reference.into());
        self
    }

    pub fn with_hb(mut self, text: impl Into<String>) -> Self {
        self.hb_text = Some(text.into());
        self
    }

    pub fn with_hi<I, S>(mut self, refs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.hi_refs = refs.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_hashtags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.hashtags = tags.into_iter().map(|t| normalize_hashtag(t.as_ref())).collect();
        self
    }

    pub fn mask(&self) -> PresenceMask {
        PresenceMask {
            pc: self.pc_text.is_some(),
            pi: self.pi_ref.is_some(),
            hb: self.hb_text.is_some(),
            hi: !self.hi_refs.is_empty(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hi_refs.len() > MAX_HOMEPAGE_IMAGES {
            return Err(Error::Validation(format!(
                "hi_refs has {} entries, at most {MAX_HOMEPAGE_IMAGES} allowed",
                self.hi_refs.len()
            )));
        }
        if let Some(tag) = self.hashtags.iter().find(|t| normalize_hashtag(t) != **t) {
            return Err(Error::Validation(format!("hashtag {tag:?} is not normalized")));
        }
        Ok(())
    }
}

/// On-disk line shape: the record plus an optional declared mask, which must
/// agree with the fields when present.
#[derive(Deserialize)]
struct RecordLine {
    #[serde(flatten)]
    record: QuadrupleRecord,
    #[serde(default)]
    mask: Option<PresenceMask>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<QuadrupleRecord>,
    pub split_seed: u64,
}

impl Dataset {
    pub fn new(records: Vec<QuadrupleRecord>) -> Self {
        Dataset {
            records,
            split_seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.label.is_positive()).count()
    }

    /// Seeded uniform shuffle, then the first `round(train_fraction · n)`
    /// records form the training set.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.records.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |idx: &[usize]| Dataset {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            split_seed: seed,
        };
        Ok((pick(&order[..n_train]), pick(&order[n_train..])))
    }
}

/// Parses line-delimited JSON records. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = parsed.record;
        record.validate().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(declared) = parsed.mask {
            if declared != record.mask() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "invalid record: declared mask {declared} disagrees with fields {}",
                        record.mask()
                    ),
                });
            }
        }
        records.push(record);
    }
    Ok(Dataset::new(records))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for r in &ds.records {
        r.validate()?;
        let line = serde_json::to_string(r).expect("records always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
