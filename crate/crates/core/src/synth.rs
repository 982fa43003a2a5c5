//! Seeded generator of labelled quadruple records.
//!
//! Texts and image references mix class-specific keywords with a shared
//! vocabulary; `signal` is the probability that a token comes from the class
//! vocabulary. Missing-modality rates default to the per-class rates of the
//! reference corpus (positives miss HB/HI more than half of the time).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{validate_mask, Dataset, Label, PresenceMask, QuadrupleRecord, MAX_HOMEPAGE_IMAGES};

const DEALER_WORDS: &[&str] = &[
    "plug", "dm", "wickr", "snapchat", "kik", "telegram", "delivery", "discreet", "shipping", "prices",
    "menu", "order", "pills", "xanax", "lsd", "mdma", "codeine", "percs", "tabs", "stock",
];
const OTHER_WORDS: &[&str] = &[
    "sunset", "friends", "coffee", "travel", "beach", "family", "gym", "music", "dinner", "weekend",
    "art", "puppy", "garden", "concert", "birthday", "hiking", "sneakers", "recipe", "movie", "study",
];
const SHARED_WORDS: &[&str] = &[
    "the", "best", "today", "new", "good", "vibes", "link", "check", "out", "love", "so", "real",
    "now", "got", "you", "all", "day", "time", "more", "fr",
];
const DEALER_IMAGES: &[&str] = &["pills", "powder", "cannabis", "mushroom", "blotter", "syrup", "baggie", "scale"];
const OTHER_IMAGES: &[&str] = &["selfie", "food", "pet", "landscape", "car", "party", "outfit", "flowers"];
const SHARED_IMAGES: &[&str] = &["photo", "pic", "snap", "post"];
const DEALER_TAGS: &[&str] = &["xanax", "lsd", "pills", "mdma", "codeine", "plug", "psychedelic", "lsdtrip"];
const OTHER_TAGS: &[&str] = &["travel", "food", "love", "fitness", "music", "nature", "fashion", "photography"];

/// Per-source missing rates in (pc, pi, hb, hi) order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingRates {
    pub pc: f64,
    pub pi: f64,
    pub hb: f64,
    pub hi: f64,
}

impl MissingRates {
    pub const NONE: MissingRates = MissingRates {
        pc: 0.0,
        pi: 0.0,
        hb: 0.0,
        hi: 0.0,
    };

    pub fn reference_positive() -> Self {
        MissingRates {
            pc: 0.0330,
            pi: 0.0,
            hb: 0.5598,
            hi: 0.5715,
        }
    }

    pub fn reference_negative() -> Self {
        MissingRates {
            pc: 0.0,
            pi: 0.0,
            hb: 0.1690,
            hi: 0.2239,
        }
    }

    fn validate(&self) -> Result<()> {
        for r in [self.pc, self.pi, self.hb, self.hi] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("missing rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub records: usize,
    pub positive_fraction: f64,
    pub signal: f64,
    pub tokens_per_text: usize,
    pub positive_missing: MissingRates,
    pub negative_missing: MissingRates,
    /// Redraw masks until they are fusible under the quadruple rule.
    pub only_fusible: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            records: 2000,
            positive_fraction: 0.5,
            signal: 0.5,
            tokens_per_text: 8,
            positive_missing: MissingRates::reference_positive(),
            negative_missing: MissingRates::reference_negative(),
            only_fusible: true,
            seed: 0,
        }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, class: &[&'a str], shared: &[&'a str], signal: f64) -> &'a str {
    let pool = if rng.gen_bool(signal) { class } else { shared };
    pool.choose(rng).expect("vocabularies are non-empty")
}

fn text<R: Rng>(rng: &mut R, class: &[&str], n: usize, signal: f64) -> String {
    (0..n).map(|_| pick(rng, class, SHARED_WORDS, signal)).collect::<Vec<_>>().join(" ")
}

fn image<R: Rng>(rng: &mut R, class: &[&str], signal: f64) -> String {
    let word = pick(rng, class, SHARED_IMAGES, signal);
    format!("img/{word}_{:06}.jpg", rng.gen_range(0..1_000_000))
}

fn draw_mask<R: Rng>(rng: &mut R, rates: &MissingRates, only_fusible: bool) -> Result<PresenceMask> {
    for _ in 0..10_000 {
        let mask = PresenceMask::new(
            !rng.gen_bool(rates.pc),
            !rng.gen_bool(rates.pi),
            !rng.gen_bool(rates.hb),
            !rng.gen_bool(rates.hi),
        );
        if !only_fusible || validate_mask(mask) {
            return Ok(mask);
        }
    }
    Err(Error::InvalidConfig("missing rates never produce a fusible mask".into()))
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.positive_fraction) {
        return Err(Error::InvalidConfig("positive_fraction must lie in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&spec.signal) {
        return Err(Error::InvalidConfig("signal must lie in [0, 1]".into()));
    }
    if spec.tokens_per_text == 0 {
        return Err(Error::InvalidConfig("tokens_per_text must be positive".into()));
    }
    spec.positive_missing.validate()?;
    spec.negative_missing.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_pos = (spec.positive_fraction * spec.records as f64).round() as usize;
    let mut labels: Vec<Label> = (0..spec.records)
        .map(|i| if i < n_pos { Label::Dealer } else { Label::NonDealer })
        .collect();
    labels.shuffle(&mut rng);

    let mut records = Vec::with_capacity(spec.records);
    for (i, label) in labels.into_iter().enumerate() {
        let (words, images, tags, rates) = match label {
            Label::Dealer => (DEALER_WORDS, DEALER_IMAGES, DEALER_TAGS, &spec.positive_missing),
            Label::NonDealer => (OTHER_WORDS, OTHER_IMAGES, OTHER_TAGS, &spec.negative_missing),
        };
        let mask = draw_mask(&mut rng, rates, spec.only_fusible)?;
        let mut rec = QuadrupleRecord::new(format!("u{i:05}"), format!("p{i:05}"), label);
        if mask.pc {
            rec.pc_text = Some(text(&mut rng, words, spec.tokens_per_text, spec.signal));
        }
        if mask.pi {
            rec.pi_ref = Some(image(&mut rng, images, spec.signal));
        }
        if mask.hb {
            rec.hb_text = Some(text(&mut rng, words, spec.tokens_per_text, spec.signal));
        }
        if mask.hi {
            let n = rng.gen_range(1..=MAX_HOMEPAGE_IMAGES);
            rec.hi_refs = (0..n).map(|_| image(&mut rng, images, spec.signal)).collect();
        }
        let n_tags = rng.gen_range(1..=3);
        rec.hashtags = (0..n_tags)
            .map(|_| pick(&mut rng, tags, OTHER_TAGS, spec.signal.max(0.5)).to_string())
            .collect();
        records.push(rec);
    }
    Ok(Dataset {
        records,
        split_seed: spec.seed,
    })
}
