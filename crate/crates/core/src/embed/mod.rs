//! Feature extraction behind a provider interface.
//!
//! Deep text/image encoders are replaced by deterministic providers: a
//! hashed n-gram bag pushed through a seeded sign projection, or a directory
//! of externally computed vectors ([`store::VectorStore`]).

pub mod store;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{fnv1a, mix64};
use crate::record::{PresenceMask, QuadrupleRecord, MAX_HOMEPAGE_IMAGES};
pub use store::VectorStore;

pub const DEFAULT_TEXT_DIM: usize = 768;
pub const DEFAULT_IMAGE_DIM: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    PostComment,
    PostImage,
    HomepageBio,
    HomepageImage,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::PostImage,
        Source::PostComment,
        Source::HomepageBio,
        Source::HomepageImage,
    ];

    pub fn modality(self) -> Modality {
        match self {
            Source::PostComment | Source::HomepageBio => Modality::Text,
            Source::PostImage | Source::HomepageImage => Modality::Image,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Source::PostComment => "pc",
            Source::PostImage => "pi",
            Source::HomepageBio => "hb",
            Source::HomepageImage => "hi",
        }
    }

    pub fn is_present(self, mask: PresenceMask) -> bool {
        match self {
            Source::PostComment => mask.pc,
            Source::PostImage => mask.pi,
            Source::HomepageBio => mask.hb,
            Source::HomepageImage => mask.hi,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// A fixed-dimension, finite feature vector tagged with its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    source: Source,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, source: Source) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("feature vectors need dim ≥ 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite feature at index {i}")));
        }
        Ok(FeatureVector { values, source })
    }

    pub fn zeros(dim: usize, source: Source) -> Self {
        assert!(dim > 0, "feature vectors need dim ≥ 1");
        FeatureVector {
            values: vec![0.0; dim],
            source,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn modality(&self) -> Modality {
        self.source.modality()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Hashed character-trigram + word bag projected to `dim` coordinates by a
/// seeded ±1 projection, then L2-normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedProjection {
    pub dim: usize,
    pub seed: u64,
}

impl HashedProjection {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("provider dim must be positive".into()));
        }
        Ok(HashedProjection { dim, seed })
    }

    fn features(input: &str) -> BTreeMap<u64, f64> {
        let mut bag = BTreeMap::new();
        if input.is_empty() {
            return bag;
        }
        let lowered = input.to_lowercase();
        let chars: Vec<char> = std::iter::once('\u{2}')
            .chain(lowered.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut buf = String::new();
        for w in chars.windows(3) {
            buf.clear();
            buf.push('g');
            buf.extend(w);
            *bag.entry(fnv1a(buf.as_bytes())).or_insert(0.0) += 1.0;
        }
        for word in lowered
            .split(|c: char| !c.is_alphanumeric() && c != '#' && c != '_')
            .filter(|w| !w.is_empty())
        {
            buf.clear();
            buf.push('w');
            buf.push_str(word);
            *bag.entry(fnv1a(buf.as_bytes())).or_insert(0.0) += 1.0;
        }
        bag
    }

    pub fn project(&self, input: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (feature, count) in Self::features(input) {
            let base = mix64(self.seed ^ mix64(feature));
            for (j, slot) in out.iter_mut().enumerate() {
                let r = mix64(base.wrapping_add(j as u64));
                if r >> 63 == 1 {
                    *slot += count;
                } else {
                    *slot -= count;
                }
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    SyntheticText,
    SyntheticImage,
    FileBacked,
}

#[derive(Clone, Debug)]
pub enum EmbeddingProvider {
    SyntheticText(HashedProjection),
    SyntheticImage(HashedProjection),
    FileBacked { store: VectorStore, dim: usize },
}

impl EmbeddingProvider {
    pub fn synthetic_text(dim: usize, seed: u64) -> Result<Self> {
        Ok(EmbeddingProvider::SyntheticText(HashedProjection::new(dim, seed)?))
    }

    pub fn synthetic_image(dim: usize, seed: u64) -> Result<Self> {
        Ok(EmbeddingProvider::SyntheticImage(HashedProjection::new(dim, seed)?))
    }

    pub fn file_backed(store: VectorStore, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("provider dim must be positive".into()));
        }
        Ok(EmbeddingProvider::FileBacked { store, dim })
    }

    pub fn kind(&self) -> ProviderKind {
        match self {
            EmbeddingProvider::SyntheticText(_) => ProviderKind::SyntheticText,
            EmbeddingProvider::SyntheticImage(_) => ProviderKind::SyntheticImage,
            EmbeddingProvider::FileBacked { .. } => ProviderKind::FileBacked,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::SyntheticText(p) | EmbeddingProvider::SyntheticImage(p) => p.dim,
            EmbeddingProvider::FileBacked { dim, .. } => *dim,
        }
    }

    fn lookup(store: &VectorStore, dim: usize, key: &str, source: Source) -> Result<FeatureVector> {
        let values = store.get(key)?;
        if values.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: values.len(),
            });
        }
        FeatureVector::new(values, source)
    }

    /// Empty text is present but uninformative and embeds to zeros.
    pub fn embed_text(&self, text: &str, source: Source) -> Result<FeatureVector> {
        match self {
            EmbeddingProvider::SyntheticText(p) => FeatureVector::new(p.project(text), source),
            EmbeddingProvider::FileBacked { store, dim } => Self::lookup(store, *dim, text, source),
            EmbeddingProvider::SyntheticImage(_) => Err(Error::InvalidConfig(
                "a synthetic_image provider cannot embed text".into(),
            )),
        }
    }

    pub fn embed_image(&self, reference: &str, source: Source) -> Result<FeatureVector> {
        if reference.trim().is_empty() {
            return Err(Error::Validation("absent image reference".into()));
        }
        match self {
            EmbeddingProvider::SyntheticImage(p) => FeatureVector::new(p.project(reference), source),
            EmbeddingProvider::FileBacked { store, dim } => {
                Self::lookup(store, *dim, reference, source)
            }
            EmbeddingProvider::SyntheticText(_) => Err(Error::InvalidConfig(
                "a synthetic_text provider cannot embed images".into(),
            )),
        }
    }
}

/// Elementwise mean of up to ten homepage-image features; zeros when none.
pub fn average_homepage(features: &[FeatureVector], dim: usize) -> Result<FeatureVector> {
    if features.len() > MAX_HOMEPAGE_IMAGES {
        return Err(Error::Validation(format!(
            "{} homepage images, at most {MAX_HOMEPAGE_IMAGES} allowed",
            features.len()
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("dim must be positive".into()));
    }
    if features.is_empty() {
        return Ok(FeatureVector::zeros(dim, Source::HomepageImage));
    }
    let mut acc = vec![0.0; dim];
    for f in features {
        if f.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
        acc.iter_mut().zip(f.values()).for_each(|(a, v)| *a += v);
    }
    let n = features.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    FeatureVector::new(acc, Source::HomepageImage)
}

#[derive(Clone, Debug)]
pub struct Providers {
    pub text: EmbeddingProvider,
    pub image: EmbeddingProvider,
}

impl Providers {
    pub fn synthetic(text_dim: usize, image_dim: usize, seed: u64) -> Result<Self> {
        Ok(Providers {
            text: EmbeddingProvider::synthetic_text(text_dim, seed)?,
            image: EmbeddingProvider::synthetic_image(image_dim, mix64(seed ^ 0x1a6e))?,
        })
    }

    pub fn text_dim(&self) -> usize {
        self.text.dim()
    }

    pub fn image_dim(&self) -> usize {
        self.image.dim()
    }

    pub fn dim_of(&self, source: Source) -> usize {
        match source.modality() {
            Modality::Text => self.text_dim(),
            Modality::Image => self.image_dim(),
        }
    }
}

/// The four per-source features of one record. Absent sources are zero
/// vectors with their mask bit cleared.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurized {
    pub pc: FeatureVector,
    pub pi: FeatureVector,
    pub hb: FeatureVector,
    pub hi: FeatureVector,
    pub mask: PresenceMask,
}

impl Featurized {
    pub fn get(&self, source: Source) -> &FeatureVector {
        match source {
            Source::PostComment => &self.pc,
            Source::PostImage => &self.pi,
            Source::HomepageBio => &self.hb,
            Source::HomepageImage => &self.hi,
        }
    }
}

pub fn featurize(rec: &QuadrupleRecord, providers: &Providers) -> Result<Featurized> {
    rec.validate()?;
    let (td, id) = (providers.text_dim(), providers.image_dim());
    let text = |t: &Option<String>, source| match t {
        Some(t) => providers.text.embed_text(t, source),
        None => Ok(FeatureVector::zeros(td, source)),
    };
    let pc = text(&rec.pc_text, Source::PostComment)?;
    let hb = text(&rec.hb_text, Source::HomepageBio)?;
    let pi = match &rec.pi_ref {
        Some(r) => providers.image.embed_image(r, Source::PostImage)?,
        None => FeatureVector::zeros(id, Source::PostImage),
    };
    let hi_feats = rec
        .hi_refs
        .iter()
        .map(|r| providers.image.embed_image(r, Source::HomepageImage))
        .collect::<Result<Vec<_>>>()?;
    let hi = average_homepage(&hi_feats, id)?;
    Ok(Featurized {
        pc,
        pi,
        hb,
        hi,
        mask: rec.mask(),
    })
}
