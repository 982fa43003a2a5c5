//! Feature-level fusion strategies and protocols.
//!
//! Pair fusion tolerates one missing element: the present vector passes
//! through unchanged. Because that makes fused lengths depend on the mask,
//! every [`FusedFeature`] carries its [`Segment`] structure and an
//! [`InputLayout`] places segments into fixed classifier-input slots.

pub mod bilinear;
pub mod fbc;
pub mod sketch;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::{Featurized, FeatureVector, Source};
use crate::error::{Error, Result};
use crate::hash::mix64;
use crate::record::{validate_mask, PresenceMask};
pub use fbc::FbcDictionary;
pub use sketch::TensorSketch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Concat,
    Bilinear,
    CompactBilinear,
    Fbc,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Concat,
        Strategy::Bilinear,
        Strategy::CompactBilinear,
        Strategy::Fbc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Concat => "concat",
            Strategy::Bilinear => "bilinear",
            Strategy::CompactBilinear => "compact_bilinear",
            Strategy::Fbc => "fbc",
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Strategy::ALL.get(usize::from(id)).copied()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown fusion strategy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    PostLevel,
    HomepageLevel,
    TextSource,
    ImageSource,
    Quadruple,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::PostLevel,
        Protocol::HomepageLevel,
        Protocol::TextSource,
        Protocol::ImageSource,
        Protocol::Quadruple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::PostLevel => "post_level",
            Protocol::HomepageLevel => "homepage_level",
            Protocol::TextSource => "text_source",
            Protocol::ImageSource => "image_source",
            Protocol::Quadruple => "quadruple",
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Protocol::ALL.get(usize::from(id)).copied()
    }

    /// Stage-one pairs, image-side element first where the pair mixes
    /// modalities.
    pub fn pairs(self) -> &'static [(Source, Source)] {
        use Source::*;
        match self {
            Protocol::PostLevel => &[(PostImage, PostComment)],
            Protocol::HomepageLevel => &[(HomepageImage, HomepageBio)],
            Protocol::TextSource => &[(PostComment, HomepageBio)],
            Protocol::ImageSource => &[(PostImage, HomepageImage)],
            Protocol::Quadruple => &[(PostImage, PostComment), (HomepageImage, HomepageBio)],
        }
    }

    /// A record is usable when every pair keeps at least one element.
    pub fn accepts(self, mask: PresenceMask) -> bool {
        self.pairs()
            .iter()
            .all(|&(a, b)| a.is_present(mask) || b.is_present(mask))
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown fusion protocol {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbcSpec {
    pub atoms: usize,
    pub rank: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for FbcSpec {
    fn default() -> Self {
        FbcSpec {
            atoms: 64,
            rank: 2,
            lambda: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub strategy: Strategy,
    pub protocol: Protocol,
    pub sketch_dim: usize,
    pub sketch_seed: u64,
    /// Signed square root + L2 normalization of bilinear descriptors.
    pub bilinear_normalize: bool,
    pub fbc: FbcSpec,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            strategy: Strategy::Concat,
            protocol: Protocol::Quadruple,
            sketch_dim: 1024,
            sketch_seed: 0,
            bilinear_normalize: true,
            fbc: FbcSpec::default(),
        }
    }
}

impl FusionConfig {
    pub fn new(strategy: Strategy, protocol: Protocol) -> Self {
        FusionConfig {
            strategy,
            protocol,
            ..FusionConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    /// Joint descriptor of a fully present pair.
    Joint(Source, Source),
    /// A single source's vector, either a concat block or a pass-through.
    Single(Source),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedFeature {
    pub values: Vec<f64>,
    pub segments: Vec<Segment>,
    pub strategy: Strategy,
    pub protocol: Option<Protocol>,
    pub mask_used: PresenceMask,
}

impl FusedFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn single(v: &FeatureVector, strategy: Strategy) -> Self {
        FusedFeature {
            values: v.values().to_vec(),
            segments: vec![Segment {
                kind: SegmentKind::Single(v.source()),
                len: v.dim(),
            }],
            strategy,
            protocol: None,
            mask_used: mask_of(&[v.source()]),
        }
    }

    fn joint(values: Vec<f64>, x: &FeatureVector, y: &FeatureVector, strategy: Strategy) -> Self {
        FusedFeature {
            segments: vec![Segment {
                kind: SegmentKind::Joint(x.source(), y.source()),
                len: values.len(),
            }],
            values,
            strategy,
            protocol: None,
            mask_used: mask_of(&[x.source(), y.source()]),
        }
    }

    fn append(&mut self, other: FusedFeature) {
        self.values.extend(other.values);
        self.segments.extend(other.segments);
        self.mask_used = union(self.mask_used, other.mask_used);
    }
}

fn mask_of(sources: &[Source]) -> PresenceMask {
    let mut m = PresenceMask::default();
    for s in sources {
        match s {
            Source::PostComment => m.pc = true,
            Source::PostImage => m.pi = true,
            Source::HomepageBio => m.hb = true,
            Source::HomepageImage => m.hi = true,
        }
    }
    m
}

fn union(a: PresenceMask, b: PresenceMask) -> PresenceMask {
    PresenceMask::new(a.pc || b.pc, a.pi || b.pi, a.hb || b.hb, a.hi || b.hi)
}

/// Order-preserving concatenation. Missing parts are expected to arrive as
/// zero vectors; `mask_used` records which parts were non-missing.
pub fn fuse_concat(parts: &[&FeatureVector]) -> Result<FusedFeature> {
    if parts.len() < 2 {
        return Err(Error::InvalidConfig("concatenation needs at least two parts".into()));
    }
    let mut out = FusedFeature::single(parts[0], Strategy::Concat);
    for p in &parts[1..] {
        out.append(FusedFeature::single(p, Strategy::Concat));
    }
    Ok(out)
}

/// Shared single-missing rule for the pooling strategies.
fn pair_or_passthrough(
    x: Option<&FeatureVector>,
    y: Option<&FeatureVector>,
    strategy: Strategy,
    joint: impl FnOnce(&FeatureVector, &FeatureVector) -> Result<Vec<f64>>,
) -> Result<FusedFeature> {
    match (x, y) {
        (Some(x), Some(y)) => Ok(FusedFeature::joint(joint(x, y)?, x, y, strategy)),
        (Some(v), None) | (None, Some(v)) => Ok(FusedFeature::single(v, strategy)),
        (None, None) => Err(Error::NoModality),
    }
}

/// `Z = x yᵀ` flattened row-major, optionally signed-sqrt + L2 normalized.
/// A missing input (`None`) yields the other input unchanged.
pub fn fuse_bilinear(x: Option<&FeatureVector>, y: Option<&FeatureVector>, normalize: bool) -> Result<FusedFeature> {
    pair_or_passthrough(x, y, Strategy::Bilinear, |x, y| {
        let mut z = bilinear::outer_product(x.values(), y.values());
        if normalize {
            bilinear::signed_sqrt_l2(&mut z);
        }
        Ok(z)
    })
}

pub fn fuse_compact_bilinear(
    x: Option<&FeatureVector>,
    y: Option<&FeatureVector>,
    sketch: &TensorSketch,
) -> Result<FusedFeature> {
    pair_or_passthrough(x, y, Strategy::CompactBilinear, |x, y| {
        sketch.sketch(x.values(), y.values())
    })
}

pub fn fbc_encode(dict: &FbcDictionary, x: Option<&FeatureVector>, y: Option<&FeatureVector>) -> Result<FusedFeature> {
    pair_or_passthrough(x, y, Strategy::Fbc, |x, y| dict.encode(x.values(), y.values()))
}

/// Per-pair fusion machinery, built once per (config, dims).
#[derive(Clone, Debug)]
enum PairFuser {
    Concat,
    Bilinear { normalize: bool },
    Compact(TensorSketch),
    Fbc(FbcDictionary),
}

impl PairFuser {
    fn joint_width(&self, p: usize, q: usize) -> usize {
        match self {
            PairFuser::Concat => p + q,
            PairFuser::Bilinear { .. } => p * q,
            PairFuser::Compact(s) => s.out_dim(),
            PairFuser::Fbc(d) => d.atoms(),
        }
    }
}

/// Fixed classifier-input slots for every segment a fuser can emit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputLayout {
    slots: Vec<(SegmentKind, usize, usize)>,
    dim: usize,
}

impl InputLayout {
    fn new(kinds: Vec<(SegmentKind, usize)>) -> Self {
        let mut offset = 0;
        let slots = kinds
            .into_iter()
            .map(|(kind, len)| {
                let slot = (kind, offset, len);
                offset += len;
                slot
            })
            .collect();
        InputLayout { slots, dim: offset }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn place(&self, fused: &FusedFeature) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        let mut cursor = 0;
        for seg in &fused.segments {
            let &(_, offset, len) = self
                .slots
                .iter()
                .find(|(kind, _, _)| *kind == seg.kind)
                .ok_or_else(|| Error::InvalidConfig(format!("no input slot for segment {:?}", seg.kind)))?;
            if len != seg.len {
                return Err(Error::DimMismatch {
                    expected: len,
                    found: seg.len,
                });
            }
            out[offset..offset + len].copy_from_slice(&fused.values[cursor..cursor + len]);
            cursor += len;
        }
        Ok(out)
    }
}

/// Applies one [`FusionConfig`] to featurized records.
#[derive(Clone, Debug)]
pub struct Fuser {
    config: FusionConfig,
    pair_fusers: Vec<PairFuser>,
    layout: InputLayout,
}

impl Fuser {
    pub fn new(config: FusionConfig, text_dim: usize, image_dim: usize) -> Result<Self> {
        let dim_of = |s: Source| match s.modality() {
            crate::embed::Modality::Text => text_dim,
            crate::embed::Modality::Image => image_dim,
        };
        let mut pair_fusers = Vec::new();
        let mut kinds = Vec::new();
        for (i, &(a, b)) in config.protocol.pairs().iter().enumerate() {
            let (p, q) = (dim_of(a), dim_of(b));
            let stream = mix64(i as u64 + 1);
            let fuser = match config.strategy {
                Strategy::Concat => PairFuser::Concat,
                Strategy::Bilinear => PairFuser::Bilinear {
                    normalize: config.bilinear_normalize,
                },
                Strategy::CompactBilinear => {
                    PairFuser::Compact(TensorSketch::new(p.max(q), config.sketch_dim, config.sketch_seed ^ stream)?)
                }
                Strategy::Fbc => PairFuser::Fbc(FbcDictionary::random(
                    p,
                    q,
                    config.fbc.atoms,
                    config.fbc.rank,
                    config.fbc.lambda,
                    config.fbc.seed ^ stream,
                )?),
            };
            if config.strategy == Strategy::Concat {
                kinds.push((SegmentKind::Single(a), p));
                kinds.push((SegmentKind::Single(b), q));
            } else {
                kinds.push((SegmentKind::Joint(a, b), fuser.joint_width(p, q)));
                kinds.push((SegmentKind::Single(a), p));
                kinds.push((SegmentKind::Single(b), q));
            }
            pair_fusers.push(fuser);
        }
        Ok(Fuser {
            config,
            pair_fusers,
            layout: InputLayout::new(kinds),
        })
    }

    /// Replaces the generated dictionaries with an externally supplied one.
    /// Every pair of the protocol must match its shape.
    pub fn with_dictionary(mut self, dict: FbcDictionary) -> Result<Self> {
        if self.config.strategy != Strategy::Fbc {
            return Err(Error::InvalidConfig("dictionary supplied for a non-fbc strategy".into()));
        }
        let mut kinds = Vec::new();
        for ((a, b), fuser) in self.config.protocol.pairs().iter().zip(self.pair_fusers.iter_mut()) {
            let (p, q) = match fuser {
                PairFuser::Fbc(d) => (d.p(), d.q()),
                _ => unreachable!("fbc strategy builds fbc pair fusers"),
            };
            if (p, q) != (dict.p(), dict.q()) {
                return Err(Error::DimMismatch {
                    expected: p * q,
                    found: dict.p() * dict.q(),
                });
            }
            *fuser = PairFuser::Fbc(dict.clone());
            kinds.push((SegmentKind::Joint(*a, *b), dict.atoms()));
            kinds.push((SegmentKind::Single(*a), p));
            kinds.push((SegmentKind::Single(*b), q));
        }
        self.layout = InputLayout::new(kinds);
        Ok(self)
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn layout(&self) -> &InputLayout {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.layout.dim()
    }

    fn fuse_pair(&self, fuser: &PairFuser, feats: &Featurized, a: Source, b: Source) -> Result<FusedFeature> {
        let pick = |s: Source| s.is_present(feats.mask).then(|| feats.get(s));
        match fuser {
            PairFuser::Concat => fuse_concat(&[feats.get(a), feats.get(b)]).map(|mut f| {
                f.mask_used = mask_of(&[a, b].into_iter().filter(|s| s.is_present(feats.mask)).collect::<Vec<_>>());
                f
            }),
            PairFuser::Bilinear { normalize } => fuse_bilinear(pick(a), pick(b), *normalize),
            PairFuser::Compact(sketch) => fuse_compact_bilinear(pick(a), pick(b), sketch),
            PairFuser::Fbc(dict) => fbc_encode(dict, pick(a), pick(b)),
        }
    }

    /// Stage one fuses each protocol pair; stage two concatenates the results.
    pub fn fuse(&self, feats: &Featurized) -> Result<FusedFeature> {
        let protocol = self.config.protocol;
        if protocol == Protocol::Quadruple && !validate_mask(feats.mask) {
            return Err(Error::IntolerableMask(feats.mask));
        }
        if !protocol.accepts(feats.mask) {
            return Err(Error::NoModality);
        }
        let mut out: Option<FusedFeature> = None;
        for (&(a, b), fuser) in protocol.pairs().iter().zip(&self.pair_fusers) {
            let stage = self.fuse_pair(fuser, feats, a, b)?;
            match out.as_mut() {
                Some(acc) => acc.append(stage),
                None => out = Some(stage),
            }
        }
        let mut out = out.expect("every protocol has at least one pair");
        out.strategy = self.config.strategy;
        out.protocol = Some(protocol);
        Ok(out)
    }

    pub fn input_vector(&self, feats: &Featurized) -> Result<Vec<f64>> {
        self.layout.place(&self.fuse(feats)?)
    }
}

/// Quadruple fusion of four feature vectors under `cfg`.
pub fn fuse_quadruple(
    pc: &FeatureVector,
    pi: &FeatureVector,
    hb: &FeatureVector,
    hi: &FeatureVector,
    mask: PresenceMask,
    cfg: &FusionConfig,
) -> Result<FusedFeature> {
    if !validate_mask(mask) {
        return Err(Error::IntolerableMask(mask));
    }
    let cfg = FusionConfig {
        protocol: Protocol::Quadruple,
        ..cfg.clone()
    };
    let fuser = Fuser::new(cfg, pc.dim(), pi.dim())?;
    let feats = Featurized {
        pc: pc.clone(),
        pi: pi.clone(),
        hb: hb.clone(),
        hi: hi.clone(),
        mask,
    };
    fuser.fuse(&feats)
}
