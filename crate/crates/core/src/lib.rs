//! Core data model and numerics for classifying social-media accounts from
//! quadruple multimodal evidence: posted comment (PC), posted image (PI),
//! homepage bio (HB) and homepage images (HI).
//!
//! The crate is organised bottom-up:
//!
//! - [`record`]: quadruple records, presence masks, datasets and their JSONL format.
//! - [`embed`]: pluggable embedding providers and homepage-image averaging.
//! - [`fusion`]: concatenation, bilinear pooling, tensor-sketch compact bilinear
//!   pooling and factorized bilinear coding, plus the pair/quadruple protocols.
//! - [`classify`]: softmax head, cross-entropy, Adam, training, metrics,
//!   decision-level fusion and model checkpoints.
//! - [`pipeline`]: dataset → features → fused inputs → trained head.
//! - [`synth`]: seeded synthetic record generator for desk-scale experiments.

pub mod classify;
pub mod embed;
pub mod error;
pub mod fusion;
pub mod pipeline;
pub mod record;
pub mod synth;

mod hash;

pub use error::{Error, Result};
pub use record::{Dataset, Label, PresenceMask, QuadrupleRecord};
