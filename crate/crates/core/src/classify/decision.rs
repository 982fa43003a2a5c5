//! Late fusion: a linear weighting of four single-source classifiers.

use crate::classify::ClassifierParams;
use crate::embed::{Featurized, Source};
use crate::error::{Error, Result};

pub const DEFAULT_WEIGHTS: [f64; 4] = [0.25; 4];

/// Probability used for a source that is missing from a record.
pub const MISSING_PROBABILITY: f64 = 0.5;

pub fn validate_weights(weights: &[f64; 4]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::BadWeights(format!("weights must be finite and ≥ 0: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadWeights(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// `Σ wᵢ ĉᵢ`, with `None` standing for a missing source.
pub fn decision_fuse(probs: [Option<f64>; 4], weights: &[f64; 4]) -> Result<f64> {
    validate_weights(weights)?;
    Ok(probs
        .iter()
        .zip(weights)
        .map(|(p, w)| w * p.unwrap_or(MISSING_PROBABILITY))
        .sum())
}

/// Models are ordered as [`Source::ALL`]: PI, PC, HB, HI.
#[derive(Clone, Debug)]
pub struct DecisionFusion {
    models: [ClassifierParams; 4],
    weights: [f64; 4],
}

impl DecisionFusion {
    pub fn new(models: [ClassifierParams; 4], weights: [f64; 4]) -> Result<Self> {
        validate_weights(&weights)?;
        Ok(DecisionFusion { models, weights })
    }

    pub fn weights(&self) -> &[f64; 4] {
        &self.weights
    }

    pub fn model(&self, source: Source) -> &ClassifierParams {
        let i = Source::ALL.iter().position(|&s| s == source).expect("ALL lists every source");
        &self.models[i]
    }

    pub fn predict(&self, feats: &Featurized) -> Result<f64> {
        let mut probs = [None; 4];
        for (slot, (source, model)) in probs.iter_mut().zip(Source::ALL.iter().zip(&self.models)) {
            if source.is_present(feats.mask) {
                *slot = Some(model.forward(feats.get(*source).values())?);
            }
        }
        decision_fuse(probs, &self.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighting_examples() {
        let p = [Some(0.9), Some(0.9), Some(0.1), Some(0.1)];
        assert!((decision_fuse(p, &DEFAULT_WEIGHTS).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(decision_fuse([Some(0.8), Some(0.1), None, None], &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.8);
        assert_eq!(DEFAULT_WEIGHTS, [0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn missing_sources_are_neutral() {
        let v = decision_fuse([Some(1.0), None, None, None], &DEFAULT_WEIGHTS).unwrap();
        assert!((v - (0.25 + 0.75 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn bad_weights() {
        assert!(decision_fuse([None; 4], &[0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(decision_fuse([None; 4], &[0.3, 0.3, 0.3, 0.3]).is_err());
    }
}
