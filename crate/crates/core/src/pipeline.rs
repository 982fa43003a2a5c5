//! Dataset → per-source features → fused classifier inputs → trained head.

use crate::classify::{self, ClassifierParams, DecisionFusion, Example, Metrics, TrainConfig};
use crate::embed::{featurize, Featurized, Providers, Source};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, Fuser, Protocol};
use crate::record::{validate_mask, Dataset, Label};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    pub feats: Featurized,
    pub label: Label,
}

pub fn featurize_dataset(ds: &Dataset, providers: &Providers) -> Result<Vec<LabeledFeatures>> {
    ds.records
        .iter()
        .map(|r| {
            Ok(LabeledFeatures {
                feats: featurize(r, providers)?,
                label: r.label,
            })
        })
        .collect()
}

/// Fused inputs for every record the fuser's protocol accepts; the second
/// value counts excluded records.
pub fn fused_examples(fuser: &Fuser, items: &[LabeledFeatures]) -> Result<(Vec<Example>, usize)> {
    let protocol = fuser.config().protocol;
    let mut examples = Vec::with_capacity(items.len());
    let mut excluded = 0;
    for item in items {
        let usable = if protocol == Protocol::Quadruple {
            validate_mask(item.feats.mask)
        } else {
            protocol.accepts(item.feats.mask)
        };
        if !usable {
            excluded += 1;
            continue;
        }
        examples.push(Example::new(fuser.input_vector(&item.feats)?, item.label));
    }
    Ok((examples, excluded))
}

/// Inputs for a single-source model, restricted to records where the
/// source is present.
pub fn single_source_examples(source: Source, items: &[LabeledFeatures]) -> Vec<Example> {
    items
        .iter()
        .filter(|i| source.is_present(i.feats.mask))
        .map(|i| Example::new(i.feats.get(source).values().to_vec(), i.label))
        .collect()
}

/// Trains the fused-feature head. Every record must carry a fusible mask.
pub fn train(
    train_ds: &Dataset,
    cfg: &TrainConfig,
    fusion: &FusionConfig,
    providers: &Providers,
) -> Result<ClassifierParams> {
    if let Some(bad) = train_ds.records.iter().find(|r| !validate_mask(r.mask())) {
        return Err(Error::IntolerableMask(bad.mask()));
    }
    let fuser = Fuser::new(fusion.clone(), providers.text_dim(), providers.image_dim())?;
    let items = featurize_dataset(train_ds, providers)?;
    let (examples, _) = fused_examples(&fuser, &items)?;
    Ok(classify::train(&examples, cfg)?.params)
}

/// One head per source; a source with no training examples gets an all-zero
/// head, which always predicts 0.5.
pub fn train_decision_fusion(items: &[LabeledFeatures], cfg: &TrainConfig, weights: [f64; 4]) -> Result<DecisionFusion> {
    let mut models = Vec::with_capacity(4);
    for source in Source::ALL {
        let examples = single_source_examples(source, items);
        let params = if examples.is_empty() {
            let dim = items.first().map_or(1, |i| i.feats.get(source).dim());
            ClassifierParams::zeros(dim)
        } else {
            classify::train(&examples, cfg)?.params
        };
        models.push(params);
    }
    let models: [ClassifierParams; 4] = models.try_into().expect("four sources");
    DecisionFusion::new(models, weights)
}

pub fn evaluate_decision(model: &DecisionFusion, items: &[LabeledFeatures], threshold: f64) -> Result<Metrics> {
    let scored = items
        .iter()
        .map(|i| Ok((model.predict(&i.feats)?, i.label)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_scores(&scored, threshold))
}
