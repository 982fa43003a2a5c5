//! Two-class softmax head trained with cross-entropy and Adam.

pub mod checkpoint;
pub mod decision;
pub mod metrics;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::Label;
pub use decision::DecisionFusion;
pub use metrics::{Confusion, Metrics};

/// Predicted probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`
/// inside the loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `−[c log ĉ + (1 − c) log(1 − ĉ)]`.
    #[default]
    BinaryCrossEntropy,
    /// `−c log ĉ`, the positive-class term only.
    PositiveOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub threshold: f64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 10,
            epochs: 50,
            seed: 0,
            threshold: 0.5,
            loss: LossKind::BinaryCrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(theta: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(theta.len(), grads.len(), "gradient shape must match parameters");
    assert_eq!(theta.len(), state.m.len(), "Adam state shape must match parameters");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..theta.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Softmax head parameters `θ = [W (dim_in × 2, row-major) | b (2)]` plus
/// Adam moments over θ.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    dim_in: usize,
    theta: Vec<f64>,
    pub adam: AdamState,
}

impl ClassifierParams {
    pub fn zeros(dim_in: usize) -> Self {
        let len = 2 * dim_in + 2;
        ClassifierParams {
            dim_in,
            theta: vec![0.0; len],
            adam: AdamState::new(len),
        }
    }

    /// `W ~ U[−0.01, 0.01]`, `b = 0`.
    pub fn init<R: Rng>(dim_in: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim_in);
        for w in &mut p.theta[..2 * dim_in] {
            *w = rng.gen_range(-0.01..=0.01);
        }
        p
    }

    pub fn from_theta(dim_in: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != 2 * dim_in + 2 {
            return Err(Error::DimMismatch {
                expected: 2 * dim_in + 2,
                found: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite classifier parameter".into()));
        }
        let adam = AdamState::new(theta.len());
        Ok(ClassifierParams { dim_in, theta, adam })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn weight(&self, i: usize, class: usize) -> f64 {
        self.theta[2 * i + class]
    }

    pub fn bias(&self) -> [f64; 2] {
        let n = 2 * self.dim_in;
        [self.theta[n], self.theta[n + 1]]
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.dim_in {
            return Err(Error::DimMismatch {
                expected: self.dim_in,
                found: x.len(),
            });
        }
        let [mut z0, mut z1] = self.bias();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                z0 += xi * self.theta[2 * i];
                z1 += xi * self.theta[2 * i + 1];
            }
        }
        Ok([z0, z1])
    }

    /// Class-1 softmax probability.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(softmax_positive(self.logits(x)?))
    }

    pub fn apply_adam(&mut self, grads: &[f64], cfg: &TrainConfig) {
        adam_step(&mut self.theta, grads, &mut self.adam, cfg);
    }
}

/// `softmax(z)[1]`, stabilized by subtracting the larger logit.
pub fn softmax_positive(z: [f64; 2]) -> f64 {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    e1 / (e0 + e1)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean loss over `(ĉ, c)` pairs.
pub fn loss(batch: &[(f64, Label)], kind: LossKind) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|&(p, c)| {
            let p = clamp_prob(p);
            let c = c.as_f64();
            match kind {
                LossKind::BinaryCrossEntropy => -(c * p.ln() + (1.0 - c) * (1.0 - p).ln()),
                LossKind::PositiveOnly => -c * p.ln(),
            }
        })
        .sum();
    total / batch.len() as f64
}

/// A fixed-length input with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub label: Label,
}

impl Example {
    pub fn new(input: Vec<f64>, label: Label) -> Self {
        Example { input, label }
    }
}

pub fn batch_loss(params: &ClassifierParams, batch: &[&Example], kind: LossKind) -> Result<f64> {
    let preds = batch
        .iter()
        .map(|e| Ok((params.forward(&e.input)?, e.label)))
        .collect::<Result<Vec<_>>>()?;
    Ok(loss(&preds, kind))
}

/// Analytic gradient of the mean batch loss with respect to θ. Exact away
/// from the probability clamp.
pub fn loss_gradient(params: &ClassifierParams, batch: &[&Example], kind: LossKind) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.theta.len()];
    if batch.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / batch.len() as f64;
    let n = 2 * params.dim_in;
    for e in batch {
        let p = params.forward(&e.input)?;
        let c = e.label.as_f64();
        // dL/dz1; dL/dz0 is its negation for a two-way softmax.
        let dz1 = match kind {
            LossKind::BinaryCrossEntropy => p - c,
            LossKind::PositiveOnly => -c * (1.0 - p),
        } * scale;
        for (i, &xi) in e.input.iter().enumerate() {
            if xi != 0.0 {
                grad[2 * i] -= xi * dz1;
                grad[2 * i + 1] += xi * dz1;
            }
        }
        grad[n] -= dz1;
        grad[n + 1] += dz1;
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub params: ClassifierParams,
    /// Mean training loss measured after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam over seeded per-epoch shuffles.
pub fn train(examples: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let first = examples.first().ok_or(Error::EmptyTrainSet)?;
    let dim = first.input.len();
    if let Some(bad) = examples.iter().find(|e| e.input.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.input.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ClassifierParams::init(dim, &mut rng);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let all: Vec<&Example> = examples.iter().collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let grad = loss_gradient(&params, &batch, cfg.loss)?;
            params.apply_adam(&grad, cfg);
        }
        epoch_losses.push(batch_loss(&params, &all, cfg.loss)?);
    }
    Ok(TrainReport { params, epoch_losses })
}

pub fn predict(params: &ClassifierParams, examples: &[Example]) -> Result<Vec<(f64, Label)>> {
    examples
        .iter()
        .map(|e| Ok((params.forward(&e.input)?, e.label)))
        .collect()
}

pub fn evaluate(params: &ClassifierParams, examples: &[Example], threshold: f64) -> Result<Metrics> {
    Ok(Metrics::from_scores(&predict(params, examples)?, threshold))
}
