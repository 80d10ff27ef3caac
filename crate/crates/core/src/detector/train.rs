//! Mini-batch Adam on the mean cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Architecture, DetectorModel, Label, LabeledExample, Params};
use crate::error::{invalid, Error, Result};
use crate::signals::stream;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 128, learning_rate: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Running mean of the training-mode mini-batch loss over the epoch.
    pub train_loss: f64,
    /// Running training-mode accuracy over the epoch.
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.history.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Inference-mode mean loss and accuracy over `examples`.
pub fn evaluate(model: &DetectorModel, examples: &[LabeledExample]) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::InvalidDataset("nothing to evaluate".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for ex in examples {
        let p = model.forward(&ex.input)?;
        loss -= p[ex.label.index()].max(f64::MIN_POSITIVE).ln();
        if Label::from_probs(p) == ex.label {
            correct += 1;
        }
    }
    let n = examples.len() as f64;
    Ok(Evaluation { loss: loss / n, accuracy: correct as f64 / n })
}

fn check_dataset(arch: &Architecture, train: &[LabeledExample]) -> Result<()> {
    let signals = train.iter().filter(|e| e.label == Label::Signal).count();
    if signals == 0 || signals == train.len() {
        return Err(Error::InvalidDataset("training data must contain both classes".into()));
    }
    if let Some(bad) = train.iter().find(|e| e.input.frame_len() != arch.frame_len) {
        return Err(invalid(format!(
            "example has {} samples, architecture expects {}",
            bad.input.frame_len(),
            arch.frame_len
        )));
    }
    Ok(())
}

/// Trains a fresh detector. Deterministic given `cfg.seed`.
pub fn train(
    arch: Architecture,
    dropout_rate: f64,
    train: &[LabeledExample],
    validation: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(DetectorModel, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    check_dataset(&arch, train)?;

    let mut model = DetectorModel::init(arch, dropout_rate, &mut stream(cfg.seed, &[0]))?;
    let mut first = Params::zeros(&arch);
    let mut second = Params::zeros(&arch);
    let mut grads = Params::zeros(&arch);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut dropout_rng = stream(cfg.seed, &[1]);
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut stream(cfg.seed, &[2, epoch as u64]));
        let (mut epoch_loss, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            grads.fill(0.0);
            for &i in batch {
                let ex = &train[i];
                let (loss, probs) = model.accumulate(&ex.input, ex.label, Some(&mut dropout_rng), &mut grads);
                epoch_loss += loss;
                correct += usize::from(Label::from_probs(probs) == ex.label);
            }
            step += 1;
            let scale = 1.0 / batch.len() as f64;
            let lr_t = cfg.learning_rate * (1.0 - BETA2.powi(step)).sqrt() / (1.0 - BETA1.powi(step));
            for (((w, g), m), v) in model
                .params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(first.tensors_mut())
                .zip(second.tensors_mut())
            {
                for i in 0..w.len() {
                    let g = g[i] * scale;
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                    w[i] -= lr_t * m[i] / (v[i].sqrt() + ADAM_EPS);
                }
            }
        }
        if !model.params.all_finite() {
            return Err(Error::InvalidArgument(format!("training diverged in epoch {epoch}")));
        }
        let val = if validation.is_empty() { None } else { Some(evaluate(&model, validation)?) };
        report.history.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            validation_loss: val.map(|v| v.loss),
            validation_accuracy: val.map(|v| v.accuracy),
        });
    }
    Ok((model, report))
}
