use rand::seq::SliceRandom;
use serde::Serialize;

use super::metrics::Metrics;
use super::model::{argmax, FusionModel};
use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_batch, AdamConfig, Mode};
use crate::noise::RngSeed;

/// One labelled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: EmotionClass,
}

impl Example {
    pub fn new(features: Vec<f64>, label: EmotionClass) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: RngSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub validation_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }
}

/// Minibatch boundaries; a trailing batch of one is merged into the previous
/// batch because batch normalization needs at least two rows.
fn batches(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        out.push(start..end);
        start = end;
    }
    if out.len() > 1 && out.last().map_or(false, |r| r.len() == 1) {
        let last = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").end = last.end;
    }
    out
}

/// Trains `model` in place with shuffled minibatch Adam on cross-entropy.
/// Input statistics are fitted on `train` first unless already fitted.
pub fn train(
    model: &mut FusionModel,
    train: &[Example],
    validation: Option<&[Example]>,
    config: &TrainConfig,
) -> Result<History> {
    if train.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::param("epochs and batch size must be positive"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::param("learning rate must be positive"));
    }
    let first = train[0].label;
    if train.iter().all(|e| e.label == first) {
        return Err(Error::param("training needs at least two classes"));
    }
    if train.len() < 2 {
        return Err(Error::param("training needs at least two examples"));
    }
    if !model.is_fitted() {
        let refs: Vec<&[f64]> = train.iter().map(|e| e.features.as_slice()).collect();
        model.fit_standardizer(&refs)?;
    }
    model.store_mut().set_adam(AdamConfig::default());

    let mut rng = config.seed.derive(0xBA7C).rng();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        model.reseed_dropout(config.seed.derive(epoch as u64 + 1));
        let mut loss_sum = 0.0;
        for range in batches(order.len(), config.batch_size) {
            let idx = &order[range];
            let batch: Vec<&[f64]> = idx.iter().map(|&i| train[i].features.as_slice()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train[i].label.code()).collect();
            model.store_mut().zero_grad();
            let logits = model.forward(&batch, Mode::Train)?;
            let (loss, grad) = cross_entropy_batch(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            model.backward(&grad)?;
            model.store_mut().adam_step(config.learning_rate);
            loss_sum += loss * idx.len() as f64;
        }
        // Accuracy in evaluation mode, so dropout noise does not blur it.
        let train_metrics = evaluate(model, train)?;
        let validation_metrics = match validation {
            Some(v) if !v.is_empty() => Some(evaluate(model, v)?),
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: train_metrics.accuracy,
            validation_accuracy: validation_metrics.as_ref().map(|m| m.accuracy),
            validation_f1: validation_metrics.as_ref().map(|m| m.macro_f1),
        });
    }
    Ok(history)
}

/// Eval-mode predictions for a dataset.
pub fn predict_all(model: &FusionModel, data: &[Example]) -> Result<Vec<EmotionClass>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(64) {
        let batch: Vec<&[f64]> = chunk.iter().map(|e| e.features.as_slice()).collect();
        let logits = model.logits(&batch)?;
        for b in 0..chunk.len() {
            out.push(EmotionClass::from_code(argmax(logits.row(b)))?);
        }
    }
    Ok(out)
}

pub fn evaluate(model: &FusionModel, data: &[Example]) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::param("evaluation set is empty"));
    }
    let predicted = predict_all(model, data)?;
    let pairs: Vec<_> = data.iter().map(|e| e.label).zip(predicted).collect();
    Metrics::from_pairs(&pairs)
}
