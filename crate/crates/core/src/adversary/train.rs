use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::model::{Gradients, TinyCnn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// A zero learning rate is accepted (it leaves the model untouched).
    pub fn new(learning_rate: f64, epochs: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        if epochs == 0 || batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch_size must be >= 1".into()));
        }
        Ok(Self { learning_rate, epochs, batch_size, seed })
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 25, batch_size: 8, seed: 0 }
    }
}

/// Minibatch SGD on mean cross-entropy: `w ← w − α·∂E/∂w`.
///
/// Sample order is reshuffled every epoch from `cfg.seed`, so a run is
/// reproducible bit-for-bit from `(seed, dataset)`.
pub fn train(model: &TinyCnn, data: &[Sample], cfg: &TrainConfig) -> Result<TinyCnn> {
    train_with_history(model, data, cfg).map(|(m, _)| m)
}

/// Like [`train`], also returning the mean training loss of each epoch.
pub fn train_with_history(model: &TinyCnn, data: &[Sample], cfg: &TrainConfig) -> Result<(TinyCnn, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut acc = Gradients::zeros_like(&model);
            for &i in batch {
                let s = &data[i];
                let g = model.backward(&s.image, s.label)?;
                acc.accumulate(&g, scale);
                epoch_loss += g.loss;
            }
            model.apply_step(&acc, cfg.learning_rate);
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok((model, history))
}

/// Fraction of samples whose prediction matches the label.
pub fn accuracy(model: &TinyCnn, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for s in data {
        if model.predict(&s.image)? == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
