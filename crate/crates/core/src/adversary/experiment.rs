//! One seeded run of the fooling experiment on the synthetic corpus.

use serde::{Deserialize, Serialize};

use super::attack::{craft_uap, fgsm, random_noise, NoiseMode, PerturbBudget, UapConfig};
use super::data::SyntheticCorpus;
use super::metrics::{fooling_report, fooling_report_with, EvalPath, FoolingReport};
use super::model::{Architecture, TinyCnn};
use super::train::{accuracy, train, TrainConfig};
use crate::error::Result;
use crate::tensor::{linf_norm, Tensor3};

/// Corpus stream ids; each split is an independent draw from the same seed.
pub const TRAIN_STREAM: u64 = 0;
pub const CRAFT_STREAM: u64 = 1;
pub const HELDOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arch: Architecture,
    pub train_size: usize,
    pub craft_size: usize,
    pub heldout_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub epsilon: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            arch: Architecture::default(),
            train_size: 600,
            craft_size: 200,
            heldout_size: 600,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            epsilon: PerturbBudget::default().epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub uap_linf: f64,
    pub uap_craft_fooling_rate: f64,
    pub uap: FoolingReport,
    pub random_low: FoolingReport,
    pub fgsm: FoolingReport,
}

/// Seed for the random-noise draw of held-out sample `index`.
pub fn noise_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64
}

/// Trains a model from `seed`, crafts a universal perturbation on the
/// crafting split and compares it with matched-budget random noise and
/// per-sample FGSM on the held-out split.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(TinyCnn, Tensor3<f64>, SeedOutcome)> {
    let a = &cfg.arch;
    let corpus = SyntheticCorpus::new(a.input_channels, a.input_height, a.input_width, a.num_classes)?;
    let train_set = corpus.generate(cfg.train_size, seed, TRAIN_STREAM);
    let craft_set = corpus.generate(cfg.craft_size, seed, CRAFT_STREAM);
    let heldout = corpus.generate(cfg.heldout_size, seed, HELDOUT_STREAM);

    let tcfg = TrainConfig::new(cfg.learning_rate, cfg.epochs, cfg.batch_size, seed)?;
    let model = train(&TinyCnn::init(a, seed)?, &train_set, &tcfg)?;

    let budget = PerturbBudget::normalized(cfg.epsilon)?;
    let uap = craft_uap(&model, &craft_set, &budget, &UapConfig::for_budget(&budget))?;
    let dims = model.input_dims();
    let outcome = SeedOutcome {
        seed,
        train_accuracy: accuracy(&model, &train_set)?,
        heldout_accuracy: accuracy(&model, &heldout)?,
        uap_linf: linf_norm(&uap.perturbation),
        uap_craft_fooling_rate: uap.fooling_rate,
        uap: fooling_report(&model, &heldout, &uap.perturbation, EvalPath::Direct)?,
        random_low: fooling_report_with(&model, &heldout, EvalPath::Direct, |i, _| {
            random_noise(dims, &budget, NoiseMode::Low, noise_seed(seed, i))
        })?,
        fgsm: fooling_report_with(&model, &heldout, EvalPath::Direct, |_, s| fgsm(&model, &s.image, s.label, &budget))?,
    };
    Ok((model, uap.perturbation, outcome))
}
