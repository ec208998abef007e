//! Tiny CNN with hand-written backpropagation, FGSM, universal perturbation
//! crafting, random-noise baselines and fooling metrics.

mod attack;
mod data;
pub mod experiment;
mod metrics;
mod model;
mod train;

pub use attack::{
    adversarial_sample, craft_uap, fgsm, random_noise, uniform_noise, NoiseMode, PerturbBudget, UapConfig, UapOutcome,
};
pub use data::{Pattern, Sample, SyntheticCorpus};
pub use experiment::{run_seed, ExperimentConfig, SeedOutcome};
pub use metrics::{
    fooling_report, fooling_report_with, noise_bit_comparison, perturbed_forward, BitComparison, EvalPath,
    FoolingReport, RandomBits,
};
pub use model::{argmax, cross_entropy, softmax, Architecture, Forward, Gradients, TinyCnn};
pub use train::{accuracy, train, train_with_history, TrainConfig};
