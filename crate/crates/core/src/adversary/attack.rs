//! Perturbation crafting: FGSM, universal perturbations and random baselines.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::model::TinyCnn;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// ℓ∞ budget of a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbBudget {
    pub epsilon: f64,
    /// Largest allowed `epsilon / image_max`.
    pub relative_cap: f64,
    /// Largest pixel magnitude of the images being perturbed.
    pub image_max: f64,
}

impl PerturbBudget {
    pub const DEFAULT_RELATIVE_CAP: f64 = 0.05;

    // Negated comparisons so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(epsilon: f64, relative_cap: f64, image_max: f64) -> Result<Self> {
        if !(image_max > 0.0 && image_max.is_finite()) || !(relative_cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "image_max and relative_cap must be positive, got {image_max}, {relative_cap}"
            )));
        }
        // A zero budget is allowed and yields zero perturbations.
        if !(epsilon >= 0.0) || epsilon > relative_cap * image_max * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} outside [0, {relative_cap} x {image_max}]"
            )));
        }
        Ok(Self { epsilon, relative_cap, image_max })
    }

    /// Budget for images normalized to `[0, 1]` under the default 5% cap.
    pub fn normalized(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, Self::DEFAULT_RELATIVE_CAP, 1.0)
    }
}

impl Default for PerturbBudget {
    fn default() -> Self {
        Self { epsilon: 0.05, relative_cap: Self::DEFAULT_RELATIVE_CAP, image_max: 1.0 }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ε · sign(∇ₓ J(θ, x, y))`.
pub fn fgsm(model: &TinyCnn, x: &Tensor3<f64>, y: usize, budget: &PerturbBudget) -> Result<Tensor3<f64>> {
    let g = model.backward(x, y)?;
    Ok(g.input.map(|v| budget.epsilon * sign(v)))
}

/// `x + η`, clipped to `[lo, hi]`.
pub fn adversarial_sample(x: &Tensor3<f64>, eta: &Tensor3<f64>, lo: f64, hi: f64) -> Result<Tensor3<f64>> {
    x.zip_with(eta, |a, b| (a + b).clamp(lo, hi))
}

fn project_linf(v: &mut Tensor3<f64>, epsilon: f64) {
    for e in v.data_mut() {
        *e = e.clamp(-epsilon, epsilon);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UapConfig {
    /// Maximum number of passes over the sample set.
    pub max_iters: usize,
    /// Size of each signed-gradient step before projection.
    pub step: f64,
    /// Crafting stops once the fooling rate on the sample set exceeds this.
    pub target_fooling_rate: f64,
}

impl UapConfig {
    /// Twenty passes, steps of `ε/10`, stop above 80% fooling.
    pub fn for_budget(budget: &PerturbBudget) -> Self {
        Self { max_iters: 20, step: budget.epsilon / 10.0, target_fooling_rate: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UapOutcome {
    pub perturbation: Tensor3<f64>,
    /// Fooling rate of `perturbation` on the crafting set.
    pub fooling_rate: f64,
    pub passes: usize,
    /// ℓ∞ norm after each projection; never exceeds ε.
    pub linf_trace: Vec<f64>,
}

/// Builds one perturbation `v` with `‖v‖∞ ≤ ε` that changes the model's
/// prediction on as many samples as possible.
///
/// Each pass visits the samples in order. Where `x + v` is still classified
/// like `x`, `v` takes a signed-gradient step that raises the loss of the
/// clean prediction at `x + v` and is projected back onto the ε-ball.
pub fn craft_uap(model: &TinyCnn, samples: &[Sample], budget: &PerturbBudget, cfg: &UapConfig) -> Result<UapOutcome> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (c, h, w) = model.input_dims();
    let mut v = Tensor3::zeros(c, h, w)?;
    let clean: Vec<usize> = samples.iter().map(|s| model.predict(&s.image)).collect::<Result<_>>()?;
    let mut linf_trace = Vec::new();
    let mut fooling_rate = fooling_on(model, samples, &clean, &v)?;
    let mut passes = 0;
    while passes < cfg.max_iters && fooling_rate <= cfg.target_fooling_rate {
        passes += 1;
        for (s, &y) in samples.iter().zip(&clean) {
            let xv = s.image.add(&v)?;
            if model.predict(&xv)? != y {
                continue;
            }
            let g = model.backward(&xv, y)?;
            for (vi, gi) in v.data_mut().iter_mut().zip(g.input.data()) {
                *vi += cfg.step * sign(*gi);
            }
            project_linf(&mut v, budget.epsilon);
            linf_trace.push(crate::tensor::linf_norm(&v));
        }
        fooling_rate = fooling_on(model, samples, &clean, &v)?;
    }
    Ok(UapOutcome { perturbation: v, fooling_rate, passes, linf_trace })
}

fn fooling_on(model: &TinyCnn, samples: &[Sample], clean: &[usize], v: &Tensor3<f64>) -> Result<f64> {
    let mut fooled = 0usize;
    for (s, &y) in samples.iter().zip(clean) {
        if model.predict(&s.image.add(v)?)? != y {
            fooled += 1;
        }
    }
    Ok(fooled as f64 / samples.len() as f64)
}

/// Amplitude regime of random-noise baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Bounded by the budget's ε.
    Low,
    /// Bounded by the image magnitude.
    High,
}

/// Uniform noise on `[-b, b]` with `b` chosen by `mode`.
pub fn random_noise(
    dims: (usize, usize, usize),
    budget: &PerturbBudget,
    mode: NoiseMode,
    seed: u64,
) -> Result<Tensor3<f64>> {
    let bound = match mode {
        NoiseMode::Low => budget.epsilon,
        NoiseMode::High => budget.image_max,
    };
    uniform_noise(dims, bound, seed)
}

/// Uniform noise on `[-bound, bound]`.
pub fn uniform_noise(dims: (usize, usize, usize), bound: f64, seed: u64) -> Result<Tensor3<f64>> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise bound must be >= 0, got {bound}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = dims;
    Tensor3::from_fn(c, h, w, |_, _, _| if bound == 0.0 { 0.0 } else { rng.gen_range(-bound..=bound) })
}
