use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::attack::uniform_noise;
use super::data::Sample;
use super::model::{Forward, TinyCnn};
use crate::error::{Error, Result};
use crate::interleave::attacked_conv;
use crate::tensor::{bit_stats, quantize, BitStats, QuantSpec, Tensor3};

/// How the perturbation reaches the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPath {
    /// The perturbation is added to the image before the first layer.
    Direct,
    /// The first convolution runs on the row-interleaved input with
    /// duplicated filter rows and doubled vertical stride; later layers are
    /// unchanged.
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoolingReport {
    /// Fraction of samples whose predicted label changed, regardless of ground truth.
    pub fooling_rate: f64,
    pub top1_clean: f64,
    pub top1_perturbed: f64,
    /// Present only with at least five classes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top5_clean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top5_perturbed: Option<f64>,
    pub n_samples: usize,
}

/// Forward pass on `x + v` through the chosen path. No clipping is applied:
/// the interleaved path never materializes `x + v`.
pub fn perturbed_forward(model: &TinyCnn, x: &Tensor3<f64>, v: &Tensor3<f64>, path: EvalPath) -> Result<Forward> {
    match path {
        EvalPath::Direct => model.forward(&x.add(v)?),
        EvalPath::Interleaved => {
            if x.dims() != model.input_dims() {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "model expects {:?}, got {:?}",
                    model.input_dims(),
                    x.dims()
                )));
            }
            model.forward_from_conv(attacked_conv(x, v, model.conv(), model.geometry())?)
        }
    }
}

fn in_top_k(logits: &[f64], label: usize, k: usize) -> bool {
    logits.iter().filter(|&&z| z > logits[label]).count() < k
}

/// Fooling report for one fixed perturbation shared by every sample.
pub fn fooling_report(model: &TinyCnn, data: &[Sample], v: &Tensor3<f64>, path: EvalPath) -> Result<FoolingReport> {
    fooling_report_with(model, data, path, |_, _| Ok(v.clone()))
}

/// Fooling report where `perturb(index, sample)` supplies each sample's perturbation.
pub fn fooling_report_with(
    model: &TinyCnn,
    data: &[Sample],
    path: EvalPath,
    mut perturb: impl FnMut(usize, &Sample) -> Result<Tensor3<f64>>,
) -> Result<FoolingReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let top5 = model.num_classes() >= 5;
    let (mut fooled, mut t1c, mut t1p, mut t5c, mut t5p) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (i, s) in data.iter().enumerate() {
        let clean = model.forward(&s.image)?;
        let v = perturb(i, s)?;
        let pert = perturbed_forward(model, &s.image, &v, path)?;
        fooled += usize::from(clean.prediction() != pert.prediction());
        t1c += usize::from(clean.prediction() == s.label);
        t1p += usize::from(pert.prediction() == s.label);
        if top5 {
            t5c += usize::from(in_top_k(&clean.logits, s.label, 5));
            t5p += usize::from(in_top_k(&pert.logits, s.label, 5));
        }
    }
    let n = data.len() as f64;
    Ok(FoolingReport {
        fooling_rate: fooled as f64 / n,
        top1_clean: t1c as f64 / n,
        top1_perturbed: t1p as f64 / n,
        top5_clean: top5.then(|| t5c as f64 / n),
        top5_perturbed: top5.then(|| t5p as f64 / n),
        n_samples: data.len(),
    })
}

/// Digitized footprint of a crafted perturbation versus high-magnitude
/// random noise of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitComparison {
    /// The perturbation on sign + 4-bit magnitude over the 8-bit pixel scale.
    pub perturbation: BitStats,
    pub random: Vec<RandomBits>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBits {
    /// Noise bound as a fraction of the image magnitude.
    pub relative_magnitude: f64,
    /// Sign + 8-bit magnitude digitization.
    pub stats: BitStats,
    /// `stats.total_nonzero_bits / perturbation.total_nonzero_bits` (absent when the perturbation is zero).
    pub bit_ratio: Option<f64>,
}

/// Compares set-bit counts of `v` against uniform noise at 50% and 100% of
/// the image magnitude, all on an 8-bit pixel scale with `image_max` ↦ 255.
pub fn noise_bit_comparison(v: &Tensor3<f64>, image_max: f64, seed: u64) -> Result<BitComparison> {
    let to_8bit = 255.0 / image_max;
    let scaled = v.map(|e| e * to_8bit);
    let perturbation = bit_stats(&quantize(&scaled, &QuantSpec::new(4, true, 1.0)?)?);
    let mut random = Vec::new();
    for (i, rel) in [0.5, 1.0].into_iter().enumerate() {
        let noise = uniform_noise(v.dims(), rel * 255.0, seed.wrapping_add(i as u64))?;
        let stats = bit_stats(&quantize(&noise, &QuantSpec::new(8, true, 1.0)?)?);
        let bit_ratio = (perturbation.total_nonzero_bits > 0)
            .then(|| stats.total_nonzero_bits as f64 / perturbation.total_nonzero_bits as f64);
        random.push(RandomBits { relative_magnitude: rel, stats, bit_ratio });
    }
    Ok(BitComparison { perturbation, random })
}
