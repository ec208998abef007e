use std::io::Write;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, ValueEnum};
use serde::Serialize;
use weavelab_core::adversary::experiment::CRAFT_STREAM;
use weavelab_core::adversary::{
    craft_uap, fgsm, noise_bit_comparison, random_noise, BitComparison, NoiseMode, PerturbBudget, UapConfig,
};
use weavelab_core::{bit_stats, linf_norm, quantize, BitStats, QuantSpec};

use super::{check_labels, emit_report, load_model, value_name, CmdError, CmdResult, DataArgs, Status, UsageExt};
use crate::format::{t3b_bytes, AnyTensor};
use crate::manifest::{sha256_hex, Report, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CraftMethod {
    /// Universal perturbation over the crafting set.
    Uap,
    /// Single-sample fast gradient sign step.
    Fgsm,
    /// Uniform noise bounded by epsilon.
    RandomLow,
    /// Uniform noise bounded by the image magnitude.
    RandomHigh,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CraftArgs {
    /// Model checkpoint (TCNN).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = CraftMethod::Uap)]
    pub method: CraftMethod,
    /// ℓ∞ budget on images normalized to [0, 1]; at most 0.05.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample attacked by --method fgsm.
    #[arg(long, default_value_t = 0)]
    pub sample_index: usize,
    /// UAP passes over the crafting set (default 20).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// UAP step size (default epsilon / 10).
    #[arg(long)]
    pub step: Option<f64>,
    /// Perturbation path (T3B, f64).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct CraftPayload {
    method: CraftMethod,
    epsilon: f64,
    dims: (usize, usize, usize),
    linf: f64,
    /// UAP only: fooling rate on the crafting set and passes used.
    craft_fooling_rate: Option<f64>,
    passes: Option<usize>,
    /// Perturbation on the 8-bit pixel scale, sign + 8-bit magnitude.
    bit_stats: BitStats,
    /// Present when the perturbation fits sign + 4 bits.
    bit_comparison: Option<BitComparison>,
    perturbation_sha256: String,
}

pub(super) fn run(args: &CraftArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let model = load_model(&args.model)?;
    let budget = PerturbBudget::normalized(args.epsilon).usage()?;
    let dims = model.input_dims();
    let mut craft_fooling_rate = None;
    let mut passes = None;
    let v = match args.method {
        CraftMethod::Uap => {
            let samples = args.data.load(dims, model.num_classes(), args.seed, 200, CRAFT_STREAM)?;
            check_labels(&samples, &model)?;
            let mut cfg = UapConfig::for_budget(&budget);
            if let Some(n) = args.max_iters {
                cfg.max_iters = n;
            }
            if let Some(s) = args.step {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(CmdError::Usage(anyhow!("--step must be positive, got {s}")));
                }
                cfg.step = s;
            }
            let o = craft_uap(&model, &samples, &budget, &cfg)?;
            craft_fooling_rate = Some(o.fooling_rate);
            passes = Some(o.passes);
            o.perturbation
        }
        CraftMethod::Fgsm => {
            let samples = args.data.load(dims, model.num_classes(), args.seed, 200, CRAFT_STREAM)?;
            check_labels(&samples, &model)?;
            let s = samples.get(args.sample_index).ok_or_else(|| {
                CmdError::Usage(anyhow!(
                    "--sample-index {} out of range for {} samples",
                    args.sample_index,
                    samples.len()
                ))
            })?;
            fgsm(&model, &s.image, s.label, &budget)?
        }
        CraftMethod::RandomLow => random_noise(dims, &budget, NoiseMode::Low, args.seed)?,
        CraftMethod::RandomHigh => random_noise(dims, &budget, NoiseMode::High, args.seed)?,
    };

    let bytes = t3b_bytes(&AnyTensor::F64(v.clone()));
    std::fs::write(&args.out, &bytes)?;
    let stats = bit_stats(&quantize(&v, &QuantSpec::noise_on_8bit(8)?)?);
    let payload = CraftPayload {
        method: args.method,
        epsilon: args.epsilon,
        dims,
        linf: linf_norm(&v),
        craft_fooling_rate,
        passes,
        bit_stats: stats,
        bit_comparison: noise_bit_comparison(&v, budget.image_max, args.seed).ok(),
        perturbation_sha256: sha256_hex(&bytes),
    };
    let mut inputs = vec![args.model.display().to_string()];
    inputs.extend(args.data.inputs());
    let manifest = RunManifest::from_args("craft", args.seed, args, inputs, Some(args.out.display().to_string()));
    emit_report(out, &Report::new(manifest, &payload)?)?;
    write!(
        err,
        "craft: {} perturbation, linf {:.4}, max {} magnitude bits on the 8-bit scale",
        value_name(args.method),
        payload.linf,
        stats.max_magnitude_bits
    )?;
    if let Some(fr) = craft_fooling_rate {
        write!(err, ", crafting-set fooling rate {fr:.3}")?;
    }
    writeln!(err, " -> {}", args.out.display())?;
    Ok(Status::Pass)
}
