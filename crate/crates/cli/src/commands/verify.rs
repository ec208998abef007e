use std::io::Write;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use weavelab_core::interleave::{equivalence_report_woven, interleave_rows};
use weavelab_core::{ConvGeometry, FilterBank, Scalar, Tensor3};

use super::{emit_line, emit_report, CmdResult, Status};
use crate::manifest::{sha256_hex, Report, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dtype {
    I32,
    F64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyArgs {
    /// Number of random instances (at least 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest image height/width.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(2..=256))]
    pub max_dim: u64,
    #[arg(long, value_enum, default_value_t = Dtype::I32)]
    pub dtype: Dtype,
    /// Corrupt one woven noise row per trial (negative control).
    #[arg(long)]
    pub sabotage: bool,
}

#[derive(Debug, Serialize)]
struct TrialLine {
    trial: u64,
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride_v: usize,
    stride_h: usize,
    max_abs_diff: f64,
    exact: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    trials: u64,
    dtype: Dtype,
    sabotage: bool,
    mismatches: u64,
    all_exact: bool,
    max_abs_diff: f64,
    /// SHA-256 of the per-trial JSONL lines, in trial order.
    trials_sha256: String,
}

struct Instance<T> {
    image: Tensor3<T>,
    noise: Tensor3<T>,
    filters: FilterBank<T>,
    geom: ConvGeometry,
}

/// Channels 1-3, H/W 2..=max_dim, kernels 1-4 (clamped to the image),
/// 1-3 filters, strides 1-2.
fn instance<T: Scalar>(
    rng: &mut ChaCha8Rng,
    max_dim: usize,
    mut pixel: impl FnMut(&mut ChaCha8Rng) -> T,
    mut noise: impl FnMut(&mut ChaCha8Rng) -> T,
    mut weight: impl FnMut(&mut ChaCha8Rng) -> T,
) -> Instance<T> {
    let c = rng.gen_range(1..=3);
    let h = rng.gen_range(2..=max_dim);
    let w = rng.gen_range(2..=max_dim);
    let kh = rng.gen_range(1..=4.min(h));
    let kw = rng.gen_range(1..=4.min(w));
    let o = rng.gen_range(1..=3);
    let geom = ConvGeometry::valid(rng.gen_range(1..=2), rng.gen_range(1..=2));
    let image = Tensor3::new(c, h, w, (0..c * h * w).map(|_| pixel(rng)).collect()).expect("positive dims");
    let noise = Tensor3::new(c, h, w, (0..c * h * w).map(|_| noise(rng)).collect()).expect("positive dims");
    let weights = (0..o * c * kh * kw).map(|_| weight(rng)).collect();
    let bias = (0..o).map(|_| weight(rng)).collect();
    let filters = FilterBank::new(o, c, kh, kw, weights, bias).expect("consistent filter dims");
    Instance { image, noise, filters, geom }
}

fn check<T: Scalar>(trial: u64, inst: Instance<T>, sabotage: Option<fn(T) -> T>) -> weavelab_core::Result<TrialLine> {
    let mut woven = interleave_rows(&inst.image, &inst.noise)?.woven;
    if let Some(flip) = sabotage {
        // Row 1 of channel 0 holds the noise for image row 0.
        for v in woven.row_mut(0, 1) {
            *v = flip(*v);
        }
    }
    let r = equivalence_report_woven(&woven, &inst.image, &inst.noise, &inst.filters, &inst.geom)?;
    let (c, h, w) = inst.image.dims();
    let (o, _, kh, kw) = inst.filters.dims();
    Ok(TrialLine {
        trial,
        channels: c,
        height: h,
        width: w,
        filters: o,
        kernel_h: kh,
        kernel_w: kw,
        stride_v: inst.geom.stride_v,
        stride_h: inst.geom.stride_h,
        max_abs_diff: r.max_abs_diff,
        exact: r.exact,
    })
}

pub(super) fn run(args: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let max_dim = args.max_dim as usize;
    let mut lines = Vec::new();
    let mut mismatches = 0u64;
    let mut max_abs_diff = 0.0f64;
    for trial in 0..args.trials {
        // One stream per trial keeps each instance independent of the others.
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(trial);
        let line = match args.dtype {
            Dtype::I32 => check(
                trial,
                instance(
                    &mut rng,
                    max_dim,
                    |r| r.gen_range(0..=255),
                    |r| r.gen_range(-15..=15),
                    |r| r.gen_range(-8..=8),
                ),
                args.sabotage.then_some((|v: i32| !v) as fn(i32) -> i32),
            )?,
            Dtype::F64 => check(
                trial,
                instance(
                    &mut rng,
                    max_dim,
                    |r| r.gen_range(0.0..1.0),
                    |r| r.gen_range(-0.05..=0.05),
                    |r| r.gen_range(-1.0..=1.0),
                ),
                args.sabotage.then_some((|v: f64| -v - 0.5) as fn(f64) -> f64),
            )?,
        };
        if !line.exact {
            mismatches += 1;
        }
        max_abs_diff = max_abs_diff.max(line.max_abs_diff);
        lines.extend(emit_line(out, &line)?);
    }
    let summary = Summary {
        trials: args.trials,
        dtype: args.dtype,
        sabotage: args.sabotage,
        mismatches,
        all_exact: mismatches == 0,
        max_abs_diff,
        trials_sha256: sha256_hex(&lines),
    };
    let manifest = RunManifest::from_args("verify-equivalence", args.seed, args, vec![], None);
    emit_report(out, &Report::new(manifest, &summary)?)?;
    writeln!(
        err,
        "verify-equivalence: {}/{} trials exact, max |diff| {:e}",
        args.trials - mismatches,
        args.trials,
        max_abs_diff
    )?;
    Ok(if mismatches == 0 { Status::Pass } else { Status::Fail })
}
