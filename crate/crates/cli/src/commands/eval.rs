use std::io::Write;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, ValueEnum};
use serde::Serialize;
use weavelab_core::adversary::experiment::HELDOUT_STREAM;
use weavelab_core::adversary::{fooling_report, EvalPath};
use weavelab_core::Tensor3;

use super::{check_labels, emit_report, load_model, value_name, CmdError, CmdResult, DataArgs, Status};
use crate::format::load_t3b;
use crate::manifest::{Report, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathArg {
    /// Add the perturbation to each image explicitly.
    Direct,
    /// Weave it into the first convolution.
    Interleaved,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Model checkpoint (TCNN).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Perturbation (T3B, f64); zero when absent.
    #[arg(long)]
    pub perturbation: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PathArg::Direct)]
    pub path: PathArg,
    /// Seeds the synthetic corpus.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub(super) fn run(args: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let model = load_model(&args.model)?;
    let (c, h, w) = model.input_dims();
    let v = match &args.perturbation {
        Some(p) => {
            load_t3b(p).and_then(|t| t.into_f64()).map_err(|e| CmdError::Run(anyhow!("{}: {e}", p.display())))?
        }
        None => Tensor3::zeros(c, h, w)?,
    };
    let samples = args.data.load((c, h, w), model.num_classes(), args.seed, 600, HELDOUT_STREAM)?;
    check_labels(&samples, &model)?;
    let path = match args.path {
        PathArg::Direct => EvalPath::Direct,
        PathArg::Interleaved => EvalPath::Interleaved,
    };
    let report = fooling_report(&model, &samples, &v, path)?;

    let mut inputs = vec![args.model.display().to_string()];
    inputs.extend(args.perturbation.iter().map(|p| p.display().to_string()));
    inputs.extend(args.data.inputs());
    let manifest = RunManifest::from_args("eval", args.seed, args, inputs, None);
    emit_report(out, &Report::new(manifest, &report)?)?;
    writeln!(
        err,
        "eval ({}): fooling rate {:.3}, top-1 clean {:.3} -> perturbed {:.3} over {} samples",
        value_name(args.path),
        report.fooling_rate,
        report.top1_clean,
        report.top1_perturbed,
        report.n_samples
    )?;
    Ok(Status::Pass)
}
