use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use weavelab_core::adversary::experiment::TRAIN_STREAM;
use weavelab_core::adversary::{accuracy, train_with_history, Architecture, TinyCnn, TrainConfig};

use super::{emit_report, CmdError, CmdResult, DataArgs, Status, UsageExt};
use crate::dataset;
use crate::format::checkpoint_bytes;
use crate::manifest::{sha256_hex, Report, RunManifest};

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Seeds the synthetic corpus, weight init and minibatch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Classes of the synthetic corpus (taken from the labels with --data).
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 12)]
    pub height: usize,
    #[arg(long, default_value_t = 12)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub filters: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Checkpoint path (TCNN).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct TrainPayload {
    architecture: Architecture,
    samples: usize,
    train_accuracy: f64,
    loss_history: Vec<f64>,
    checkpoint_sha256: String,
}

pub(super) fn run(args: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let dims = (args.channels, args.height, args.width);
    let samples = args.data.load(dims, args.classes, args.seed, 600, TRAIN_STREAM)?;
    let (c, h, w) = dataset::dims(&samples);
    let classes = if args.data.data.is_some() { dataset::num_classes(&samples).max(2) } else { args.classes };
    let arch = Architecture {
        input_channels: c,
        input_height: h,
        input_width: w,
        filters: args.filters,
        kernel: args.kernel,
        stride: args.stride,
        num_classes: classes,
    };
    let cfg = TrainConfig::new(args.learning_rate, args.epochs, args.batch_size, args.seed).usage()?;
    let init = TinyCnn::init(&arch, args.seed).usage()?;
    let (model, loss_history) = train_with_history(&init, &samples, &cfg)?;
    let bytes = checkpoint_bytes(&model).map_err(|e| CmdError::Run(e.into()))?;
    std::fs::write(&args.out, &bytes)?;

    let payload = TrainPayload {
        architecture: arch,
        samples: samples.len(),
        train_accuracy: accuracy(&model, &samples)?,
        loss_history,
        checkpoint_sha256: sha256_hex(&bytes),
    };
    let manifest =
        RunManifest::from_args("train", args.seed, args, args.data.inputs(), Some(args.out.display().to_string()));
    emit_report(out, &Report::new(manifest, &payload)?)?;
    writeln!(
        err,
        "train: {} samples, {} epochs, final loss {:.4}, train accuracy {:.3} -> {}",
        payload.samples,
        args.epochs,
        payload.loss_history.last().copied().unwrap_or(f64::NAN),
        payload.train_accuracy,
        args.out.display()
    )?;
    Ok(Status::Pass)
}
