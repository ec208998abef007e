use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use clap::{Args, ValueEnum};
use serde::Serialize;
use weavelab_core::{
    compare_attack_footprint, AttackFootprint, ConvGeometry, CountSummary, FilterBank, Scalar, SimReport,
    SystolicConfig, Tensor3,
};

use super::{emit_line, emit_report, CmdError, CmdResult, Status, UsageExt};
use crate::dataset::t3b_files;
use crate::format::{load_t3b, AnyTensor};
use crate::manifest::{sha256_hex, Report, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Input image (T3B).
    #[arg(long, required_unless_present = "corpus")]
    pub image: Option<PathBuf>,
    /// Noise pattern with the image's dims (T3B, same dtype).
    #[arg(long)]
    pub noise: PathBuf,
    /// Filters as a T3B of (out x in) kernel planes; `in` is the image channel count.
    #[arg(long)]
    pub filters: PathBuf,
    /// Array size: "tpu" (256x256), "small" (8x8) or ROWSxCOLS.
    #[arg(long, default_value = "small", value_parser = parse_config)]
    pub config: String,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub zero_skip: Toggle,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride_v: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride_h: u64,
    /// Directory of T3B images; emits one JSONL line per image and a distribution summary.
    #[arg(long, conflicts_with = "image")]
    pub corpus: Option<PathBuf>,
}

fn array_dims(s: &str) -> Result<(usize, usize), String> {
    match s {
        "tpu" => Ok((256, 256)),
        "small" => Ok((8, 8)),
        _ => {
            let (r, c) = s.split_once('x').ok_or_else(|| format!("expected tpu, small or RxC, got {s:?}"))?;
            let parse = |v: &str| v.parse::<usize>().ok().filter(|&v| v > 0).ok_or(format!("bad array size {s:?}"));
            Ok((parse(r)?, parse(c)?))
        }
    }
}

fn parse_config(s: &str) -> Result<String, String> {
    array_dims(s).map(|_| s.to_string())
}

#[derive(Debug, Serialize)]
struct ArrayInfo {
    rows: usize,
    cols: usize,
    zero_skip: bool,
}

#[derive(Debug, Serialize)]
struct Single {
    config: ArrayInfo,
    clean: SimReport,
    attacked: SimReport,
    noise_only: SimReport,
    issued_ratio: f64,
    extra_executed: u64,
}

#[derive(Debug, Serialize)]
struct ImageLine {
    index: usize,
    file: String,
    clean: SimReport,
    attacked: SimReport,
    noise_only: SimReport,
}

#[derive(Debug, Serialize)]
struct CorpusSummary {
    config: ArrayInfo,
    images: usize,
    clean_executed: Option<CountSummary>,
    attacked_executed: Option<CountSummary>,
    /// Attacked images whose executed-MAC count lies within the clean [min, max].
    attacked_within_clean_range: usize,
    lines_sha256: String,
}

fn load(path: &Path) -> Result<AnyTensor, CmdError> {
    load_t3b(path).map_err(|e| anyhow!("{}: {e}", path.display())).usage()
}

fn filter_bank<T: Scalar>(planes: Tensor3<T>, in_channels: usize) -> Result<FilterBank<T>, CmdError> {
    let (n, kh, kw) = planes.dims();
    if n % in_channels != 0 {
        return Err(CmdError::Usage(anyhow!("{n} filter planes not divisible by {in_channels} image channels")));
    }
    FilterBank::without_bias(n / in_channels, in_channels, kh, kw, planes.into_data()).usage()
}

/// Image, noise and filters with a shared element type.
enum Operands {
    F64(Tensor3<f64>, FilterBank<f64>),
    I32(Tensor3<i32>, FilterBank<i32>),
}

fn operands(noise: AnyTensor, filters: AnyTensor) -> Result<Operands, CmdError> {
    let in_c = noise.dims().0;
    match (noise, filters) {
        (AnyTensor::F64(n), AnyTensor::F64(f)) => Ok(Operands::F64(n, filter_bank(f, in_c)?)),
        (AnyTensor::I32(n), AnyTensor::I32(f)) => Ok(Operands::I32(n, filter_bank(f, in_c)?)),
        (n, f) => Err(CmdError::Usage(anyhow!("noise is {} but filters are {}", n.dtype_name(), f.dtype_name()))),
    }
}

fn footprint(
    image: AnyTensor,
    ops: &Operands,
    geom: &ConvGeometry,
    cfg: &SystolicConfig,
) -> anyhow::Result<AttackFootprint> {
    Ok(match (image, ops) {
        (AnyTensor::F64(x), Operands::F64(n, f)) => compare_attack_footprint(&x, n, f, geom, cfg)?,
        (AnyTensor::I32(x), Operands::I32(n, f)) => compare_attack_footprint(&x, n, f, geom, cfg)?,
        (x, _) => bail!("image is {} but noise and filters are not", x.dtype_name()),
    })
}

pub(super) fn run(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let (rows, cols) = array_dims(&args.config).map_err(|e| anyhow!(e)).usage()?;
    let zero_skip = args.zero_skip == Toggle::On;
    let cfg = SystolicConfig::new(rows, cols, zero_skip).usage()?;
    let geom = ConvGeometry::valid(args.stride_v as usize, args.stride_h as usize);
    let ops = operands(load(&args.noise)?, load(&args.filters)?)?;
    let info = ArrayInfo { rows, cols, zero_skip };

    let mut inputs = vec![args.noise.display().to_string(), args.filters.display().to_string()];
    match (&args.image, &args.corpus) {
        (Some(image), _) => {
            inputs.insert(0, image.display().to_string());
            let fp = footprint(load(image)?, &ops, &geom, &cfg).usage()?;
            let payload = Single {
                config: info,
                issued_ratio: fp.issued_ratio(),
                extra_executed: fp.extra_executed(),
                clean: fp.clean,
                attacked: fp.attacked,
                noise_only: fp.noise_only,
            };
            let manifest = RunManifest::from_args("simulate", 0, args, inputs, None);
            emit_report(out, &Report::new(manifest, &payload)?)?;
            writeln!(
                err,
                "simulate: clean {} MACs issued / {} executed; attacked {} / {} ({:.3}x issued), {} cycles on {rows}x{cols}",
                payload.clean.mac_issued,
                payload.clean.mac_executed,
                payload.attacked.mac_issued,
                payload.attacked.mac_executed,
                payload.issued_ratio,
                payload.attacked.cycles,
            )?;
        }
        (None, Some(dir)) => {
            inputs.insert(0, dir.display().to_string());
            let files = t3b_files(dir).usage()?;
            let mut lines = Vec::new();
            let (mut clean, mut attacked) = (Vec::new(), Vec::new());
            for (index, file) in files.iter().enumerate() {
                let fp = footprint(load(file)?, &ops, &geom, &cfg)
                    .map_err(|e| anyhow!("{}: {e}", file.display()))
                    .usage()?;
                clean.push(fp.clean.mac_executed);
                attacked.push(fp.attacked.mac_executed);
                let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let line =
                    ImageLine { index, file: name, clean: fp.clean, attacked: fp.attacked, noise_only: fp.noise_only };
                lines.extend(emit_line(out, &line)?);
            }
            let clean_executed = CountSummary::from_counts(&clean);
            let within = clean_executed.map_or(0, |s| attacked.iter().filter(|&&a| s.contains(a)).count());
            let payload = CorpusSummary {
                config: info,
                images: files.len(),
                clean_executed,
                attacked_executed: CountSummary::from_counts(&attacked),
                attacked_within_clean_range: within,
                lines_sha256: sha256_hex(&lines),
            };
            let manifest = RunManifest::from_args("simulate", 0, args, inputs, None);
            emit_report(out, &Report::new(manifest, &payload)?)?;
            match (&payload.clean_executed, &payload.attacked_executed) {
                (Some(c), Some(a)) => writeln!(
                    err,
                    "simulate: {} images; clean executed mean {:.1} (var {:.1}, {}..{}), attacked mean {:.1}; {} attacked within clean range",
                    payload.images, c.mean, c.variance, c.min, c.max, a.mean, within
                )?,
                _ => writeln!(err, "simulate: corpus {} holds no .t3b images", dir.display())?,
            }
        }
        (None, None) => return Err(CmdError::Usage(anyhow!("either --image or --corpus is required"))),
    }
    Ok(Status::Pass)
}
