//! Subcommands. Each writes data to `out` (JSONL lines, then one report
//! line) and a human summary to `err`.

mod craft;
mod eval;
mod replay;
mod simulate;
mod train;
mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use weavelab_core::adversary::{Sample, SyntheticCorpus, TinyCnn};

pub use craft::{CraftArgs, CraftMethod};
pub use eval::{EvalArgs, PathArg};
pub use replay::ReplayArgs;
pub use simulate::{SimulateArgs, Toggle};
pub use train::TrainArgs;
pub use verify::{Dtype, VerifyArgs};

use crate::dataset::load_labeled_dir;
use crate::format::load_checkpoint;
use crate::manifest::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "weavelab", version, about = "Noise-interleaving convolution attack laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the woven convolution against conv2d(image + noise) on random instances.
    VerifyEquivalence(VerifyArgs),
    /// Count clean and attacked MACs on a systolic array.
    Simulate(SimulateArgs),
    /// Train a TinyCNN checkpoint.
    Train(TrainArgs),
    /// Craft a perturbation against a checkpoint.
    Craft(CraftArgs),
    /// Measure the fooling rate of a perturbation.
    Eval(EvalArgs),
    /// Re-run the command recorded in a report and compare payloads.
    Replay(ReplayArgs),
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// Ran, but a verification or metric check failed.
    Fail,
}

#[derive(Debug)]
pub enum CmdError {
    /// Bad arguments or unreadable inputs.
    Usage(anyhow::Error),
    /// Dataset, model or runtime failure.
    Run(anyhow::Error),
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Run(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Run(e.into())
    }
}

impl From<serde_json::Error> for CmdError {
    fn from(e: serde_json::Error) -> Self {
        CmdError::Run(e.into())
    }
}

impl From<weavelab_core::Error> for CmdError {
    fn from(e: weavelab_core::Error) -> Self {
        CmdError::Run(e.into())
    }
}

pub type CmdResult = Result<Status, CmdError>;

pub(crate) trait UsageExt<T> {
    fn usage(self) -> Result<T, CmdError>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Usage(e.into()))
    }
}

/// Where samples come from: a labeled directory, or the synthetic corpus
/// drawn from the command's seed.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataArgs {
    /// Directory laid out as DIR/<label>/*.t3b.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic corpus size (ignored with --data).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Synthetic corpus stream; distinct streams are independent splits.
    #[arg(long)]
    pub stream: Option<u64>,
}

impl DataArgs {
    pub(crate) fn inputs(&self) -> Vec<String> {
        self.data.iter().map(|p| p.display().to_string()).collect()
    }

    pub(crate) fn load(
        &self,
        dims: (usize, usize, usize),
        classes: usize,
        seed: u64,
        default_samples: usize,
        default_stream: u64,
    ) -> Result<Vec<Sample>, CmdError> {
        match &self.data {
            Some(dir) => load_labeled_dir(dir).map_err(CmdError::Run),
            None => {
                let corpus = SyntheticCorpus::new(dims.0, dims.1, dims.2, classes).usage()?;
                let n = self.samples.unwrap_or(default_samples);
                if n == 0 {
                    return Err(CmdError::Usage(anyhow::anyhow!("--samples must be at least 1")));
                }
                Ok(corpus.generate(n, seed, self.stream.unwrap_or(default_stream)))
            }
        }
    }
}

pub(crate) fn load_model(path: &Path) -> Result<TinyCnn, CmdError> {
    load_checkpoint(path).map_err(|e| CmdError::Run(anyhow::anyhow!("{}: {e}", path.display())))
}

/// Labels must index the model's classes.
pub(crate) fn check_labels(samples: &[Sample], model: &TinyCnn) -> Result<(), CmdError> {
    match samples.iter().find(|s| s.label >= model.num_classes()) {
        Some(s) => {
            Err(CmdError::Run(anyhow::anyhow!("label {} outside the model's {} classes", s.label, model.num_classes())))
        }
        None => Ok(()),
    }
}

/// The command-line spelling of a value.
pub(crate) fn value_name<V: ValueEnum>(v: V) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

pub(crate) fn emit_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<Vec<u8>, CmdError> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    out.write_all(&line)?;
    Ok(line)
}

pub(crate) fn emit_report(out: &mut dyn Write, report: &Report) -> Result<(), CmdError> {
    emit_line(out, report)?;
    out.flush()?;
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn execute<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::VerifyEquivalence(a) => verify::run(a, out, err),
        Command::Simulate(a) => simulate::run(a, out, err),
        Command::Train(a) => train::run(a, out, err),
        Command::Craft(a) => craft::run(a, out, err),
        Command::Eval(a) => eval::run(a, out, err),
        Command::Replay(a) => replay::run(a, out, err),
    };
    match result {
        Ok(Status::Pass) => EXIT_OK,
        Ok(Status::Fail) => EXIT_FAILURE,
        Err(CmdError::Usage(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
        Err(CmdError::Run(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}
