use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use serde::Serialize;

use super::{emit_report, execute, CmdError, CmdResult, Status, UsageExt};
use crate::manifest::{sha256_hex, Report, RunManifest, TOOL_VERSION};

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplayArgs {
    /// Saved stdout of an earlier command; its last line is the report.
    pub report: PathBuf,
}

#[derive(Debug, Serialize)]
struct ReplayPayload {
    command: String,
    argv: Vec<String>,
    exit_code: i32,
    original_payload_sha256: String,
    replayed_payload_sha256: String,
    identical: bool,
}

pub(super) fn run(args: &ReplayArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let text =
        std::fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display())).usage()?;
    let original = Report::from_output(&text)
        .with_context(|| format!("{} does not end in a report line", args.report.display()))
        .usage()?;
    if original.manifest.tool_version != TOOL_VERSION {
        writeln!(err, "replay: report written by {}, replaying with {TOOL_VERSION}", original.manifest.tool_version)?;
    }
    let argv = original.manifest.argv();

    // Artifacts go to a scratch directory so the originals stay untouched;
    // their digests are part of the payload.
    let scratch = tempfile::tempdir()?;
    let mut rerun = vec!["weavelab".to_string()];
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        rerun.push(a.clone());
        if a == "--out" {
            let orig = it.next().ok_or_else(|| CmdError::Usage(anyhow!("--out without a value in manifest")))?;
            let name = PathBuf::from(orig).file_name().map(|n| n.to_owned()).unwrap_or_else(|| "artifact".into());
            rerun.push(scratch.path().join(name).display().to_string());
        }
    }

    let mut captured = Vec::new();
    let exit_code = execute(&rerun, &mut captured, &mut io::sink());
    let replayed = Report::from_output(&String::from_utf8_lossy(&captured))
        .map_err(|e| CmdError::Run(anyhow!("replayed command (exit {exit_code}) produced no report: {e}")))?;
    let (a, b) = (original.payload_bytes(), replayed.payload_bytes());
    let payload = ReplayPayload {
        command: original.manifest.command.clone(),
        argv,
        exit_code,
        original_payload_sha256: sha256_hex(&a),
        replayed_payload_sha256: sha256_hex(&b),
        identical: a == b,
    };
    let manifest =
        RunManifest::from_args("replay", original.manifest.seed, args, vec![args.report.display().to_string()], None);
    emit_report(out, &Report::new(manifest, &payload)?)?;
    writeln!(err, "replay {}: payload {}", payload.command, if payload.identical { "identical" } else { "DIFFERS" })?;
    Ok(if payload.identical { Status::Pass } else { Status::Fail })
}
