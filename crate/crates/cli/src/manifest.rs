//! Self-describing reports: every payload travels with the manifest that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub output: Option<String>,
    /// Every command-line flag, keyed by its long name.
    pub parameters: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    /// Builds the manifest from a serializable argument struct whose field
    /// names match the long flag names.
    pub fn from_args<A: Serialize>(
        command: &str,
        seed: u64,
        args: &A,
        inputs: Vec<String>,
        output: Option<String>,
    ) -> Self {
        let mut parameters = BTreeMap::new();
        if let Ok(Value::Object(map)) = serde_json::to_value(args) {
            for (k, v) in map {
                let s = match v {
                    Value::Null => continue,
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                parameters.insert(k, s);
            }
        }
        Self { command: command.to_string(), seed, inputs, output, parameters, tool_version: TOOL_VERSION.to_string() }
    }

    /// The argument vector that re-runs this command (program name excluded).
    pub fn argv(&self) -> Vec<String> {
        let mut argv = vec![self.command.clone()];
        for (k, v) in &self.parameters {
            match v.as_str() {
                "false" => {}
                "true" => argv.push(format!("--{k}")),
                _ => {
                    argv.push(format!("--{k}"));
                    argv.push(v.clone());
                }
            }
        }
        argv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub payload: Value,
}

impl Report {
    pub fn new<P: Serialize>(manifest: RunManifest, payload: &P) -> serde_json::Result<Self> {
        Ok(Self { manifest, payload: serde_json::to_value(payload)? })
    }

    /// Canonical bytes of the payload, compared by replay.
    pub fn payload_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.payload).expect("a JSON value always serializes")
    }

    /// The report is the last non-empty line of a command's stdout.
    pub fn from_output(text: &str) -> serde_json::Result<Self> {
        let line = text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        serde_json::from_str(line)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    #[serde(rename_all = "kebab-case")]
    struct Args {
        trials: usize,
        max_dim: usize,
        sabotage: bool,
        label: Option<String>,
    }

    #[test]
    fn argv_from_args() {
        let m = RunManifest::from_args(
            "verify-equivalence",
            3,
            &Args { trials: 5, max_dim: 16, sabotage: true, label: None },
            vec![],
            None,
        );
        assert_eq!(m.argv(), ["verify-equivalence", "--max-dim", "16", "--sabotage", "--trials", "5"]);
        let off = RunManifest::from_args(
            "x",
            0,
            &Args { trials: 1, max_dim: 2, sabotage: false, label: Some("a b".into()) },
            vec![],
            None,
        );
        assert_eq!(off.argv(), ["x", "--label", "a b", "--max-dim", "2", "--trials", "1"]);
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
