//! Report envelope shared by every command: what ran, on which spec bytes,
//! with which tool, how long it took, and the command-specific payload.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::modelspec::SpecError;

#[derive(Serialize)]
pub struct RunReport<T: Serialize> {
    pub command: &'static str,
    /// SHA-256 of the spec file bytes, hex-encoded.
    pub spec_digest: String,
    pub tool_version: &'static str,
    pub wall_time_ms: u64,
    pub payload: T,
}

#[derive(Serialize)]
pub struct ErrorReport {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec_digest: Option<String>,
    pub tool_version: &'static str,
    pub wall_time_ms: u64,
    pub error: ErrorBody,
}

#[derive(Serialize)]
pub struct ErrorBody {
    /// Machine-readable code: a spec-validation code or an operation error
    /// variant name.
    pub code: String,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<SpecError>>,
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn spec_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Pretty-printed JSON to `--out` when given, stdout otherwise.
pub fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => std::fs::write(path, text + "\n"),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            writeln!(lock, "{text}")
        }
    }
}
