//! Run manifests: what went in, what came out, and with which settings.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{CliError, CliResult};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl Into<String>, contents: &[u8]) -> Self {
        Self { path: path.into(), bytes: contents.len() as u64, sha256: sha256_hex(contents) }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub parameters: Value,
    pub outputs: Vec<FileDigest>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &'static str, parameters: Value, timestamp: String) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            inputs: Vec::new(),
            seeds: Vec::new(),
            parameters,
            outputs: Vec::new(),
            timestamp,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Manifest timestamp: an explicit value, else `SOURCE_DATE_EPOCH`, else now.
/// Explicit values may be Unix seconds or any string (kept verbatim).
pub fn timestamp(explicit: Option<&str>) -> CliResult<String> {
    let raw = explicit
        .map(str::to_owned)
        .or_else(|| std::env::var("SOURCE_DATE_EPOCH").ok().filter(|s| !s.trim().is_empty()));
    let when = match raw {
        None => OffsetDateTime::now_utc(),
        Some(s) => match s.trim().parse::<i64>() {
            Ok(secs) => OffsetDateTime::from_unix_timestamp(secs)
                .map_err(|e| CliError::usage(format!("timestamp {secs}: {e}")))?,
            Err(_) => return Ok(s),
        },
    };
    Ok(when.format(&Rfc3339).expect("RFC 3339 formatting of a valid date"))
}

pub fn display_path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}
