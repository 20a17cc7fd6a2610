//! Report files. Every command produces one [`Outcome`]; the coordinator
//! writes it as a JSON document and a CSV summary.
//!
//! CSV files carry the command's own columns followed by `seed`,
//! `config_hash` and `version` on every row.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::Format;

/// Bumped whenever a JSON field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the output directory; `--out` wins
/// over it.
pub const OUT_DIR_ENV: &str = "SPINEKIT_OUT_DIR";

/// Result of one command, before it is written out.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: &'static str,
    pub passed: bool,
    /// Set when the command stopped early; the result holds what finished.
    pub error: Option<String>,
    pub result: Value,
    pub csv_header: Vec<&'static str>,
    pub csv_rows: Vec<Vec<String>>,
}

impl Outcome {
    pub fn new(command: &'static str, csv_header: Vec<&'static str>) -> Self {
        Outcome {
            command,
            passed: true,
            error: None,
            result: Value::Null,
            csv_header,
            csv_rows: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config_hash: &'a str,
    passed: bool,
    partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    result: &'a Value,
}

/// Where and how to write.
#[derive(Clone, Debug)]
pub struct Destination {
    pub dir: PathBuf,
    pub stem: String,
    pub formats: Vec<Format>,
}

/// Formats a float with the shortest representation that round-trips,
/// switching to exponent notation for very large or small magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn json_document(outcome: &Outcome, seed: Option<u64>, config_hash: &str) -> Result<String> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command: outcome.command,
        version: spinekit::VERSION,
        seed,
        config_hash,
        passed: outcome.passed && outcome.error.is_none(),
        partial: outcome.error.is_some(),
        error: outcome.error.as_deref(),
        result: &outcome.result,
    };
    let mut s = serde_json::to_string_pretty(&env)?;
    s.push('\n');
    Ok(s)
}

pub fn csv_document(outcome: &Outcome, seed: Option<u64>, config_hash: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = outcome.csv_header.clone();
    header.extend(["seed", "config_hash", "version"]);
    w.write_record(&header)?;
    let seed = seed.map(|s| s.to_string()).unwrap_or_default();
    for row in &outcome.csv_rows {
        debug_assert_eq!(row.len(), outcome.csv_header.len());
        let mut rec: Vec<&str> = row.iter().map(String::as_str).collect();
        rec.extend([seed.as_str(), config_hash, spinekit::VERSION]);
        w.write_record(&rec)?;
    }
    w.into_inner().context("flushing CSV")
}

/// Writes the requested files and returns their paths.
pub fn write(outcome: &Outcome, dest: &Destination, seed: Option<u64>, config_hash: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&dest.dir).with_context(|| format!("creating {}", dest.dir.display()))?;
    let mut written = Vec::new();
    for format in &dest.formats {
        let (ext, bytes) = match format {
            Format::Json => ("json", json_document(outcome, seed, config_hash)?.into_bytes()),
            Format::Csv => ("csv", csv_document(outcome, seed, config_hash)?),
        };
        let path = dest.dir.join(format!("{}.{ext}", dest.stem));
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
