//! `run_manifest.json`: one per invocation, written even when the run fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use gazequery::canon::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const TIMINGS_FILE: &str = "timings.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Resolved settings after merging flags over the config file.
    pub config: Value,
    /// Input path -> SHA-256 (directories hash their sorted file listing).
    pub inputs: BTreeMap<String, String>,
    /// Written files, relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_time_ms: f64,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub stage: String,
    pub kind: String,
    pub message: String,
    pub role: Option<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }
}

/// Collects inputs and outputs while a subcommand runs.
pub struct RunLog {
    subcommand: &'static str,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

impl RunLog {
    pub fn start(subcommand: &'static str) -> Self {
        Self { subcommand, started: Instant::now(), inputs: BTreeMap::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    /// Write the manifest into `out_dir` and pass `result` through.
    pub fn finish(self, out_dir: &Path, config: Value, result: anyhow::Result<()>) -> anyhow::Result<()> {
        let error = result.as_ref().err().map(|e| {
            let r = CliError::report(e, self.subcommand).error;
            ErrorInfo { stage: r.stage, kind: r.kind, message: r.message, role: r.role }
        });
        let mut outputs: Vec<String> =
            self.outputs.iter().map(|p| p.strip_prefix(out_dir).unwrap_or(p).display().to_string()).collect();
        outputs.push(MANIFEST_FILE.into());
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.subcommand.into(),
            config,
            inputs: self.inputs,
            outputs,
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1e3,
            status: if error.is_some() { "error" } else { "ok" }.into(),
            error,
        };
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
        result
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Every file under `dir`, relative, in sorted order.
pub fn list_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn hash_path(path: &Path) -> anyhow::Result<String> {
    if path.is_dir() {
        let mut listing = String::new();
        for rel in list_files(path)? {
            let bytes = std::fs::read(path.join(&rel))?;
            listing.push_str(&format!("{}\t{}\n", rel.display(), sha256_hex(&bytes)));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}
