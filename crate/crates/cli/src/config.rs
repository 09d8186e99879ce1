//! The `--config` TOML file. Every key is optional; relative paths resolve
//! against the file's directory.
//!
//! ```toml
//! seed = 7
//! jobs = 4
//!
//! [synth]            # any session-synth field
//! query_count = 200
//!
//! [analyze]
//! pronoun_window = 5
//! radius = 3
//!
//! [respond]
//! backends = "backends.toml"
//! variants = ["VOILA-G", "VOILA"]
//!
//! [eval]
//! truth = "truth.json"
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use gazequery::synth::SynthConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    #[serde(default)]
    pub respond: RespondSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub pronoun_window: Option<usize>,
    pub radius: Option<usize>,
    pub window_lead_s: Option<f64>,
    pub startup_cap_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespondSection {
    pub backends: Option<PathBuf>,
    pub variants: Option<Vec<String>>,
    pub k: Option<usize>,
    pub tau_s: Option<f64>,
    pub window_lead_s: Option<f64>,
    pub score_threshold: Option<f64>,
    pub top_n: Option<usize>,
    pub template: Option<PathBuf>,
    pub examples: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub truth: Option<PathBuf>,
    pub include_thought: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| crate::CliError::new("config", "ConfigError", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.respond.backends, &mut cfg.respond.template, &mut cfg.respond.examples, &mut cfg.eval.truth]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }
}

/// Flag, else config value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
