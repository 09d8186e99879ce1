use std::path::{Path, PathBuf};

use clap::Args;
use gazequery::backends::{materialize_fixtures, BackendConfig, Backends};
use gazequery::session::load_session;
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;
use crate::manifest::{list_files, write_json, RunLog, RunManifest, MANIFEST_FILE, TIMINGS_FILE};
use crate::respond::{execute, RespondOptions};
use crate::{CliError, GlobalArgs};

pub const REPORT_FILE: &str = "replay_report.json";
const MATERIALIZED: &str = "fixtures";

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Output directory of the recorded `respond` run.
    #[arg(long, value_name = "DIR")]
    pub traces: PathBuf,
    /// Fixture directory, or a `.jsonl` record log.
    #[arg(long, value_name = "PATH")]
    pub fixtures: PathBuf,
    /// Where regenerated results go.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Session path, when it moved since the recording.
    #[arg(long, value_name = "PATH")]
    pub session: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub file: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub compared: usize,
    pub identical: usize,
    pub divergences: Vec<Divergence>,
}

/// Files that carry wall-clock data and never compare equal.
fn volatile(rel: &Path) -> bool {
    rel == Path::new(MANIFEST_FILE) || rel == Path::new(TIMINGS_FILE) || rel.starts_with(MATERIALIZED)
}

fn first_difference(a: &[u8], b: &[u8]) -> String {
    let (a, b) = (String::from_utf8_lossy(a), String::from_utf8_lossy(b));
    let clip = |s: &str| s.chars().take(100).collect::<String>();
    for (i, (x, y)) in a.lines().zip(b.lines()).enumerate() {
        if x != y {
            return format!("line {}: recorded `{}` vs replayed `{}`", i + 1, clip(x.trim()), clip(y.trim()));
        }
    }
    format!("length {} vs {}", a.len(), b.len())
}

pub fn compare_trees(recorded: &Path, replayed: &Path) -> anyhow::Result<ReplayReport> {
    let left: Vec<PathBuf> = list_files(recorded)?.into_iter().filter(|p| !volatile(p)).collect();
    let right: Vec<PathBuf> =
        list_files(replayed)?.into_iter().filter(|p| !volatile(p) && p != Path::new(REPORT_FILE)).collect();
    let mut divergences = Vec::new();
    let mut identical = 0;
    for rel in &left {
        let a = std::fs::read(recorded.join(rel))?;
        match std::fs::read(replayed.join(rel)) {
            Ok(b) if a == b => identical += 1,
            Ok(b) => divergences.push(Divergence { file: rel.display().to_string(), detail: first_difference(&a, &b) }),
            Err(_) => divergences
                .push(Divergence { file: rel.display().to_string(), detail: "not produced on replay".into() }),
        }
    }
    for rel in right.iter().filter(|r| !left.contains(r)) {
        divergences
            .push(Divergence { file: rel.display().to_string(), detail: "produced on replay but not recorded".into() });
    }
    Ok(ReplayReport { compared: left.len(), identical, divergences })
}

fn replay_backends(opts: &RespondOptions, fixtures: &Path) -> anyhow::Result<Backends> {
    let Some(text) = &opts.backends_toml else {
        return Ok(Backends::new());
    };
    let cfg = BackendConfig::parse(text, &opts.backends_base()).map_err(|e| CliError::backend("config", &e))?;
    Ok(cfg.replayed_from(fixtures).build().map_err(|e| CliError::backend("config", &e))?)
}

pub fn run(args: &ReplayArgs, g: &GlobalArgs, _file: &FileConfig) -> anyhow::Result<()> {
    let mut log = RunLog::start("replay");
    let mut config = serde_json::json!({"traces": args.traces, "fixtures": args.fixtures});
    let result = (|| {
        let recorded = RunManifest::read(&args.traces)?;
        if recorded.subcommand != "respond" {
            return Err(CliError::new(
                "replay",
                "NotReplayable",
                format!("{} holds a `{}` run, not `respond`", args.traces.display(), recorded.subcommand),
            )
            .into());
        }
        let mut opts: RespondOptions = serde_json::from_value(recorded.config.clone())?;
        if let Some(s) = &args.session {
            opts.session = s.clone();
        }
        if let Some(j) = g.jobs {
            opts.jobs = j;
        }
        config["respond"] = serde_json::to_value(&opts)?;
        log.input(&args.traces)?;
        log.input(&args.fixtures)?;
        let fixtures = if args.fixtures.extension().is_some_and(|e| e == "jsonl") {
            let dir = args.out.join(MATERIALIZED);
            materialize_fixtures(&args.fixtures, &dir).map_err(|e| CliError::backend("replay", &e))?;
            dir
        } else {
            args.fixtures.clone()
        };
        let session = load_session(&opts.session)?;
        let backends = replay_backends(&opts, &fixtures)?;
        execute(&session, &opts, &backends, &args.out, &mut log)?;

        let report = compare_trees(&args.traces, &args.out)?;
        write_json(&args.out.join(REPORT_FILE), &report)?;
        log.output(args.out.join(REPORT_FILE));
        if report.divergences.is_empty() {
            return Ok(());
        }
        let summary: Vec<String> =
            report.divergences.iter().map(|d| format!("{}: {}", d.file.trim_end_matches(".json"), d.detail)).collect();
        Err(CliError::new(
            "replay",
            "DivergenceDetected",
            format!("{} of {} results differ; {}", report.divergences.len(), report.compared, summary.join("; ")),
        )
        .into())
    })();
    log.finish(&args.out, config, result)
}
