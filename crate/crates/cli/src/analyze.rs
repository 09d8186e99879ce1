use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use gazequery::analytics::{write_analysis, AnalysisOutputs, STARTUP_CAP_S, WINDOW_LEAD_S};
use gazequery::session::load_session;
use serde_json::json;

use crate::config::{pick, FileConfig};
use crate::manifest::RunLog;
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Session manifest or directory (repeatable).
    #[arg(long, required = true, value_name = "PATH")]
    pub session: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Word offsets considered around each pronoun.
    #[arg(long, value_name = "N")]
    pub pronoun_window: Option<usize>,
    /// Fixations on each side of the anchor in the duration profile.
    #[arg(long, value_name = "N")]
    pub radius: Option<usize>,
}

pub fn run(args: &AnalyzeArgs, _g: &GlobalArgs, file: &FileConfig) -> anyhow::Result<()> {
    let mut log = RunLog::start("analyze");
    let a = &file.analyze;
    let window = pick(args.pronoun_window, a.pronoun_window, 5);
    let radius = pick(args.radius, a.radius, 3);
    let lead = a.window_lead_s.unwrap_or(WINDOW_LEAD_S);
    let cap = a.startup_cap_s.unwrap_or(STARTUP_CAP_S);
    let config = json!({
        "sessions": args.session,
        "pronoun_window": window,
        "radius": radius,
        "window_lead_s": lead,
        "startup_cap_s": cap,
    });
    let result = (|| {
        let mut sessions = Vec::new();
        for p in &args.session {
            log.input(p)?;
            sessions.push(load_session(p)?);
        }
        let outputs = AnalysisOutputs::compute(&sessions, window, radius, lead, cap);
        for p in write_analysis(&outputs, &args.out).with_context(|| format!("writing to {}", args.out.display()))? {
            log.output(p);
        }
        Ok(())
    })();
    log.finish(&args.out, config, result)
}
