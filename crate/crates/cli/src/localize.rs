use std::path::PathBuf;

use clap::Args;
use gazequery::localization::{InterestCandidate, RegionCandidate, SharpnessCache};
use gazequery::pipeline::{localize_query, PromptTemplate, RunContext, Variant};
use gazequery::session::load_session;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::FileConfig;
use crate::manifest::{write_json, RunLog};
use crate::respond::{build_backends, parse_variants, query_ids, thread_pool, StageSettings};
use crate::{CliError, GlobalArgs};

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long, value_name = "PATH")]
    pub session: PathBuf,
    /// Variant name, or `all` (repeatable; default VOILA-G).
    #[arg(long, value_name = "NAME")]
    pub variant: Vec<String>,
    /// Restrict to these query ids (repeatable).
    #[arg(long = "query-id", value_name = "ID")]
    pub query_id: Vec<String>,
    #[arg(long, value_name = "FILE")]
    pub backends: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameChoice {
    pub uri: String,
    pub t: f64,
    pub score: f64,
    pub source_fixation: Option<String>,
}

/// Per-frame lists are parallel to `frames`.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationRecord {
    pub variant: Variant,
    pub session: String,
    pub query_id: String,
    pub seed: u64,
    pub frame_seed: Option<u64>,
    pub query_text: String,
    pub frames: Vec<FrameChoice>,
    pub gaze_points: Vec<Option<(f64, f64)>>,
    pub regions: Vec<Vec<RegionCandidate>>,
    pub interests: Vec<Vec<InterestCandidate>>,
    pub captions: Vec<String>,
    pub notes: Vec<String>,
}

pub fn run(args: &LocalizeArgs, g: &GlobalArgs, file: &FileConfig) -> anyhow::Result<()> {
    let mut log = RunLog::start("localize");
    let seed = g.seed.or(file.seed).unwrap_or(0);
    let jobs = g.jobs.or(file.jobs).unwrap_or(1);
    let stages = StageSettings::from_file(file);
    let backends_path = args.backends.clone().or_else(|| file.respond.backends.clone());
    let config = json!({
        "session": args.session,
        "variants": args.variant,
        "queries": args.query_id,
        "seed": seed,
        "jobs": jobs,
        "stages": stages,
        "backends": backends_path,
    });
    let result = (|| {
        let variants = if args.variant.is_empty() { vec![Variant::VoilaG] } else { parse_variants(&args.variant)? };
        log.input(&args.session)?;
        let session = load_session(&args.session)?;
        let text = match &backends_path {
            Some(p) => {
                log.input(p)?;
                Some(std::fs::read_to_string(p)?)
            }
            None => None,
        };
        let base = backends_path
            .as_ref()
            .and_then(|p| p.parent())
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let backends = build_backends(text.as_deref(), &base)?;
        let ids = query_ids(&session, &args.query_id)?;
        let sharpness = SharpnessCache::new(session.root.clone());
        let template = PromptTemplate::default();
        let ctx = RunContext { backends: &backends, sharpness: &sharpness, template: &template };
        let stages = &stages;
        let tasks: Vec<_> =
            variants.iter().flat_map(|v| ids.iter().map(move |q| (stages.variant(*v, seed), q))).collect();
        let runs: Vec<_> = thread_pool(jobs)?
            .install(|| tasks.par_iter().map(|(cfg, q)| localize_query(&session, q, cfg, &ctx)).collect());
        let mut first_err = None;
        for ((cfg, q), run) in tasks.iter().zip(runs) {
            match run {
                Ok(l) => {
                    let record = LocalizationRecord {
                        variant: cfg.name,
                        session: session.id.clone(),
                        query_id: q.to_string(),
                        seed,
                        frame_seed: l.frame_seed,
                        query_text: l.query_text,
                        frames: l
                            .frames
                            .iter()
                            .map(|f| FrameChoice {
                                uri: f.uri.clone(),
                                t: f.t,
                                score: f.score,
                                source_fixation: f.source_fixation.clone(),
                            })
                            .collect(),
                        gaze_points: l.frames.iter().map(|f| f.gaze_point).collect(),
                        regions: l.frames.iter().map(|f| f.regions.clone()).collect(),
                        interests: l.frames.iter().map(|f| f.interests.clone()).collect(),
                        captions: l.frames.iter().map(|f| f.caption.clone()).collect(),
                        notes: l.notes,
                    };
                    let path = args.out.join(cfg.name.name()).join(format!("{q}.localize.json"));
                    write_json(&path, &record)?;
                    log.output(path);
                }
                Err(e) => {
                    let mut err = CliError::from(&e);
                    err.message = format!("{}/{q}: {}", cfg.name, err.message);
                    first_err.get_or_insert(err);
                }
            }
        }
        match first_err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    })();
    log.finish(&args.out, config, result)
}
