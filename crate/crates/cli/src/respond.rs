use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use gazequery::backends::{Backend, BackendConfig, Backends, RecordLog, Recorder};
use gazequery::evaluation::QueryResult;
use gazequery::localization::SharpnessCache;
use gazequery::pipeline::{check_preconditions, run_query, PromptTemplate, QueryRun, Variant, VariantConfig};
use gazequery::session::{load_session, QueryId, Session};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::FileConfig;
use crate::manifest::{write_json, RunLog, TIMINGS_FILE};
use crate::{CliError, GlobalArgs};

#[derive(Debug, Args)]
pub struct RespondArgs {
    /// Session manifest or directory.
    #[arg(long, value_name = "PATH")]
    pub session: PathBuf,
    /// Variant name, or `all` (repeatable; default all six).
    #[arg(long, value_name = "NAME")]
    pub variant: Vec<String>,
    /// Restrict to these query ids (repeatable).
    #[arg(long, value_name = "ID")]
    pub query: Vec<String>,
    /// Backend config TOML.
    #[arg(long, value_name = "FILE")]
    pub backends: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Log every backend call: a `.jsonl` path, or a directory to fill with fixtures.
    #[arg(long, value_name = "PATH")]
    pub record: Option<PathBuf>,
}

/// Stage settings shared by `respond` and `localize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub k: usize,
    pub tau_s: f64,
    pub window_lead_s: f64,
    pub score_threshold: f64,
    pub top_n: usize,
}

impl StageSettings {
    pub fn from_file(file: &FileConfig) -> Self {
        let d = VariantConfig::new(Variant::VoilaG, 0);
        let r = &file.respond;
        Self {
            k: r.k.unwrap_or(d.k),
            tau_s: r.tau_s.unwrap_or(d.tau_s),
            window_lead_s: r.window_lead_s.unwrap_or(d.window_lead_s),
            score_threshold: r.score_threshold.unwrap_or(d.score_threshold),
            top_n: r.top_n.unwrap_or(d.top_n),
        }
    }

    pub fn variant(&self, v: Variant, seed: u64) -> VariantConfig {
        VariantConfig {
            k: self.k,
            tau_s: self.tau_s,
            window_lead_s: self.window_lead_s,
            score_threshold: self.score_threshold,
            top_n: self.top_n,
            ..VariantConfig::new(v, seed)
        }
    }
}

/// Everything a `respond` run depends on; stored in the run manifest so
/// `replay` can repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondOptions {
    pub session: PathBuf,
    pub variants: Vec<Variant>,
    /// Empty means every query in the session.
    pub queries: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub stages: StageSettings,
    pub backends: Option<PathBuf>,
    /// Backend config text at run time.
    pub backends_toml: Option<String>,
    pub template: Option<PathBuf>,
    pub examples: Option<PathBuf>,
}

pub fn parse_variants(names: &[String]) -> anyhow::Result<Vec<Variant>> {
    if names.is_empty() {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let add: Vec<Variant> = if n.eq_ignore_ascii_case("all") {
            Variant::ALL.to_vec()
        } else {
            vec![n.parse::<Variant>().map_err(|e| CliError::new("config", "UnknownVariant", e))?]
        };
        for v in add {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

pub fn load_template(template: Option<&Path>, examples: Option<&Path>) -> anyhow::Result<PromptTemplate> {
    let t = match template {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading template {}", p.display()))?;
            PromptTemplate::parse(&text).map_err(|e| CliError::new("prompt", "TemplateError", e.to_string()))?
        }
        None => PromptTemplate::default(),
    };
    Ok(match examples {
        Some(p) => t.with_examples(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => t,
    })
}

pub fn build_backends(toml_text: Option<&str>, base: &Path) -> anyhow::Result<Backends> {
    match toml_text {
        Some(text) => {
            let cfg = BackendConfig::parse(text, base).map_err(|e| CliError::backend("config", &e))?;
            Ok(cfg.build().map_err(|e| CliError::backend("config", &e))?)
        }
        None => Ok(Backends::new()),
    }
}

pub fn query_ids(session: &Session, wanted: &[String]) -> anyhow::Result<Vec<QueryId>> {
    if wanted.is_empty() {
        return Ok(session.queries.iter().map(|q| q.id.clone()).collect());
    }
    wanted
        .iter()
        .map(|id| {
            let id = QueryId(id.clone());
            match session.query(&id) {
                Some(_) => Ok(id),
                None => Err(CliError::new("precondition", "UnknownQuery", format!("unknown query `{id}`")).into()),
            }
        })
        .collect()
}

pub fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

pub fn result_path(out: &Path, variant: Variant, query: &str) -> PathBuf {
    out.join(variant.name()).join(format!("{query}.json"))
}

impl RespondOptions {
    pub fn resolve(args: &RespondArgs, g: &GlobalArgs, file: &FileConfig) -> anyhow::Result<Self> {
        let names = if args.variant.is_empty() {
            file.respond.variants.clone().unwrap_or_default()
        } else {
            args.variant.clone()
        };
        let backends = args.backends.clone().or_else(|| file.respond.backends.clone());
        let backends_toml = match &backends {
            Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        Ok(Self {
            session: args.session.clone(),
            variants: parse_variants(&names)?,
            queries: args.query.clone(),
            seed: g.seed.or(file.seed).unwrap_or(0),
            jobs: g.jobs.or(file.jobs).unwrap_or(1),
            stages: StageSettings::from_file(file),
            backends,
            backends_toml,
            template: file.respond.template.clone(),
            examples: file.respond.examples.clone(),
        })
    }

    pub fn backends_base(&self) -> PathBuf {
        self.backends.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
    }
}

pub fn run(args: &RespondArgs, g: &GlobalArgs, file: &FileConfig) -> anyhow::Result<()> {
    let mut log = RunLog::start("respond");
    let opts = match RespondOptions::resolve(args, g, file) {
        Ok(o) => o,
        Err(e) => return log.finish(&args.out, json!(null), Err(e)),
    };
    let result = (|| {
        log.input(&opts.session)?;
        for p in [&opts.backends, &opts.template, &opts.examples].into_iter().flatten() {
            log.input(p)?;
        }
        let session = load_session(&opts.session)?;
        let mut backends = build_backends(opts.backends_toml.as_deref(), &opts.backends_base())?;
        if let Some(target) = &args.record {
            let sink = if target.extension().is_some_and(|e| e == "jsonl") {
                RecordLog::to_file(target).map_err(|e| CliError::backend("record", &e))?
            } else {
                RecordLog::to_fixtures(target)
            };
            let sink = Arc::new(sink);
            backends = backends.map(|_, b| Arc::new(Recorder::new(b, sink.clone())) as Arc<dyn Backend>);
        }
        execute(&session, &opts, &backends, &args.out, &mut log)
    })();
    log.finish(&args.out, serde_json::to_value(&opts)?, result)
}

/// Run every (variant, query) pair and write results plus `timings.jsonl`.
/// Successful results are written even when some pair fails; the first
/// failure in (variant, query) order is returned.
pub fn execute(
    session: &Session,
    opts: &RespondOptions,
    backends: &Backends,
    out: &Path,
    log: &mut RunLog,
) -> anyhow::Result<()> {
    let template = load_template(opts.template.as_deref(), opts.examples.as_deref())?;
    let configs: Vec<VariantConfig> = opts.variants.iter().map(|v| opts.stages.variant(*v, opts.seed)).collect();
    for cfg in &configs {
        check_preconditions(session, cfg, backends)?;
    }
    let ids = query_ids(session, &opts.queries)?;
    let sharpness = SharpnessCache::new(session.root.clone());
    let ctx = gazequery::pipeline::RunContext { backends, sharpness: &sharpness, template: &template };
    let tasks: Vec<(&VariantConfig, &QueryId)> = configs.iter().flat_map(|c| ids.iter().map(move |q| (c, q))).collect();
    let runs: Vec<Result<QueryRun, gazequery::pipeline::PipelineError>> =
        thread_pool(opts.jobs)?.install(|| tasks.par_iter().map(|(cfg, q)| run_query(session, q, cfg, &ctx)).collect());

    let mut timings = String::new();
    let mut first_err = None;
    for ((cfg, q), run) in tasks.iter().zip(runs) {
        match run {
            Ok(run) => {
                let path = result_path(out, cfg.name, q.as_str());
                let result = QueryResult {
                    variant: cfg.name,
                    session: session.id.clone(),
                    query_id: q.to_string(),
                    seed: opts.seed,
                    response: run.response,
                    trace: run.trace,
                };
                write_json(&path, &result)?;
                log.output(path);
                timings.push_str(&serde_json::to_string(
                    &json!({"variant": cfg.name, "query_id": q, "stages_ms": run.timings.stages_ms}),
                )?);
                timings.push('\n');
            }
            Err(e) => {
                tracing::warn!(variant = %cfg.name, query = %q, "{e}");
                let mut err = CliError::from(&e);
                err.message = format!("{}/{q}: {}", cfg.name, err.message);
                first_err.get_or_insert(err);
            }
        }
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(TIMINGS_FILE), timings)?;
    log.output(out.join(TIMINGS_FILE));
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
