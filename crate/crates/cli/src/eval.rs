use std::path::PathBuf;

use clap::Args;
use gazequery::evaluation::{aggregate, evaluate, read_results, AggregateReport, EvalRecord, MatchScope};
use gazequery::session::load_ground_truth;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::FileConfig;
use crate::manifest::{write_json, RunLog};
use crate::respond::thread_pool;
use crate::{CliError, GlobalArgs};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `respond` result files (searched recursively).
    #[arg(long, value_name = "DIR")]
    pub results: PathBuf,
    /// Ground-truth JSON with per-query object names and synonyms.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also match object names in the `thought` field.
    #[arg(long)]
    pub include_thought: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub report: AggregateReport,
    pub records: Vec<EvalRecord>,
}

pub fn run(args: &EvalArgs, g: &GlobalArgs, file: &FileConfig) -> anyhow::Result<()> {
    let mut log = RunLog::start("eval");
    let truth_path = args.truth.clone().or_else(|| file.eval.truth.clone());
    let scope = MatchScope {
        thought: args.include_thought || file.eval.include_thought.unwrap_or(false),
        ..MatchScope::default()
    };
    let jobs = g.jobs.or(file.jobs).unwrap_or(1);
    let config = json!({"results": args.results, "truth": truth_path, "scope": scope, "jobs": jobs});
    let result = (|| {
        let truth_path = truth_path
            .as_ref()
            .ok_or_else(|| CliError::new("config", "MissingTruth", "eval needs --truth or eval.truth"))?;
        log.input(&args.results)?;
        log.input(truth_path)?;
        let truth = load_ground_truth(truth_path)?;
        let results = read_results(&args.results)?;
        let records: Vec<EvalRecord> =
            thread_pool(jobs)?.install(|| results.par_iter().map(|r| evaluate(r, &truth, scope)).collect());
        let report = aggregate(&records);
        let csv_path = args.out.join(REPORT_CSV);
        std::fs::create_dir_all(&args.out)?;
        std::fs::write(&csv_path, report.to_csv())?;
        log.output(csv_path);
        let json_path = args.out.join(REPORT_JSON);
        write_json(&json_path, &EvalOutput { report, records })?;
        log.output(json_path);
        Ok(())
    })();
    log.finish(&args.out, config, result)
}
