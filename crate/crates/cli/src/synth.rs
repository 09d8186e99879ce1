use std::path::PathBuf;

use clap::Args;
use gazequery::synth::write_synth;

use crate::config::FileConfig;
use crate::manifest::{list_files, RunLog};
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Session directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of queries (overrides `synth.query_count`).
    #[arg(long, value_name = "N")]
    pub queries: Option<usize>,
}

pub fn run(args: &SynthArgs, g: &GlobalArgs, file: &FileConfig) -> anyhow::Result<()> {
    let mut log = RunLog::start("synth");
    let mut cfg = file.synth.clone().unwrap_or_default();
    cfg.seed = g.seed.or(file.seed).unwrap_or(cfg.seed);
    if let Some(n) = args.queries {
        cfg.query_count = n;
    }
    let result = (|| {
        if let Some(src) = &file.source {
            log.input(src)?;
        }
        write_synth(&cfg, &args.out)?;
        for rel in list_files(&args.out)? {
            log.output(args.out.join(rel));
        }
        Ok(())
    })();
    log.finish(&args.out, serde_json::to_value(&cfg)?, result)
}
