//! Plot-ready CSV/JSON emitted by `analyze`.
//!
//! | file                   | columns                                              |
//! |------------------------|------------------------------------------------------|
//! | `cooccurrence.csv`     | `r,c,c_all,p` (`p` empty when undefined)             |
//! | `duration_profile.csv` | `relevance,k,mean_duration,count`                    |
//! | `relevancy_points.csv` | `session,query,fixation,index,duration,relevant`     |
//! | `startup.csv`          | `session,query,startup,source_fixation`              |
//! | `summary.json`         | see [`AnalysisSummary`]                              |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    duration_profile_with, pronoun_cooccurrence, relevancy_distribution_with, startup_stats, startup_times,
    CooccurrenceProfile, DurationProfile, RelevancyPoint, StartupResult, StartupStats,
};
use crate::session::Session;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub sessions: usize,
    pub queries: usize,
    /// `None` when no query had a defined startup.
    pub startup: Option<StartupStats>,
    pub startup_undefined: usize,
    pub profile_skipped_relevant: usize,
    pub profile_skipped_irrelevant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutputs {
    pub cooccurrence: CooccurrenceProfile,
    pub relevant_profile: DurationProfile,
    pub irrelevant_profile: DurationProfile,
    pub points: Vec<RelevancyPoint>,
    pub startups: Vec<(String, StartupResult)>,
    pub summary: AnalysisSummary,
}

impl AnalysisOutputs {
    pub fn compute(sessions: &[Session], pronoun_window: usize, radius: usize, lead: f64, cap: f64) -> Self {
        let startups = startup_times(sessions, cap);
        let stats = startup_stats(startups.iter().map(|(_, r)| r)).ok();
        let relevant_profile = duration_profile_with(sessions, true, radius, lead);
        let irrelevant_profile = duration_profile_with(sessions, false, radius, lead);
        let summary = AnalysisSummary {
            sessions: sessions.len(),
            queries: sessions.iter().map(|s| s.queries.len()).sum(),
            startup: stats,
            startup_undefined: startups.iter().filter(|(_, r)| r.startup.is_none()).count(),
            profile_skipped_relevant: relevant_profile.skipped,
            profile_skipped_irrelevant: irrelevant_profile.skipped,
        };
        Self {
            cooccurrence: pronoun_cooccurrence(sessions, pronoun_window),
            relevant_profile,
            irrelevant_profile,
            points: relevancy_distribution_with(sessions, lead),
            startups,
            summary,
        }
    }

    pub fn cooccurrence_csv(&self) -> String {
        let mut s = String::from("r,c,c_all,p\n");
        for row in &self.cooccurrence.rows {
            let p = row.p.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", row.r, row.c, row.c_all, p);
        }
        s
    }

    pub fn duration_profile_csv(&self) -> String {
        let mut s = String::from("relevance,k,mean_duration,count\n");
        for (name, prof) in [("relevant", &self.relevant_profile), ("irrelevant", &self.irrelevant_profile)] {
            for (k, bin) in &prof.bins {
                let _ = writeln!(s, "{name},{k},{},{}", bin.mean, bin.count);
            }
        }
        s
    }

    pub fn relevancy_points_csv(&self) -> String {
        let mut s = String::from("session,query,fixation,index,duration,relevant\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.session_id,
                p.query_id,
                p.fixation_id,
                p.index,
                p.duration,
                u8::from(p.relevant)
            );
        }
        s
    }

    pub fn startup_csv(&self) -> String {
        let mut s = String::from("session,query,startup,source_fixation\n");
        for (session, r) in &self.startups {
            let v = r.startup.map(|v| v.to_string()).unwrap_or_default();
            let f = r.source_fixation.as_ref().map(|f| f.0.clone()).unwrap_or_default();
            let _ = writeln!(s, "{session},{},{v},{f}", r.query_id);
        }
        s
    }
}

/// Write the four CSVs and `summary.json` into `dir`; returns written paths.
pub fn write_analysis(outputs: &AnalysisOutputs, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut summary = serde_json::to_string_pretty(&outputs.summary).expect("summary serializes");
    summary.push('\n');
    let files = [
        ("cooccurrence.csv", outputs.cooccurrence_csv()),
        ("duration_profile.csv", outputs.duration_profile_csv()),
        ("relevancy_points.csv", outputs.relevancy_points_csv()),
        ("startup.csv", outputs.startup_csv()),
        ("summary.json", summary),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}
