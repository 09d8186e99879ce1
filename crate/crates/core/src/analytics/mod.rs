//! Quantitative measures of how gaze and speech line up around a query:
//! word-to-fixation alignment, longest relevant/irrelevant fixations and
//! their neighbourhoods, relevant gaze around pronouns, the per-query order of
//! relevant fixations, and the startup time before speaking.
//!
//! Everything here is a pure function over immutable sessions.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::session::{fixations_in_window, Fixation, FixationId, QueryId, QuerySpan, RelevanceLabels, Session};

pub use report::{write_analysis, AnalysisOutputs, AnalysisSummary};

/// Upper bound on how long before query onset gaze still counts as startup.
pub const STARTUP_CAP_S: f64 = 20.0;

/// Default lead of the per-query analysis window `[t_start - lead, t_end]`.
pub const WINDOW_LEAD_S: f64 = 20.0;

pub const DEFAULT_PRONOUN_WINDOW: usize = 5;
pub const DEFAULT_PROFILE_RADIUS: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("fixation `{fixation}` has no relevance label for query `{query}`")]
    UnlabeledFixation { query: QueryId, fixation: FixationId },
    #[error("no defined startup time to summarize")]
    EmptyInput,
}

/// Fixations intersecting `[t_start - lead, t_end]` of `query`.
pub fn query_window<'a>(query: &QuerySpan, fixations: &'a [Fixation], lead: f64) -> &'a [Fixation] {
    fixations_in_window(fixations, query.t_start - lead, query.t_end)
}

/// Word index -> ids of fixations whose closed span intersects the word's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub query: QueryId,
    pub words: Vec<Vec<FixationId>>,
}

impl AlignmentMap {
    pub fn fixations_for(&self, word_index: usize) -> &[FixationId] {
        self.words.get(word_index).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Requires `fixations` sorted by start and non-overlapping.
pub fn align(query: &QuerySpan, fixations: &[Fixation]) -> AlignmentMap {
    let words = query
        .words
        .iter()
        .map(|w| fixations_in_window(fixations, w.t_start, w.t_end).iter().map(|f| f.id.clone()).collect())
        .collect();
    AlignmentMap { query: query.id.clone(), words }
}

/// `a` ranks before `b` when longer, then earlier, then smaller id.
fn longer(a: &Fixation, b: &Fixation) -> bool {
    let (da, db) = (a.duration(), b.duration());
    if da != db {
        return da > db;
    }
    if a.t_start != b.t_start {
        return a.t_start < b.t_start;
    }
    a.id < b.id
}

/// Longest fixation among `fixations` whose label for `query` matches
/// `want_relevant`. Every candidate must be labeled.
pub fn longest_fixation<'a>(
    query: &QuerySpan,
    fixations: &'a [Fixation],
    labels: &RelevanceLabels,
    want_relevant: bool,
) -> Result<Option<&'a Fixation>, AnalyticsError> {
    let mut best: Option<&Fixation> = None;
    for f in fixations {
        let label = labels
            .get(&query.id, &f.id)
            .ok_or_else(|| AnalyticsError::UnlabeledFixation { query: query.id.clone(), fixation: f.id.clone() })?;
        if label != want_relevant {
            continue;
        }
        if best.is_none_or(|b| longer(f, b)) {
            best = Some(f);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBin {
    pub mean: f64,
    pub count: usize,
}

/// Mean fixation duration at each offset from the per-query anchor fixation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationProfile {
    pub relevant: bool,
    pub bins: BTreeMap<i64, DurationBin>,
    /// Queries without a matching anchor.
    pub skipped: usize,
}

impl DurationProfile {
    pub fn at(&self, k: i64) -> Option<DurationBin> {
        self.bins.get(&k).copied()
    }
}

pub fn duration_profile(sessions: &[Session], want_relevant: bool, radius: usize) -> DurationProfile {
    duration_profile_with(sessions, want_relevant, radius, WINDOW_LEAD_S)
}

/// Anchors each query at its longest relevant (or irrelevant) labeled
/// fixation and averages the durations of the fixations `k` positions away
/// in the query window. Unlabeled fixations can be neighbours but never anchors.
pub fn duration_profile_with(sessions: &[Session], want_relevant: bool, radius: usize, lead: f64) -> DurationProfile {
    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    let mut skipped = 0;
    let r = radius as i64;
    for s in sessions {
        let Some(labels) = &s.labels else { continue };
        for q in &s.queries {
            let window = query_window(q, &s.fixations, lead);
            let labeled: Vec<Fixation> =
                window.iter().filter(|f| labels.get(&q.id, &f.id).is_some()).cloned().collect();
            let anchor = longest_fixation(q, &labeled, labels, want_relevant)
                .expect("candidates are pre-filtered to labeled fixations")
                .map(|a| a.id.clone());
            let Some(anchor) = anchor else {
                skipped += 1;
                continue;
            };
            let pos = window.iter().position(|f| f.id == anchor).expect("anchor comes from the window") as i64;
            for k in -r..=r {
                let idx = pos + k;
                if idx < 0 || idx >= window.len() as i64 {
                    continue;
                }
                let e = sums.entry(k).or_insert((0.0, 0));
                e.0 += window[idx as usize].duration();
                e.1 += 1;
            }
        }
    }
    DurationProfile {
        relevant: want_relevant,
        bins: sums.into_iter().map(|(k, (sum, count))| (k, DurationBin { mean: sum / count as f64, count })).collect(),
        skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceRow {
    pub r: i64,
    pub c: usize,
    pub c_all: usize,
    /// `c / c_all`, undefined when nothing aligned at this offset.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceProfile {
    pub rows: Vec<CooccurrenceRow>,
}

impl CooccurrenceProfile {
    pub fn at(&self, r: i64) -> Option<&CooccurrenceRow> {
        self.rows.iter().find(|row| row.r == r)
    }
}

/// Counts labeled fixations aligned to the words around every pronoun.
///
/// For each pronoun occurrence and offset `r`, the fixations aligned to word
/// `j_pron + r` are counted once each. `c` counts those labeled relevant to the
/// query, `c_all` all labeled ones; unlabeled fixations count in neither.
pub fn pronoun_cooccurrence(sessions: &[Session], window: usize) -> CooccurrenceProfile {
    let w = window as i64;
    let mut c = vec![0usize; 2 * window + 1];
    let mut c_all = vec![0usize; 2 * window + 1];
    for s in sessions {
        let Some(labels) = &s.labels else { continue };
        for q in &s.queries {
            let alignment = align(q, &s.fixations);
            for j in q.pronoun_indices() {
                for r in -w..=w {
                    let idx = j as i64 + r;
                    if idx < 0 || idx >= q.words.len() as i64 {
                        continue;
                    }
                    let slot: BTreeSet<&FixationId> = alignment.fixations_for(idx as usize).iter().collect();
                    let bin = (r + w) as usize;
                    for f in slot {
                        match labels.get(&q.id, f) {
                            Some(true) => {
                                c[bin] += 1;
                                c_all[bin] += 1;
                            }
                            Some(false) => c_all[bin] += 1,
                            None => {}
                        }
                    }
                }
            }
        }
    }
    let rows = (-w..=w)
        .map(|r| {
            let bin = (r + w) as usize;
            CooccurrenceRow {
                r,
                c: c[bin],
                c_all: c_all[bin],
                p: (c_all[bin] > 0).then(|| c[bin] as f64 / c_all[bin] as f64),
            }
        })
        .collect();
    CooccurrenceProfile { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevancyPoint {
    pub session_id: String,
    pub query_id: QueryId,
    pub fixation_id: FixationId,
    /// Position of the fixation in the query-window sequence.
    pub index: usize,
    pub duration: f64,
    pub relevant: bool,
}

pub fn relevancy_distribution(sessions: &[Session]) -> Vec<RelevancyPoint> {
    relevancy_distribution_with(sessions, WINDOW_LEAD_S)
}

pub fn relevancy_distribution_with(sessions: &[Session], lead: f64) -> Vec<RelevancyPoint> {
    let mut out = Vec::new();
    for s in sessions {
        let Some(labels) = &s.labels else { continue };
        for q in &s.queries {
            for (index, f) in query_window(q, &s.fixations, lead).iter().enumerate() {
                if let Some(relevant) = labels.get(&q.id, &f.id) {
                    out.push(RelevancyPoint {
                        session_id: s.id.clone(),
                        query_id: q.id.clone(),
                        fixation_id: f.id.clone(),
                        index,
                        duration: f.duration(),
                        relevant,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartupResult {
    pub query_id: QueryId,
    pub startup: Option<f64>,
    pub source_fixation: Option<FixationId>,
}

/// Earliest relevant fixation starting at most `cap` seconds before the
/// query onset (and not after it); the startup time is its lead on the onset.
pub fn startup_time(query: &QuerySpan, fixations: &[Fixation], labels: &RelevanceLabels, cap: f64) -> StartupResult {
    let mut best: Option<(f64, &Fixation)> = None;
    for f in fixations {
        if labels.get(&query.id, &f.id) != Some(true) {
            continue;
        }
        let lead = query.t_start - f.t_start;
        if !(0.0..=cap).contains(&lead) {
            continue;
        }
        let better = match best {
            None => true,
            Some((bl, bf)) => lead > bl || (lead == bl && f.id < bf.id),
        };
        if better {
            best = Some((lead, f));
        }
    }
    StartupResult {
        query_id: query.id.clone(),
        startup: best.map(|(l, _)| l),
        source_fixation: best.map(|(_, f)| f.id.clone()),
    }
}

/// Startup result for every query of every labeled session.
pub fn startup_times(sessions: &[Session], cap: f64) -> Vec<(String, StartupResult)> {
    sessions
        .iter()
        .filter_map(|s| s.labels.as_ref().map(|l| (s, l)))
        .flat_map(|(s, labels)| {
            s.queries.iter().map(move |q| (s.id.clone(), startup_time(q, &s.fixations, labels, cap)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartupStats {
    pub mean: f64,
    pub median: f64,
    pub defined: usize,
    pub undefined: usize,
}

pub fn startup_stats<'a, I>(results: I) -> Result<StartupStats, AnalyticsError>
where
    I: IntoIterator<Item = &'a StartupResult>,
{
    let mut values = Vec::new();
    let mut undefined = 0;
    for r in results {
        match r.startup {
            Some(v) => values.push(v),
            None => undefined += 1,
        }
    }
    if values.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 };
    Ok(StartupStats { mean, median, defined: n, undefined })
}
