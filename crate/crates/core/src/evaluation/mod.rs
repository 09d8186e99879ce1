//! Objective scoring: which vocabulary objects a response names, how that
//! compares with the ground truth, and per-variant averages split by
//! whether the user said the object's name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::{AssistantResponse, RunTrace, Variant};
use crate::session::{GroundTruth, QueryId};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("query has no ground-truth objects")]
    EmptyTruth,
    #[error("cannot read `{path}`: {detail}")]
    Read { path: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryCategory {
    Explicit,
    Ambiguous,
    Unrelated,
}

/// Which response fields count as claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchScope {
    pub answer: bool,
    pub query: bool,
    pub thought: bool,
}

impl Default for MatchScope {
    fn default() -> Self {
        Self { answer: true, query: true, thought: false }
    }
}

/// Lowercased alphanumeric tokens; everything else separates.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

fn mentions(tokens: &[String], surface: &str) -> bool {
    contains_phrase(tokens, &tokenize(surface))
}

/// Canonical vocabulary names mentioned in the scoped response fields.
pub fn extract_predicted_objects(
    response: &AssistantResponse,
    truth: &GroundTruth,
    scope: MatchScope,
) -> BTreeSet<String> {
    let mut tokens = Vec::new();
    for (on, field) in
        [(scope.answer, &response.answer), (scope.query, &response.query), (scope.thought, &response.thought)]
    {
        if on {
            tokens.extend(tokenize(field));
            // fields never join into a phrase
            tokens.push(String::new());
        }
    }
    truth.vocabulary().into_iter().filter(|name| mentions(&tokens, name)).map(|name| truth.canonical(&name)).collect()
}

pub fn classify_query(query_text: &str, truth_set: &BTreeSet<String>, truth: &GroundTruth) -> QueryCategory {
    if truth_set.is_empty() {
        return QueryCategory::Unrelated;
    }
    let tokens = tokenize(query_text);
    let named = |obj: &String| truth.surface_forms(obj).iter().any(|form| mentions(&tokens, form));
    if truth_set.iter().all(named) {
        QueryCategory::Explicit
    } else {
        QueryCategory::Ambiguous
    }
}

/// Set recall and precision; precision is `None` for an empty prediction.
pub fn score_query(
    truth_set: &BTreeSet<String>,
    predicted: &BTreeSet<String>,
) -> Result<(f64, Option<f64>), EvalError> {
    if truth_set.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let hit = truth_set.intersection(predicted).count() as f64;
    let recall = hit / truth_set.len() as f64;
    let precision = (!predicted.is_empty()).then(|| hit / predicted.len() as f64);
    Ok((recall, precision))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub session: String,
    pub query_id: String,
    pub variant: Variant,
    pub truth_set: BTreeSet<String>,
    pub predicted_set: BTreeSet<String>,
    /// `None` only for unrelated queries.
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub category: QueryCategory,
}

/// One `respond` output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub variant: Variant,
    pub session: String,
    pub query_id: String,
    pub seed: u64,
    pub response: AssistantResponse,
    pub trace: RunTrace,
}

pub fn evaluate(result: &QueryResult, truth: &GroundTruth, scope: MatchScope) -> EvalRecord {
    let truth_set: BTreeSet<String> =
        truth.truth_for(&QueryId(result.query_id.clone())).iter().map(|n| truth.canonical(n)).collect();
    let predicted_set = extract_predicted_objects(&result.response, truth, scope);
    let category = classify_query(&result.trace.query_text, &truth_set, truth);
    let (recall, precision) = match score_query(&truth_set, &predicted_set) {
        Ok((r, p)) => (Some(r), p),
        Err(EvalError::EmptyTruth) => (None, None),
        Err(_) => unreachable!("score_query only fails on empty truth"),
    };
    EvalRecord {
        session: result.session.clone(),
        query_id: result.query_id.clone(),
        variant: result.variant,
        truth_set,
        predicted_set,
        recall,
        precision,
        category,
    }
}

/// Every `*.json` result file under `dir`, recursively, in path order.
pub fn read_results(dir: &Path) -> Result<Vec<QueryResult>, EvalError> {
    let read_err = |p: &Path, d: String| EvalError::Read { path: p.display().to_string(), detail: d };
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| read_err(&d, e.to_string()))? {
            let p = entry.map_err(|e| read_err(&d, e.to_string()))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| read_err(&p, e.to_string()))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| read_err(&p, e.to_string()))?;
        // run manifests and other side files live next to results
        if v.get("response").is_none() || v.get("trace").is_none() {
            continue;
        }
        out.push(serde_json::from_value(v).map_err(|e| read_err(&p, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportCategory {
    All,
    Explicit,
    Ambiguous,
}

impl ReportCategory {
    pub const ALL: [ReportCategory; 3] = [ReportCategory::All, ReportCategory::Explicit, ReportCategory::Ambiguous];

    fn admits(self, c: QueryCategory) -> bool {
        match self {
            ReportCategory::All => c != QueryCategory::Unrelated,
            ReportCategory::Explicit => c == QueryCategory::Explicit,
            ReportCategory::Ambiguous => c == QueryCategory::Ambiguous,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ReportCategory::All => "All",
            ReportCategory::Explicit => "Explicit",
            ReportCategory::Ambiguous => "Ambiguous",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub count: usize,
    pub mean_recall: Option<f64>,
    pub mean_precision: Option<f64>,
    pub precision_defined: usize,
    pub precision_undefined: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub categories: BTreeMap<ReportCategory, CategoryStats>,
    pub unrelated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub variants: BTreeMap<Variant, VariantReport>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Unweighted per-query means for each (variant, category).
pub fn aggregate(records: &[EvalRecord]) -> AggregateReport {
    let mut report = AggregateReport::default();
    let variants: BTreeSet<Variant> = records.iter().map(|r| r.variant).collect();
    for v in variants {
        let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.variant == v).collect();
        let mut vr = VariantReport {
            unrelated: mine.iter().filter(|r| r.category == QueryCategory::Unrelated).count(),
            ..Default::default()
        };
        for cat in ReportCategory::ALL {
            let rows: Vec<&&EvalRecord> = mine.iter().filter(|r| cat.admits(r.category)).collect();
            let recalls: Vec<f64> = rows.iter().filter_map(|r| r.recall).collect();
            let precisions: Vec<f64> = rows.iter().filter_map(|r| r.precision).collect();
            vr.categories.insert(
                cat,
                CategoryStats {
                    count: rows.len(),
                    mean_recall: mean(&recalls),
                    mean_precision: mean(&precisions),
                    precision_defined: precisions.len(),
                    precision_undefined: rows.len() - precisions.len(),
                },
            );
        }
        report.variants.insert(v, vr);
    }
    report
}

impl AggregateReport {
    pub fn stats(&self, v: Variant, c: ReportCategory) -> Option<&CategoryStats> {
        self.variants.get(&v)?.categories.get(&c)
    }

    /// Rows are metric x category, columns the six variants in fixed order;
    /// variants without results and undefined means are left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,category");
        for v in Variant::ALL {
            out.push(',');
            out.push_str(v.name());
        }
        out.push('\n');
        type Cell = fn(&CategoryStats) -> String;
        let metrics: [(&str, Cell); 4] = [
            ("recall", |s| s.mean_recall.map(|x| format!("{x:.4}")).unwrap_or_default()),
            ("precision", |s| s.mean_precision.map(|x| format!("{x:.4}")).unwrap_or_default()),
            ("queries", |s| s.count.to_string()),
            ("undefined_precision", |s| s.precision_undefined.to_string()),
        ];
        for (metric, cell) in metrics {
            for cat in ReportCategory::ALL {
                let _ = write!(out, "{metric},{}", cat.name());
                for v in Variant::ALL {
                    out.push(',');
                    if let Some(s) = self.stats(v, cat) {
                        out.push_str(&cell(s));
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}
