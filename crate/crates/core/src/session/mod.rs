//! Timestamped domain types for one recorded wearing session, plus loading,
//! validation and canonical re-serialization.

mod interval;
mod lexicon;
mod load;
mod write;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use interval::{fixations_in_window, intervals_intersect, InvalidInterval};
pub use lexicon::{normalize_token, PronounLexicon, DEFAULT_PRONOUNS};
pub use load::{load_ground_truth, load_session, load_session_with, LoadOptions, Manifest, TimeUnit};
pub use write::write_session;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema error in {file}: {detail}")]
    Schema { file: String, detail: String },
    #[error("ordering error in {file}: {detail}")]
    Ordering { file: String, detail: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SessionError {
    pub(crate) fn schema(file: impl Into<String>, detail: impl Into<String>) -> Self {
        SessionError::Schema { file: file.into(), detail: detail.into() }
    }

    pub(crate) fn ordering(file: impl Into<String>, detail: impl Into<String>) -> Self {
        SessionError::Ordering { file: file.into(), detail: detail.into() }
    }
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(FixationId);
string_id!(QueryId);

/// Raw gaze sample in session-relative seconds and normalized scene coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub id: FixationId,
    pub t_start: f64,
    pub t_end: f64,
    pub x: f64,
    pub y: f64,
}

impl Fixation {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Eye trackers may report gaze outside the scene camera frame. Such
    /// fixations are kept as-is and clamped where a point is consumed.
    pub fn is_off_frame(&self) -> bool {
        !(0.0..=1.0).contains(&self.x) || !(0.0..=1.0).contains(&self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub text: String,
    pub t_start: f64,
    pub t_end: f64,
    pub index: usize,
    pub is_pronoun: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpan {
    pub id: QueryId,
    pub t_start: f64,
    pub t_end: f64,
    pub words: Vec<TimedWord>,
    pub audio_ref: Option<String>,
}

impl QuerySpan {
    /// Spoken text, words joined by single spaces.
    pub fn text(&self) -> String {
        self.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn pronoun_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().filter(|w| w.is_pronoun).map(|w| w.index)
    }
}

/// The annotated relevance mapping between fixations and queries. A missing
/// pair means "unlabeled", which is distinct from irrelevant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceLabels {
    entries: BTreeMap<(QueryId, FixationId), bool>,
}

impl RelevanceLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: QueryId, fixation: FixationId, relevant: bool) {
        self.entries.insert((query, fixation), relevant);
    }

    pub fn get(&self, query: &QueryId, fixation: &FixationId) -> Option<bool> {
        // BTreeMap lookups need an owned tuple key
        self.entries.get(&(query.clone(), fixation.clone())).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &FixationId, bool)> {
        self.entries.iter().map(|((q, f), r)| (q, f, *r))
    }

    pub fn set_relevant(&mut self, query: &QueryId, fixation: &FixationId, relevant: bool) -> bool {
        match self.entries.get_mut(&(query.clone(), fixation.clone())) {
            Some(v) => {
                *v = relevant;
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub t: f64,
    pub uri: String,
    pub width: u32,
    pub height: u32,
    pub sharpness: Option<f64>,
}

/// Key object names per query plus groups of names treated as equivalent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub entries: BTreeMap<QueryId, BTreeSet<String>>,
    pub synonym_groups: Vec<BTreeSet<String>>,
}

impl GroundTruth {
    pub fn truth_for(&self, query: &QueryId) -> BTreeSet<String> {
        self.entries.get(query).cloned().unwrap_or_default()
    }

    /// Every name the vocabulary knows, truth names and synonyms alike.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> = self.entries.values().flatten().cloned().collect();
        for g in &self.synonym_groups {
            names.extend(g.iter().cloned());
        }
        names
    }

    /// Canonical spelling for a name: truth names win over synonyms, then the
    /// lexicographically smallest member of the synonym group.
    pub fn canonical(&self, name: &str) -> String {
        let name = name.to_lowercase();
        let Some(group) = self.synonym_groups.iter().find(|g| g.contains(&name)) else {
            return name;
        };
        let truth_names: BTreeSet<&String> = self.entries.values().flatten().collect();
        group.iter().find(|n| truth_names.contains(n)).or_else(|| group.iter().next()).cloned().unwrap_or(name)
    }

    /// All surface forms that map to `canonical`.
    pub fn surface_forms(&self, canonical: &str) -> BTreeSet<String> {
        let mut forms = BTreeSet::from([canonical.to_lowercase()]);
        for g in &self.synonym_groups {
            if g.contains(&canonical.to_lowercase()) {
                forms.extend(g.iter().cloned());
            }
        }
        forms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    /// Directory the session files were loaded from; relative URIs resolve here.
    pub root: PathBuf,
    pub gaze: Vec<GazeSample>,
    pub fixations: Vec<Fixation>,
    pub queries: Vec<QuerySpan>,
    pub frames: Vec<FrameRef>,
    pub labels: Option<RelevanceLabels>,
    pub truth: Option<GroundTruth>,
}

impl Session {
    pub fn query(&self, id: &QueryId) -> Option<&QuerySpan> {
        self.queries.iter().find(|q| &q.id == id)
    }

    pub fn fixation(&self, id: &FixationId) -> Option<&Fixation> {
        self.fixations.iter().find(|f| &f.id == id)
    }

    pub fn fixations_in_window(&self, t_lo: f64, t_hi: f64) -> &[Fixation] {
        fixations_in_window(&self.fixations, t_lo, t_hi)
    }

    pub fn resolve(&self, uri: &str) -> PathBuf {
        let p = Path::new(uri);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn off_frame_fixations(&self) -> impl Iterator<Item = &Fixation> {
        self.fixations.iter().filter(|f| f.is_off_frame())
    }
}
