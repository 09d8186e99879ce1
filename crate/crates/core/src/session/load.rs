use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    Fixation, FixationId, FrameRef, GazeSample, GroundTruth, PronounLexicon, QueryId, QuerySpan, RelevanceLabels,
    Session, SessionError, TimedWord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    S,
    Ms,
    Us,
    Ns,
}

impl TimeUnit {
    fn seconds_per_unit(self) -> f64 {
        match self {
            TimeUnit::S => 1.0,
            TimeUnit::Ms => 1e-3,
            TimeUnit::Us => 1e-6,
            TimeUnit::Ns => 1e-9,
        }
    }
}

/// `manifest.json`. Paths are relative to the manifest's directory.
///
/// `time_unit`/`time_origin` describe the source clock; every timestamp is
/// converted to session-relative seconds on load. `pixel_size` marks gaze and
/// fixation coordinates as scene-camera pixels to be normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub gaze: String,
    pub fixations: String,
    pub transcript: String,
    pub queries: String,
    pub frames: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_unit: Option<TimeUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_origin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Overrides both the manifest lexicon and the built-in list.
    pub lexicon: Option<PronounLexicon>,
}

struct Clock {
    origin: f64,
    scale: f64,
}

impl Clock {
    fn seconds(&self, raw: f64) -> f64 {
        (raw - self.origin) * self.scale
    }
}

struct Coords {
    size: Option<[f64; 2]>,
}

impl Coords {
    fn normalize(&self, x: f64, y: f64) -> (f64, f64) {
        match self.size {
            Some([w, h]) => (x / w, y / h),
            None => (x, y),
        }
    }
}

/// Load a session from `manifest.json`, or from a directory containing one.
pub fn load_session(manifest_path: &Path) -> Result<Session, SessionError> {
    load_session_with(manifest_path, &LoadOptions::default())
}

pub fn load_session_with(manifest_path: &Path, opts: &LoadOptions) -> Result<Session, SessionError> {
    let manifest_path =
        if manifest_path.is_dir() { manifest_path.join("manifest.json") } else { manifest_path.to_path_buf() };
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let manifest: Manifest = read_json(&manifest_path, "manifest.json")?;

    let path = |rel: &str| -> Result<PathBuf, SessionError> {
        let p = root.join(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(SessionError::MissingFile(p))
        }
    };

    let lexicon = match (&opts.lexicon, &manifest.lexicon) {
        (Some(lex), _) => lex.clone(),
        (None, Some(rel)) => PronounLexicon::from_file(&path(rel)?)?,
        (None, None) => PronounLexicon::default(),
    };
    let clock = Clock {
        origin: manifest.time_origin.unwrap_or(0.0),
        scale: manifest.time_unit.unwrap_or_default().seconds_per_unit(),
    };
    let coords = Coords { size: manifest.pixel_size };
    if let Some([w, h]) = manifest.pixel_size {
        if !(w > 0.0 && h > 0.0) {
            return Err(SessionError::schema("manifest.json", "pixel_size must be positive"));
        }
    }

    let gaze = parse_gaze(&path(&manifest.gaze)?, &clock, &coords)?;
    let fixations = parse_fixations(&path(&manifest.fixations)?, &clock, &coords)?;
    let queries = parse_queries(&path(&manifest.queries)?, &path(&manifest.transcript)?, &clock, &lexicon)?;
    let frames = parse_frames(&path(&manifest.frames)?, &clock)?;
    let labels = match &manifest.labels {
        Some(rel) => Some(parse_labels(&path(rel)?, &queries, &fixations)?),
        None => None,
    };
    let truth = match &manifest.truth {
        Some(rel) => Some(parse_truth(&path(rel)?, Some(&queries))?),
        None => None,
    };

    let id = manifest.id.clone().unwrap_or_else(|| {
        root.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "session".into())
    });

    Ok(Session { id, root, gaze, fixations, queries, frames, labels, truth })
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path, label: &str) -> Result<T, SessionError> {
    if !p.is_file() {
        return Err(SessionError::MissingFile(p.to_path_buf()));
    }
    let text = std::fs::read_to_string(p).map_err(|source| SessionError::Io { path: p.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| SessionError::schema(label, e.to_string()))
}

/// Header-addressed CSV reader with decimal parsing and row-aware errors.
struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(p: &Path) -> Result<Self, SessionError> {
        let file = file_label(p);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(p)
            .map_err(|e| SessionError::schema(&file, e.to_string()))?;
        let headers =
            rdr.headers().map_err(|e| SessionError::schema(&file, e.to_string()))?.iter().map(str::to_string).collect();
        let rows =
            rdr.records().collect::<Result<Vec<_>, _>>().map_err(|e| SessionError::schema(&file, e.to_string()))?;
        Ok(Self { file, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize, SessionError> {
        self.optional_column(name).ok_or_else(|| SessionError::schema(&self.file, format!("missing column `{name}`")))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn text<'a>(&self, row: &'a csv::StringRecord, col: usize, line: usize) -> Result<&'a str, SessionError> {
        row.get(col).ok_or_else(|| SessionError::schema(&self.file, format!("row {line}: missing field")))
    }

    fn number(&self, row: &csv::StringRecord, col: usize, line: usize) -> Result<f64, SessionError> {
        let s = self.text(row, col, line)?;
        let v: f64 = s
            .parse()
            .map_err(|_| SessionError::schema(&self.file, format!("row {line}: `{s}` is not a decimal number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SessionError::schema(&self.file, format!("row {line}: non-finite value")))
        }
    }

    fn optional_number(
        &self,
        row: &csv::StringRecord,
        col: Option<usize>,
        line: usize,
    ) -> Result<Option<f64>, SessionError> {
        match col {
            Some(c) if row.get(c).is_some_and(|s| !s.is_empty()) => self.number(row, c, line).map(Some),
            _ => Ok(None),
        }
    }
}

fn parse_gaze(p: &Path, clock: &Clock, coords: &Coords) -> Result<Vec<GazeSample>, SessionError> {
    let table = Table::read(p)?;
    let (ct, cx, cy) = (table.column("t")?, table.column("x")?, table.column("y")?);
    let cc = table.optional_column("confidence");
    let mut out: Vec<GazeSample> = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let t = clock.seconds(table.number(row, ct, line)?);
        let (x, y) = coords.normalize(table.number(row, cx, line)?, table.number(row, cy, line)?);
        let confidence = table.optional_number(row, cc, line)?;
        if let Some(c) = confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(SessionError::schema(&table.file, format!("row {line}: confidence outside [0,1]")));
            }
        }
        if let Some(prev) = out.last() {
            if t < prev.t {
                return Err(SessionError::ordering(&table.file, format!("row {line}: t decreases")));
            }
        }
        out.push(GazeSample { t, x, y, confidence });
    }
    Ok(out)
}

fn parse_fixations(p: &Path, clock: &Clock, coords: &Coords) -> Result<Vec<Fixation>, SessionError> {
    let table = Table::read(p)?;
    let cid = table.column("id")?;
    let (cs, ce) = (table.column("t_start")?, table.column("t_end")?);
    let (cx, cy) = (table.column("x")?, table.column("y")?);
    let mut out: Vec<Fixation> = Vec::with_capacity(table.rows.len());
    let mut seen = HashSet::new();
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let id = table.text(row, cid, line)?.to_string();
        if id.is_empty() {
            return Err(SessionError::schema(&table.file, format!("row {line}: empty id")));
        }
        if !seen.insert(id.clone()) {
            return Err(SessionError::schema(&table.file, format!("row {line}: duplicate id `{id}`")));
        }
        let t_start = clock.seconds(table.number(row, cs, line)?);
        let t_end = clock.seconds(table.number(row, ce, line)?);
        if !(t_start < t_end) {
            return Err(SessionError::ordering(
                &table.file,
                format!("row {line}: fixation `{id}` has t_end <= t_start"),
            ));
        }
        let (x, y) = coords.normalize(table.number(row, cx, line)?, table.number(row, cy, line)?);
        if let Some(prev) = out.last() {
            if t_start < prev.t_start {
                return Err(SessionError::ordering(&table.file, format!("row {line}: not sorted by t_start")));
            }
            if t_start < prev.t_end {
                return Err(SessionError::schema(
                    &table.file,
                    format!("row {line}: fixation `{id}` overlaps `{}`", prev.id),
                ));
            }
        }
        out.push(Fixation { id: FixationId(id), t_start, t_end, x, y });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawQuery {
    id: String,
    t_start: f64,
    t_end: f64,
    #[serde(default)]
    audio: Option<String>,
}

#[derive(Deserialize)]
struct RawWord {
    text: String,
    t_start: f64,
    t_end: f64,
}

fn parse_queries(
    queries_path: &Path,
    transcript_path: &Path,
    clock: &Clock,
    lexicon: &PronounLexicon,
) -> Result<Vec<QuerySpan>, SessionError> {
    let qfile = file_label(queries_path);
    let tfile = file_label(transcript_path);
    let raw: Vec<RawQuery> = read_json(queries_path, &qfile)?;
    let mut transcript: BTreeMap<String, Vec<RawWord>> = read_json(transcript_path, &tfile)?;

    let mut out: Vec<QuerySpan> = Vec::with_capacity(raw.len());
    let mut seen = HashSet::new();
    for rq in raw {
        if !seen.insert(rq.id.clone()) {
            return Err(SessionError::schema(&qfile, format!("duplicate query id `{}`", rq.id)));
        }
        let t_start = clock.seconds(rq.t_start);
        let t_end = clock.seconds(rq.t_end);
        if !(t_start.is_finite() && t_end.is_finite() && t_start <= t_end) {
            return Err(SessionError::ordering(&qfile, format!("query `{}` has t_end < t_start", rq.id)));
        }
        if let Some(prev) = out.last() {
            if t_start < prev.t_start {
                return Err(SessionError::ordering(&qfile, format!("query `{}` not sorted by t_start", rq.id)));
            }
            if t_start <= prev.t_end {
                return Err(SessionError::ordering(&qfile, format!("query `{}` overlaps `{}`", rq.id, prev.id)));
            }
        }

        let raw_words = transcript.remove(&rq.id).unwrap_or_default();
        let mut words: Vec<TimedWord> = Vec::with_capacity(raw_words.len());
        for (index, w) in raw_words.into_iter().enumerate() {
            let ws = clock.seconds(w.t_start);
            let we = clock.seconds(w.t_end);
            if !(ws.is_finite() && we.is_finite() && ws <= we) {
                return Err(SessionError::ordering(
                    &tfile,
                    format!("query `{}` word {index} has t_end < t_start", rq.id),
                ));
            }
            if let Some(prev) = words.last() {
                if ws < prev.t_start {
                    return Err(SessionError::ordering(
                        &tfile,
                        format!("query `{}` word {index} not sorted by t_start", rq.id),
                    ));
                }
            }
            if ws < t_start || we > t_end {
                return Err(SessionError::ordering(
                    &tfile,
                    format!("query `{}` word {index} lies outside the query span", rq.id),
                ));
            }
            words.push(TimedWord {
                is_pronoun: lexicon.is_pronoun(&w.text),
                text: w.text,
                t_start: ws,
                t_end: we,
                index,
            });
        }
        if words.is_empty() && rq.audio.is_none() {
            return Err(SessionError::schema(
                &tfile,
                format!("query `{}` has neither transcript words nor audio", rq.id),
            ));
        }
        out.push(QuerySpan { id: QueryId(rq.id), t_start, t_end, words, audio_ref: rq.audio });
    }
    if let Some(orphan) = transcript.keys().next() {
        return Err(SessionError::DanglingReference(format!("transcript entry `{orphan}` has no matching query")));
    }
    Ok(out)
}

fn parse_frames(p: &Path, clock: &Clock) -> Result<Vec<FrameRef>, SessionError> {
    let table = Table::read(p)?;
    let ct = table.column("t")?;
    let cu = table.column("uri")?;
    let (cw, ch) = (table.column("width")?, table.column("height")?);
    let cs = table.optional_column("sharpness");
    let mut out: Vec<FrameRef> = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let t = clock.seconds(table.number(row, ct, line)?);
        let uri = table.text(row, cu, line)?.to_string();
        let dim = |c: usize| -> Result<u32, SessionError> {
            let s = table.text(row, c, line)?;
            match s.parse::<u32>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(SessionError::schema(&table.file, format!("row {line}: bad frame dimension `{s}`"))),
            }
        };
        let (width, height) = (dim(cw)?, dim(ch)?);
        let sharpness = table.optional_number(row, cs, line)?;
        if sharpness.is_some_and(|s| s < 0.0) {
            return Err(SessionError::schema(&table.file, format!("row {line}: negative sharpness")));
        }
        if let Some(prev) = out.last() {
            if t < prev.t {
                return Err(SessionError::ordering(&table.file, format!("row {line}: frames not sorted by t")));
            }
        }
        out.push(FrameRef { t, uri, width, height, sharpness });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawLabel {
    query: String,
    fixation: String,
    relevant: u8,
}

fn parse_labels(p: &Path, queries: &[QuerySpan], fixations: &[Fixation]) -> Result<RelevanceLabels, SessionError> {
    let file = file_label(p);
    let raw: Vec<RawLabel> = read_json(p, &file)?;
    let qids: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let fids: HashSet<&str> = fixations.iter().map(|f| f.id.as_str()).collect();
    let mut labels = RelevanceLabels::new();
    for l in raw {
        if !qids.contains(l.query.as_str()) {
            return Err(SessionError::DanglingReference(format!("label references unknown query `{}`", l.query)));
        }
        if !fids.contains(l.fixation.as_str()) {
            return Err(SessionError::DanglingReference(format!("label references unknown fixation `{}`", l.fixation)));
        }
        let relevant = match l.relevant {
            0 => false,
            1 => true,
            v => return Err(SessionError::schema(&file, format!("relevant must be 0 or 1, got {v}"))),
        };
        let (q, f) = (QueryId(l.query), FixationId(l.fixation));
        if let Some(prev) = labels.get(&q, &f) {
            if prev != relevant {
                return Err(SessionError::schema(&file, format!("conflicting labels for ({q}, {f})")));
            }
        }
        labels.insert(q, f, relevant);
    }
    Ok(labels)
}

pub(crate) const SYNONYMS_KEY: &str = "synonyms";

/// Read a truth file on its own, without checking query references.
pub fn load_ground_truth(p: &Path) -> Result<GroundTruth, SessionError> {
    parse_truth(p, None)
}

fn parse_truth(p: &Path, queries: Option<&[QuerySpan]>) -> Result<GroundTruth, SessionError> {
    let file = file_label(p);
    let raw: BTreeMap<String, Value> = read_json(p, &file)?;
    let qids: Option<HashSet<&str>> = queries.map(|qs| qs.iter().map(|q| q.id.as_str()).collect());
    let names = |v: &Value, ctx: &str| -> Result<BTreeSet<String>, SessionError> {
        let arr =
            v.as_array().ok_or_else(|| SessionError::schema(&file, format!("{ctx}: expected an array of names")))?;
        arr.iter()
            .map(|n| match n.as_str().map(str::trim) {
                Some(s) if !s.is_empty() => Ok(s.to_lowercase()),
                _ => Err(SessionError::schema(&file, format!("{ctx}: names must be non-empty strings"))),
            })
            .collect()
    };
    let mut truth = GroundTruth::default();
    for (key, value) in &raw {
        if key == SYNONYMS_KEY {
            let groups =
                value.as_array().ok_or_else(|| SessionError::schema(&file, "synonyms: expected an array of arrays"))?;
            for g in groups {
                truth.synonym_groups.push(names(g, "synonyms")?);
            }
            continue;
        }
        if qids.as_ref().is_some_and(|ids| !ids.contains(key.as_str())) {
            return Err(SessionError::DanglingReference(format!("truth references unknown query `{key}`")));
        }
        truth.entries.insert(QueryId(key.clone()), names(value, key)?);
    }
    Ok(truth)
}
