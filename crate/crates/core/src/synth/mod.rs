//! Synthetic sessions with planted mouth-eye coordination.
//!
//! Every query lives in its own block of time: a pre-query stretch holding
//! the startup fixation and a few irrelevant fillers, then the spoken words
//! with fixations planted inside individual word spans. Blocks are spaced
//! so that no query's analysis window reaches into another block, and all
//! timestamps sit on a 1/1024 s grid so planted offsets survive exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analytics::{STARTUP_CAP_S, WINDOW_LEAD_S};
use crate::session::{
    write_session, Fixation, FixationId, FrameRef, GazeSample, GroundTruth, PronounLexicon, QueryId, QuerySpan,
    RelevanceLabels, Session, SessionError, TimedWord,
};

const GRID: f64 = 1024.0;
const WORD_GAP_S: f64 = 0.05;
const WORD_MIN_S: f64 = 0.2;
const WORD_MAX_S: f64 = 0.6;
/// Clearance between a planted word fixation and its word's edges.
const EDGE_S: f64 = 1.0 / 64.0;
const MAX_FILLERS: u32 = 3;
const FRAME_INTERVAL_S: f64 = 1.0;

const PRONOUNS: [&str; 5] = ["this", "that", "it", "these", "those"];
const FILLERS: [&str; 14] =
    ["what", "is", "how", "much", "does", "cost", "where", "can", "i", "buy", "the", "a", "tell", "me"];
const OBJECTS: [&str; 10] = ["apple", "mug", "book", "plant", "lamp", "clock", "remote", "bottle", "chair", "phone"];

fn q(t: f64) -> f64 {
    (t * GRID).round() / GRID
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("session was not produced by this config and seed")]
    SeedMismatch,
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartupFamily {
    #[default]
    Normal,
    LogNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub query_count: usize,
    pub words_per_query: (usize, usize),
    /// Probability that each word is a pronoun.
    pub pronoun_rate: f64,
    pub startup_mean: f64,
    /// Standard deviation of the startup distribution before truncation.
    pub startup_spread: f64,
    pub startup_family: StartupFamily,
    /// Probability of a relevant fixation concurrent with each pronoun.
    pub pronoun_cooccurrence_rate: f64,
    pub relevant_duration_mean: f64,
    pub irrelevant_duration_mean: f64,
    /// Duration standard deviation as a fraction of the mean.
    pub duration_spread: f64,
    /// Probability of an irrelevant glance on a word, and per filler slot
    /// before the query.
    pub wander_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            query_count: 20,
            words_per_query: (4, 10),
            pronoun_rate: 0.3,
            startup_mean: 4.62,
            startup_spread: 1.5,
            startup_family: StartupFamily::Normal,
            pronoun_cooccurrence_rate: 0.7,
            relevant_duration_mean: 1.1,
            irrelevant_duration_mean: 0.75,
            duration_spread: 0.2,
            wander_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        for (name, r) in [
            ("pronoun_rate", self.pronoun_rate),
            ("pronoun_cooccurrence_rate", self.pronoun_cooccurrence_rate),
            ("wander_rate", self.wander_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, d) in [
            ("relevant_duration_mean", self.relevant_duration_mean),
            ("irrelevant_duration_mean", self.irrelevant_duration_mean),
        ] {
            if !(d.is_finite() && d > 0.0) {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if !(self.startup_mean.is_finite() && self.startup_mean > 0.0 && self.startup_mean <= STARTUP_CAP_S) {
            return bad("startup_mean must lie in (0, 20]");
        }
        if !(self.startup_spread.is_finite() && self.startup_spread >= 0.0) {
            return bad("startup_spread must be finite and non-negative");
        }
        if !(self.duration_spread.is_finite() && (0.0..1.0).contains(&self.duration_spread)) {
            return bad("duration_spread must lie in [0, 1)");
        }
        let (lo, hi) = self.words_per_query;
        if lo == 0 || lo > hi {
            return bad("words_per_query must be a non-empty range starting at 1 or more");
        }
        if self.query_count == 0 {
            return bad("query_count must be positive");
        }
        Ok(())
    }

    pub fn session_id(&self) -> String {
        format!("synth-{}", self.seed)
    }
}

/// What the generator planted for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedQuery {
    pub query_id: String,
    pub startup_offset: f64,
    pub startup_fixation: String,
    /// Longest relevant fixation (ties: earliest).
    pub longest_relevant: String,
    pub longest_irrelevant: Option<String>,
    /// Per word: planted fixations touching it and whether each is relevant.
    pub word_fixations: Vec<Vec<(String, bool)>>,
    pub pronoun_words: Vec<usize>,
}

/// The generator's own account of a session, used as a test oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOracle {
    pub queries: Vec<PlantedQuery>,
}

impl SynthOracle {
    /// `(c, c_all)` per offset, counted from the planting record.
    pub fn cooccurrence(&self, window: usize) -> BTreeMap<i64, (usize, usize)> {
        let w = window as i64;
        let mut out: BTreeMap<i64, (usize, usize)> = (-w..=w).map(|r| (r, (0, 0))).collect();
        for pq in &self.queries {
            for &j in &pq.pronoun_words {
                for r in -w..=w {
                    let k = j as i64 + r;
                    if k < 0 || k as usize >= pq.word_fixations.len() {
                        continue;
                    }
                    let e = out.get_mut(&r).expect("offset in range");
                    for (_, rel) in &pq.word_fixations[k as usize] {
                        e.1 += 1;
                        if *rel {
                            e.0 += 1;
                        }
                    }
                }
            }
        }
        out
    }
}

struct Planter<'a> {
    rng: ChaCha8Rng,
    cfg: &'a SynthConfig,
}

impl Planter<'_> {
    fn duration(&mut self, mean: f64) -> f64 {
        let sd = mean * self.cfg.duration_spread;
        if sd == 0.0 {
            return q(mean);
        }
        let n = Normal::new(mean, sd).expect("validated spread");
        loop {
            let d = q(n.sample(&mut self.rng));
            if d > 0.0 {
                return d;
            }
        }
    }

    /// Offset in (0, cap] from the configured family, by rejection.
    fn startup(&mut self) -> f64 {
        let (m, s) = (self.cfg.startup_mean, self.cfg.startup_spread);
        if s == 0.0 {
            return q(m);
        }
        loop {
            let x = match self.cfg.startup_family {
                StartupFamily::Normal => Normal::new(m, s).expect("validated").sample(&mut self.rng),
                StartupFamily::LogNormal => {
                    let var = (1.0 + (s / m).powi(2)).ln();
                    let mu = m.ln() - var / 2.0;
                    rand_distr::LogNormal::new(mu, var.sqrt()).expect("validated").sample(&mut self.rng)
                }
            };
            let x = q(x);
            if x > 0.0 && x <= STARTUP_CAP_S {
                return x;
            }
        }
    }

    fn point(&mut self) -> (f64, f64) {
        (q(self.rng.random::<f64>()), q(self.rng.random::<f64>()))
    }
}

struct Plant {
    t_start: f64,
    t_end: f64,
    relevant: bool,
    x: f64,
    y: f64,
}

/// Session plus the generator's record of what it planted.
pub fn generate_with_oracle(cfg: &SynthConfig) -> Result<(Session, SynthOracle), SynthError> {
    cfg.validate()?;
    let mut p = Planter { rng: ChaCha8Rng::seed_from_u64(cfg.seed), cfg };
    let lexicon = PronounLexicon::default();
    let mut queries = Vec::new();
    let mut fixations: Vec<Fixation> = Vec::new();
    let mut labels = RelevanceLabels::new();
    let mut truth = GroundTruth::default();
    let mut planted = Vec::new();
    let mut block_start = 0.0;

    for qi in 0..cfg.query_count {
        let qid = QueryId(format!("q{:04}", qi + 1));
        let t_q = q(block_start + WINDOW_LEAD_S + 0.5);
        let object = OBJECTS[p.rng.random_range(0..OBJECTS.len())];
        let target = (q(p.rng.random_range(0.2..0.8)), q(p.rng.random_range(0.2..0.8)));

        let n_words = p.rng.random_range(cfg.words_per_query.0..=cfg.words_per_query.1);
        let mut texts: Vec<&str> = (0..n_words)
            .map(|_| {
                if p.rng.random_bool(cfg.pronoun_rate) {
                    PRONOUNS[p.rng.random_range(0..PRONOUNS.len())]
                } else {
                    FILLERS[p.rng.random_range(0..FILLERS.len())]
                }
            })
            .collect();
        if !texts.iter().any(|w| lexicon.is_pronoun(w)) {
            *texts.last_mut().expect("at least one word") = object;
        }
        let mut words = Vec::with_capacity(n_words);
        let mut t = t_q;
        for (index, text) in texts.iter().enumerate() {
            let d = q(p.rng.random_range(WORD_MIN_S..=WORD_MAX_S));
            words.push(TimedWord {
                text: text.to_string(),
                t_start: t,
                t_end: t + d,
                index,
                is_pronoun: lexicon.is_pronoun(text),
            });
            t = q(t + d + WORD_GAP_S);
        }
        let t_end = words.last().expect("non-empty").t_end;

        let mut plants = Vec::new();
        let offset = p.startup();
        let s_start = t_q - offset;
        let s_end = s_start + p.duration(cfg.relevant_duration_mean);
        plants.push(Plant { t_start: s_start, t_end: s_end, relevant: true, x: target.0, y: target.1 });

        // fillers share the stretch between window start and startup onset
        let n_fill = (0..MAX_FILLERS).filter(|_| p.rng.random_bool(cfg.wander_rate)).count();
        let lo = t_q - WINDOW_LEAD_S;
        let span = s_start - EDGE_S - lo;
        if n_fill > 0 && span > 0.0 {
            let slot = span / n_fill as f64;
            for i in 0..n_fill {
                let room = q(slot - 2.0 * EDGE_S);
                if room <= 0.0 {
                    break;
                }
                let d = p.duration(cfg.irrelevant_duration_mean).min(room);
                let start = q(lo + i as f64 * slot + EDGE_S + p.rng.random_range(0.0..=1.0) * (room - d));
                let (x, y) = p.point();
                plants.push(Plant { t_start: start, t_end: start + d, relevant: false, x, y });
            }
        }

        let mut word_plants: Vec<Vec<usize>> = vec![Vec::new(); words.len()];
        for (j, w) in words.iter().enumerate() {
            if s_end >= w.t_start {
                // startup fixation still running when the word begins
                word_plants[j].push(0);
                continue;
            }
            let relevant = w.is_pronoun && p.rng.random_bool(cfg.pronoun_cooccurrence_rate);
            if !relevant && !p.rng.random_bool(cfg.wander_rate) {
                continue;
            }
            let room = w.t_end - w.t_start - 2.0 * EDGE_S;
            let mean = if relevant { cfg.relevant_duration_mean } else { cfg.irrelevant_duration_mean };
            let d = p.duration(mean).min(room);
            let start = q(w.t_start + EDGE_S + (room - d) / 2.0);
            let (x, y) = if relevant { target } else { p.point() };
            word_plants[j].push(plants.len());
            plants.push(Plant { t_start: start, t_end: start + d, relevant, x, y });
        }

        let mut order: Vec<usize> = (0..plants.len()).collect();
        order.sort_by(|&a, &b| plants[a].t_start.total_cmp(&plants[b].t_start));
        let base = fixations.len();
        let mut id_of = vec![String::new(); plants.len()];
        for (rank, &i) in order.iter().enumerate() {
            let id = format!("f{:05}", base + rank);
            id_of[i] = id.clone();
            let pl = &plants[i];
            fixations.push(Fixation {
                id: FixationId(id.clone()),
                t_start: pl.t_start,
                t_end: pl.t_end,
                x: pl.x,
                y: pl.y,
            });
            labels.insert(qid.clone(), FixationId(id), pl.relevant);
        }

        let longest = |want: bool| {
            order
                .iter()
                .filter(|&&i| plants[i].relevant == want)
                .max_by(|&&a, &&b| {
                    let (da, db) = (plants[a].t_end - plants[a].t_start, plants[b].t_end - plants[b].t_start);
                    da.total_cmp(&db).then(plants[b].t_start.total_cmp(&plants[a].t_start))
                })
                .map(|&i| id_of[i].clone())
        };
        planted.push(PlantedQuery {
            query_id: qid.to_string(),
            startup_offset: offset,
            startup_fixation: id_of[0].clone(),
            longest_relevant: longest(true).expect("startup fixation is relevant"),
            longest_irrelevant: longest(false),
            word_fixations: word_plants
                .iter()
                .map(|ps| ps.iter().map(|&i| (id_of[i].clone(), plants[i].relevant)).collect())
                .collect(),
            pronoun_words: words.iter().filter(|w| w.is_pronoun).map(|w| w.index).collect(),
        });
        truth.entries.insert(qid.clone(), BTreeSet::from([object.to_string()]));
        queries.push(QuerySpan { id: qid, t_start: t_q, t_end, words, audio_ref: None });
        let last = plants.iter().map(|pl| pl.t_end).fold(t_end, f64::max);
        block_start = q(last + 1.0);
    }

    let gaze = fixations
        .iter()
        .flat_map(|f| [f.t_start, f.t_end].map(|t| GazeSample { t, x: f.x, y: f.y, confidence: Some(1.0) }))
        .collect();
    let frames = (0..=(block_start / FRAME_INTERVAL_S) as usize)
        .map(|i| FrameRef {
            t: i as f64 * FRAME_INTERVAL_S,
            uri: format!("frames/{i:05}.png"),
            width: 640,
            height: 480,
            sharpness: Some(q(p.rng.random_range(10.0..500.0))),
        })
        .collect();
    let session = Session {
        id: cfg.session_id(),
        root: PathBuf::from("."),
        gaze,
        fixations,
        queries,
        frames,
        labels: Some(labels),
        truth: Some(truth),
    };
    Ok((session, SynthOracle { queries: planted }))
}

/// Labeled session and its ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<(Session, GroundTruth), SynthError> {
    let (session, _) = generate_with_oracle(cfg)?;
    let truth = session.truth.clone().unwrap_or_default();
    Ok((session, truth))
}

/// Oracle for a session produced by [`generate`] from `cfg`.
pub fn plant_oracle(cfg: &SynthConfig, session: &Session) -> Result<SynthOracle, SynthError> {
    let (regen, oracle) = generate_with_oracle(cfg)?;
    let same = regen.id == session.id
        && regen.fixations == session.fixations
        && regen.queries.len() == session.queries.len()
        && regen
            .queries
            .iter()
            .zip(&session.queries)
            .all(|(a, b)| a.id == b.id && a.t_start == b.t_start && a.t_end == b.t_end);
    if same {
        Ok(oracle)
    } else {
        Err(SynthError::SeedMismatch)
    }
}

/// Generate and write a session directory; returns the manifest path.
pub fn write_synth(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf, SynthError> {
    let (session, _) = generate(cfg)?;
    Ok(write_session(&session, dir)?)
}

#[cfg(test)]
mod tests;
