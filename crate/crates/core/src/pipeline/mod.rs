//! One query, end to end: pick frames, look at them, describe them, ask the
//! responder, parse its answer.
//!
//! The six variants differ only in how frames are chosen (gaze-driven or
//! random-sharp) and where on each frame the object candidates come from
//! (gaze region, whole-frame detection, frame centre, external provider).

mod prompt;
mod response;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::WINDOW_LEAD_S;
use crate::backends::{AudioInput, BackendError, Backends, FrameInput, Role};
use crate::canon::{canonical_json, sha256_hex};
use crate::localization::{
    self as loc, GazePointSource, InterestCandidate, KeyFrameSelection, LocalizationError, RegionCandidate,
    SharpnessSource,
};
use crate::session::{QueryId, QuerySpan, Session};

pub use prompt::{build_prompt, InputType, PromptBundle, PromptTemplate, TemplateError, DEFAULT_TEMPLATE};
pub use response::{extract_json_object, parse_response, AssistantResponse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "VOILA-G")]
    VoilaG,
    #[serde(rename = "VOILA-S")]
    VoilaS,
    #[serde(rename = "VOILA-T")]
    VoilaT,
    #[serde(rename = "VOILA")]
    Voila,
    #[serde(rename = "VOILA-center")]
    VoilaCenter,
    #[serde(rename = "VOILA-ext")]
    VoilaExt,
}

impl Variant {
    /// Report column order.
    pub const ALL: [Variant; 6] =
        [Variant::VoilaG, Variant::VoilaS, Variant::VoilaT, Variant::Voila, Variant::VoilaCenter, Variant::VoilaExt];

    pub fn name(self) -> &'static str {
        match self {
            Variant::VoilaG => "VOILA-G",
            Variant::VoilaS => "VOILA-S",
            Variant::VoilaT => "VOILA-T",
            Variant::Voila => "VOILA",
            Variant::VoilaCenter => "VOILA-center",
            Variant::VoilaExt => "VOILA-ext",
        }
    }

    pub fn stages(self) -> (Temporal, Spatial) {
        match self {
            Variant::VoilaG => (Temporal::GazeDriven, Spatial::GazeRegion),
            Variant::VoilaT => (Temporal::GazeDriven, Spatial::GlobalDetection),
            Variant::VoilaS => (Temporal::RandomSharp, Spatial::GazeRegion),
            Variant::Voila => (Temporal::RandomSharp, Spatial::GlobalDetection),
            Variant::VoilaCenter => (Temporal::RandomSharp, Spatial::CenterPoint),
            Variant::VoilaExt => (Temporal::RandomSharp, Spatial::ExternalPoint),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Temporal {
    GazeDriven,
    RandomSharp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spatial {
    GazeRegion,
    GlobalDetection,
    CenterPoint,
    ExternalPoint,
}

impl Spatial {
    fn point_source(self, external_uri: &str) -> Option<GazePointSource> {
        match self {
            Spatial::GazeRegion => Some(GazePointSource::SENSOR),
            Spatial::CenterPoint => Some(GazePointSource::FRAME_CENTER),
            Spatial::ExternalPoint => Some(GazePointSource::external(external_uri)),
            Spatial::GlobalDetection => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub name: Variant,
    pub temporal: Temporal,
    pub spatial: Spatial,
    pub seed: u64,
    pub k: usize,
    pub tau_s: f64,
    pub window_lead_s: f64,
    pub score_threshold: f64,
    pub top_n: usize,
    /// Names the gaze provider in traces for the external-point variant.
    pub external_uri: String,
}

impl VariantConfig {
    pub fn new(name: Variant, seed: u64) -> Self {
        let (temporal, spatial) = name.stages();
        Self {
            name,
            temporal,
            spatial,
            seed,
            k: loc::KEY_FRAME_COUNT,
            tau_s: loc::DEFAULT_TAU_S,
            window_lead_s: WINDOW_LEAD_S,
            score_threshold: loc::DEFAULT_SCORE_THRESHOLD,
            top_n: loc::DEFAULT_TOP_N,
            external_uri: "gaze_provider".into(),
        }
    }

    pub fn uses_gaze(&self) -> bool {
        self.temporal == Temporal::GazeDriven || self.spatial == Spatial::GazeRegion
    }

    /// Roles that must be configured before a run starts. OCR is optional
    /// and the transcriber is only needed for queries without words.
    pub fn required_roles(&self) -> Vec<Role> {
        let mut roles = self.localization_roles();
        roles.push(Role::Responder);
        roles.sort();
        roles
    }

    /// Roles needed to localize without generating a response.
    pub fn localization_roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Captioner, Role::Detector];
        if self.spatial != Spatial::GlobalDetection {
            roles.push(Role::Segmenter);
        }
        if self.spatial == Spatial::ExternalPoint {
            roles.push(Role::GazeProvider);
        }
        roles.sort();
        roles
    }
}

/// Seed for the random-frame draw, shared by every variant on the same
/// (session, query, run seed) so their frames match.
pub fn derive_seed(session_id: &str, query_id: &str, seed: u64) -> u64 {
    let digest = Sha256::digest(format!("{session_id}|{query_id}|{seed}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Precondition,
    Transcribe,
    Temporal,
    Spatial,
    Caption,
    Prompt,
    Respond,
    Parse,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("{variant} needs gaze data but the session has no fixations")]
    MissingGaze { variant: Variant },
    #[error("{variant} needs a {role} backend")]
    MissingBackend { variant: Variant, role: Role },
    #[error("query `{0}` has neither transcript words nor audio")]
    EmptyQuery(String),
    #[error("{stage} stage: {source}")]
    Localization {
        stage: Stage,
        #[source]
        source: LocalizationError,
    },
    #[error("{stage} stage: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("cannot parse response: {0}")]
    Parse(#[from] ParseError),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::UnknownQuery(_)
            | PipelineError::MissingGaze { .. }
            | PipelineError::MissingBackend { .. }
            | PipelineError::EmptyQuery(_) => Stage::Precondition,
            PipelineError::Localization { stage, .. } | PipelineError::Backend { stage, .. } => *stage,
            PipelineError::Template(_) => Stage::Prompt,
            PipelineError::Parse(_) => Stage::Parse,
        }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::UnknownQuery(_) => "UnknownQuery",
            PipelineError::MissingGaze { .. } => "MissingGaze",
            PipelineError::MissingBackend { .. } => "NotConfigured",
            PipelineError::EmptyQuery(_) => "EmptyQuery",
            PipelineError::Localization { source, .. } => match source {
                LocalizationError::NoFrames => "NoFrames",
                LocalizationError::Decode { .. } => "DecodeError",
                LocalizationError::MissingFixation => "MissingFixation",
                LocalizationError::PointOutOfRange(..) => "PointOutOfRange",
                LocalizationError::EmptyDetection => "EmptyDetection",
                LocalizationError::Provider(_) => "ProviderError",
                LocalizationError::Backend(b) => backend_kind(b),
            },
            PipelineError::Backend { source, .. } => backend_kind(source),
            PipelineError::Template(_) => "TemplateError",
            PipelineError::Parse(ParseError::NoJson) => "ParseError",
            PipelineError::Parse(ParseError::MissingField(_)) => "MissingField",
            PipelineError::Parse(ParseError::InvalidField(_)) => "InvalidField",
        }
    }

    pub fn role(&self) -> Option<Role> {
        match self {
            PipelineError::MissingBackend { role, .. } => Some(*role),
            PipelineError::Backend { source, .. } => source.role(),
            PipelineError::Localization {
                source: LocalizationError::Backend(b) | LocalizationError::Provider(b),
                ..
            } => b.role(),
            _ => None,
        }
    }
}

fn backend_kind(e: &BackendError) -> &'static str {
    match e {
        BackendError::BackendUnavailable { .. } => "BackendUnavailable",
        BackendError::FixtureMiss { .. } => "FixtureMiss",
        BackendError::MalformedResponse { .. } => "MalformedResponse",
        BackendError::NotConfigured(_) => "NotConfigured",
        BackendError::Config(_) => "ConfigError",
        BackendError::Io { .. } => "IoError",
    }
}

/// What happened on one selected frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub uri: String,
    pub t: f64,
    pub score: f64,
    pub source_fixation: Option<String>,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_point: Option<(f64, f64)>,
    pub regions: Vec<RegionCandidate>,
    pub interests: Vec<InterestCandidate>,
}

/// Everything a run decided, enough to rebuild its prompt. Wall-clock
/// timings live in [`Timings`] so traces stay comparable across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub variant: Variant,
    pub session: String,
    pub query_id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_seed: Option<u64>,
    pub query_text: String,
    pub transcribed: bool,
    pub frames: Vec<FrameTrace>,
    pub notes: Vec<String>,
    pub bundle: PromptBundle,
    pub prompt_hash: String,
    pub raw_response: String,
}

impl RunTrace {
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("trace serializes");
        sha256_hex(canonical_json(&v).as_bytes())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages_ms: BTreeMap<String, f64>,
}

impl Timings {
    fn add(&mut self, stage: Stage, since: Instant) {
        *self.stages_ms.entry(stage.to_string()).or_default() += since.elapsed().as_secs_f64() * 1e3;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRun {
    pub response: AssistantResponse,
    pub prompt: String,
    pub trace: RunTrace,
    pub timings: Timings,
}

/// Options shared by every query of a run.
pub struct RunContext<'a> {
    pub backends: &'a Backends,
    pub sharpness: &'a dyn SharpnessSource,
    pub template: &'a PromptTemplate,
}

fn dedup_in_order<T: PartialEq>(items: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

pub fn check_preconditions(session: &Session, cfg: &VariantConfig, backends: &Backends) -> Result<(), PipelineError> {
    check_roles(session, cfg, backends, &cfg.required_roles())
}

fn check_roles(
    session: &Session,
    cfg: &VariantConfig,
    backends: &Backends,
    roles: &[Role],
) -> Result<(), PipelineError> {
    if let Some(role) = roles.iter().copied().find(|r| !backends.has(*r)) {
        return Err(PipelineError::MissingBackend { variant: cfg.name, role });
    }
    if cfg.uses_gaze() && session.fixations.is_empty() {
        return Err(PipelineError::MissingGaze { variant: cfg.name });
    }
    Ok(())
}

/// Output of the temporal and spatial stages for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Localized {
    pub query_text: String,
    pub transcribed: bool,
    pub frame_seed: Option<u64>,
    pub frames: Vec<FrameTrace>,
    pub notes: Vec<String>,
    pub timings: Timings,
}

/// Transcription, frame selection, captioning and object localization.
pub fn localize_query(
    session: &Session,
    query_id: &QueryId,
    cfg: &VariantConfig,
    ctx: &RunContext<'_>,
) -> Result<Localized, PipelineError> {
    let query = session.query(query_id).ok_or_else(|| PipelineError::UnknownQuery(query_id.to_string()))?;
    check_roles(session, cfg, ctx.backends, &cfg.localization_roles())?;
    localize_checked(session, query, cfg, ctx)
}

fn localize_checked(
    session: &Session,
    query: &QuerySpan,
    cfg: &VariantConfig,
    ctx: &RunContext<'_>,
) -> Result<Localized, PipelineError> {
    let query_id = &query.id;
    let backends = ctx.backends;
    let mut timings = Timings::default();
    let mut notes = Vec::new();

    let started = Instant::now();
    let (query_text, transcribed) = if !query.words.is_empty() {
        (query.text(), false)
    } else if let Some(audio) = &query.audio_ref {
        let be = |source| PipelineError::Backend { stage: Stage::Transcribe, source };
        let input = AudioInput::load(audio, &session.resolve(audio)).map_err(be)?;
        let t = backends.transcribe(&input).map_err(be)?;
        let text = t.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        if text.trim().is_empty() {
            return Err(PipelineError::EmptyQuery(query_id.to_string()));
        }
        (text, true)
    } else {
        return Err(PipelineError::EmptyQuery(query_id.to_string()));
    };
    timings.add(Stage::Transcribe, started);

    let started = Instant::now();
    let loc_err = |stage| move |source| PipelineError::Localization { stage, source };
    let (selection, frame_seed): (KeyFrameSelection, Option<u64>) = match cfg.temporal {
        Temporal::GazeDriven => (
            loc::select_key_frames(
                query,
                &session.fixations,
                &session.frames,
                cfg.k,
                cfg.tau_s,
                cfg.window_lead_s,
                ctx.sharpness,
            )
            .map_err(loc_err(Stage::Temporal))?,
            None,
        ),
        Temporal::RandomSharp => {
            let seed = derive_seed(&session.id, query_id.as_str(), cfg.seed);
            let sel =
                loc::select_random_sharp_frames(query, &session.frames, cfg.k, seed, cfg.window_lead_s, ctx.sharpness)
                    .map_err(loc_err(Stage::Temporal))?;
            (sel, Some(seed))
        }
    };
    if selection.is_empty() {
        notes.push("no candidate fixations in the query window; prompt carries the query alone".into());
    }
    timings.add(Stage::Temporal, started);

    let ocr_on = backends.has(Role::Ocr);
    let mut frames = Vec::with_capacity(selection.len());
    for (i, frame) in selection.frames.iter().enumerate() {
        let input = FrameInput::load(&frame.uri, &session.resolve(&frame.uri));

        let started = Instant::now();
        let caption =
            backends.caption(&input).map_err(|source| PipelineError::Backend { stage: Stage::Caption, source })?.text;
        let ocr = if ocr_on {
            match backends.ocr(&input) {
                Ok(t) => Some(t),
                Err(e) => {
                    notes.push(format!("{}: OCR unavailable ({e})", frame.uri));
                    None
                }
            }
        } else {
            None
        };
        timings.add(Stage::Caption, started);

        let started = Instant::now();
        let mut gaze_point = None;
        let mut regions = Vec::new();
        let interests = match cfg.spatial.point_source(&cfg.external_uri) {
            None => loc::global_confident_detection(&input, backends, cfg.top_n).map_err(loc_err(Stage::Spatial))?,
            Some(source) => {
                let fixation = match &selection.source_fixations[i] {
                    Some(id) => session.fixation(id),
                    None => loc::fixation_at(&session.fixations, frame.t),
                };
                let point =
                    loc::resolve_gaze_point(&source, fixation, &input, backends).map_err(loc_err(Stage::Spatial))?;
                gaze_point = Some(point);
                regions = loc::gaze_region_candidates(&input, point, backends).map_err(loc_err(Stage::Spatial))?;
                if regions.is_empty() {
                    notes.push(format!("{}: no region contains the gaze point", frame.uri));
                    Vec::new()
                } else {
                    match loc::detect_interest_objects(&input, &regions, backends, cfg.score_threshold) {
                        Ok(found) => found,
                        Err(LocalizationError::EmptyDetection) => {
                            notes.push(format!("{}: no detection above threshold; caption only", frame.uri));
                            Vec::new()
                        }
                        Err(e) => return Err(loc_err(Stage::Spatial)(e)),
                    }
                }
            }
        };
        timings.add(Stage::Spatial, started);

        frames.push(FrameTrace {
            uri: frame.uri.clone(),
            t: frame.t,
            score: selection.scores[i],
            source_fixation: selection.source_fixations[i].as_ref().map(|f| f.to_string()),
            caption,
            ocr,
            gaze_point,
            regions,
            interests,
        });
    }

    Ok(Localized { query_text, transcribed, frame_seed, frames, notes, timings })
}

pub fn run_query(
    session: &Session,
    query_id: &QueryId,
    cfg: &VariantConfig,
    ctx: &RunContext<'_>,
) -> Result<QueryRun, PipelineError> {
    let query = session.query(query_id).ok_or_else(|| PipelineError::UnknownQuery(query_id.to_string()))?;
    check_preconditions(session, cfg, ctx.backends)?;
    let Localized { query_text, transcribed, frame_seed, frames, notes, mut timings } =
        localize_checked(session, query, cfg, ctx)?;
    let backends = ctx.backends;

    let started = Instant::now();
    let bundle = PromptBundle::new(
        dedup_in_order(frames.iter().map(|f| f.caption.clone())),
        dedup_in_order(
            frames
                .iter()
                .flat_map(|f| &f.interests)
                .filter(|c| !c.labels.is_empty())
                .map(|c| c.labels.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>()),
        ),
        Some(
            dedup_in_order(frames.iter().filter_map(|f| f.ocr.as_deref()).map(str::trim).filter(|t| !t.is_empty()))
                .join("\n"),
        ),
        query_text.clone(),
    );
    let prompt = ctx.template.render(&bundle)?;
    let prompt_hash = sha256_hex(prompt.as_bytes());
    timings.add(Stage::Prompt, started);

    let started = Instant::now();
    let raw = backends.generate(&prompt).map_err(|source| PipelineError::Backend { stage: Stage::Respond, source })?;
    timings.add(Stage::Respond, started);
    let response = parse_response(&raw)?;

    let trace = RunTrace {
        variant: cfg.name,
        session: session.id.clone(),
        query_id: query_id.to_string(),
        seed: cfg.seed,
        frame_seed,
        query_text,
        transcribed,
        frames,
        notes,
        bundle,
        prompt_hash,
        raw_response: raw,
    };
    Ok(QueryRun { response, prompt, trace, timings })
}

#[cfg(test)]
mod tests;
