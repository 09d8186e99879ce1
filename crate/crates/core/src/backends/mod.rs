//! Interfaces to the external models the pipeline consults: speech
//! transcription, point-prompted segmentation, captioning, open-vocabulary
//! detection, OCR, text generation and saliency-style gaze providers.
//!
//! Every call is a [`Request`] carrying a canonical `key` (what is hashed for
//! fixtures and record logs) and a wire `body` (what a remote service
//! receives). Responses are plain JSON in the role's schema; [`Backends`]
//! turns them into typed results.

mod config;
mod fixture;
mod record;
mod remote;
pub mod scene;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::canon::{canonical_json, coord, sha256_hex};
use crate::geometry::BBox;

pub use config::{BackendConfig, BackendDescriptor, BackendKind, ResponderParams, TOKEN_ENV};
pub use fixture::FixtureBackend;
pub use record::{materialize_fixtures, read_record_log, RecordEntry, RecordLog, Recorder};
pub use remote::RemoteBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Transcriber,
    Segmenter,
    Captioner,
    Detector,
    Responder,
    Ocr,
    GazeProvider,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Transcriber,
        Role::Segmenter,
        Role::Captioner,
        Role::Detector,
        Role::Responder,
        Role::Ocr,
        Role::GazeProvider,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Transcriber => "transcriber",
            Role::Segmenter => "segmenter",
            Role::Captioner => "captioner",
            Role::Detector => "detector",
            Role::Responder => "responder",
            Role::Ocr => "ocr",
            Role::GazeProvider => "gaze_provider",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("{role} backend unavailable: {detail}")]
    BackendUnavailable { role: Role, detail: String },
    #[error("{role} fixture missing for request {hash}")]
    FixtureMiss { role: Role, hash: String },
    #[error("{role} returned a malformed response: {detail}")]
    MalformedResponse { role: Role, detail: String },
    #[error("no backend configured for role `{0}`")]
    NotConfigured(Role),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BackendError {
    pub fn role(&self) -> Option<Role> {
        match self {
            BackendError::BackendUnavailable { role, .. }
            | BackendError::FixtureMiss { role, .. }
            | BackendError::MalformedResponse { role, .. }
            | BackendError::NotConfigured(role) => Some(*role),
            _ => None,
        }
    }

    fn malformed(role: Role, detail: impl Into<String>) -> Self {
        BackendError::MalformedResponse { role, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub role: Role,
    /// Normalized, content-addressed description of the request.
    pub key: Value,
    /// Full payload for remote services (may embed base64 media).
    pub body: Value,
}

impl Request {
    /// SHA-256 of the canonical `{role, key}` document.
    pub fn hash(&self) -> String {
        request_hash(self.role, &self.key)
    }
}

pub fn request_hash(role: Role, key: &Value) -> String {
    sha256_hex(canonical_json(&json!({"role": role.as_str(), "key": key})).as_bytes())
}

pub trait Backend: Send + Sync {
    fn call(&self, request: &Request) -> Result<Value, BackendError>;
}

/// A frame as presented to backends: its content hash and, when the image is
/// on disk, the encoded bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub uri: String,
    pub digest: String,
    pub bytes: Option<Arc<[u8]>>,
}

impl FrameInput {
    /// Reads the image if present; a missing file yields a URI-keyed input
    /// that only fixture backends can answer.
    pub fn load(uri: &str, path: &Path) -> Self {
        match std::fs::read(path) {
            Ok(bytes) => Self { uri: uri.to_string(), digest: sha256_hex(&bytes), bytes: Some(bytes.into()) },
            Err(_) => Self { uri: uri.to_string(), digest: format!("uri:{uri}"), bytes: None },
        }
    }

    fn key(&self) -> Value {
        json!(self.digest)
    }

    fn body(&self) -> Value {
        let image = self
            .bytes
            .as_ref()
            .map(|b| Value::String(base64::engine::general_purpose::STANDARD.encode(b)))
            .unwrap_or(Value::Null);
        json!({"uri": self.uri, "image_base64": image})
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioInput {
    pub uri: String,
    pub digest: String,
    pub bytes: Arc<[u8]>,
}

impl AudioInput {
    pub fn load(uri: &str, path: &Path) -> Result<Self, BackendError> {
        let bytes = std::fs::read(path).map_err(|source| BackendError::Io { path: path.to_path_buf(), source })?;
        Ok(Self { uri: uri.to_string(), digest: sha256_hex(&bytes), bytes: bytes.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptWord {
    pub text: String,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptResult {
    pub language: String,
    pub words: Vec<TranscriptWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMask {
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DetectionResult {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    pub text: String,
    #[serde(default)]
    pub detail_level: String,
}

fn parse<T: serde::de::DeserializeOwned>(role: Role, v: Value) -> Result<T, BackendError> {
    serde_json::from_value(v).map_err(|e| BackendError::malformed(role, e.to_string()))
}

/// Role-to-backend registry with typed call helpers.
#[derive(Clone, Default)]
pub struct Backends {
    backends: BTreeMap<Role, Arc<dyn Backend>>,
    parameters: BTreeMap<Role, Map<String, Value>>,
    responder: ResponderParams,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends")
            .field("roles", &self.backends.keys().collect::<Vec<_>>())
            .field("responder", &self.responder)
            .finish()
    }
}

impl Backends {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register `backend` with the role's default parameters.
    pub fn with(mut self, role: Role, backend: Arc<dyn Backend>) -> Self {
        self.set(role, backend, config::role_parameters(role, &Map::new()));
        self
    }

    pub fn set(&mut self, role: Role, backend: Arc<dyn Backend>, parameters: Map<String, Value>) {
        self.backends.insert(role, backend);
        self.parameters.insert(role, parameters);
    }

    pub fn set_responder_params(&mut self, params: ResponderParams) {
        self.responder = params;
    }

    pub fn responder_params(&self) -> &ResponderParams {
        &self.responder
    }

    pub fn has(&self, role: Role) -> bool {
        self.backends.contains_key(&role)
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.backends.keys().copied()
    }

    /// Same registry with every backend wrapped by `wrap`.
    pub fn map(&self, wrap: impl Fn(Role, Arc<dyn Backend>) -> Arc<dyn Backend>) -> Self {
        Self {
            backends: self.backends.iter().map(|(r, b)| (*r, wrap(*r, b.clone()))).collect(),
            parameters: self.parameters.clone(),
            responder: self.responder.clone(),
        }
    }

    fn params(&self, role: Role) -> Value {
        Value::Object(self.parameters.get(&role).cloned().unwrap_or_default())
    }

    fn call(&self, role: Role, key: Value, body: Value) -> Result<Value, BackendError> {
        let backend = self.backends.get(&role).ok_or(BackendError::NotConfigured(role))?;
        backend.call(&Request { role, key, body })
    }

    pub fn transcribe(&self, audio: &AudioInput) -> Result<TranscriptResult, BackendError> {
        let role = Role::Transcriber;
        let params = self.params(role);
        let key = json!({"audio": audio.digest, "parameters": params});
        let body = json!({
            "audio_base64": base64::engine::general_purpose::STANDARD.encode(&audio.bytes),
            "uri": audio.uri,
            "parameters": params,
        });
        let t: TranscriptResult = parse(role, self.call(role, key, body)?)?;
        for w in t.words.windows(2) {
            if w[1].t_start < w[0].t_start {
                return Err(BackendError::malformed(role, "words out of time order"));
            }
        }
        if t.words.iter().any(|w| !(w.t_start <= w.t_end)) {
            return Err(BackendError::malformed(role, "word with t_end < t_start"));
        }
        Ok(t)
    }

    pub fn segment(&self, frame: &FrameInput, point: (f64, f64)) -> Result<Vec<SegmentMask>, BackendError> {
        let role = Role::Segmenter;
        let params = self.params(role);
        let pt = json!([coord(point.0), coord(point.1)]);
        let key = json!({"frame": frame.key(), "point": pt, "parameters": params});
        let mut body = frame.body();
        body["point"] = json!([point.0, point.1]);
        body["parameters"] = params;
        #[derive(Deserialize)]
        struct Masks {
            masks: Vec<SegmentMask>,
        }
        let m: Masks = parse(role, self.call(role, key, body)?)?;
        if let Some(bad) = m.masks.iter().find(|m| !m.bbox.is_valid()) {
            return Err(BackendError::malformed(role, format!("invalid bbox {:?}", bad.bbox)));
        }
        Ok(m.masks)
    }

    pub fn caption(&self, frame: &FrameInput) -> Result<CaptionResult, BackendError> {
        let role = Role::Captioner;
        let params = self.params(role);
        let key = json!({"frame": frame.key(), "parameters": params});
        let mut body = frame.body();
        body["parameters"] = params;
        let c: CaptionResult = parse(role, self.call(role, key, body)?)?;
        if c.text.trim().is_empty() {
            return Err(BackendError::malformed(role, "empty caption"));
        }
        Ok(c)
    }

    pub fn detect(&self, frame: &FrameInput) -> Result<DetectionResult, BackendError> {
        let role = Role::Detector;
        let params = self.params(role);
        let key = json!({"frame": frame.key(), "parameters": params});
        let mut body = frame.body();
        body["parameters"] = params;
        let d: DetectionResult = parse(role, self.call(role, key, body)?)?;
        for det in &d.detections {
            if !(0.0..=1.0).contains(&det.score) || !det.bbox.is_valid() {
                return Err(BackendError::malformed(role, format!("invalid detection `{}`", det.label)));
            }
        }
        Ok(d)
    }

    pub fn ocr(&self, frame: &FrameInput) -> Result<String, BackendError> {
        let role = Role::Ocr;
        let params = self.params(role);
        let key = json!({"frame": frame.key(), "parameters": params});
        let mut body = frame.body();
        body["parameters"] = params;
        #[derive(Deserialize)]
        struct Ocr {
            text: String,
        }
        Ok(parse::<Ocr>(role, self.call(role, key, body)?)?.text)
    }

    /// Sends `prompt` as a single user message with the configured sampling
    /// parameters and returns the raw completion text.
    pub fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let role = Role::Responder;
        let body = self.responder.request_body(prompt);
        let key = body.clone();
        #[derive(Deserialize)]
        struct Text {
            text: String,
        }
        Ok(parse::<Text>(role, self.call(role, key, body)?)?.text)
    }

    pub fn gaze_point(&self, frame: &FrameInput) -> Result<(f64, f64), BackendError> {
        let role = Role::GazeProvider;
        let params = self.params(role);
        let key = json!({"frame": frame.key(), "parameters": params});
        let mut body = frame.body();
        body["parameters"] = params;
        #[derive(Deserialize)]
        struct Point {
            x: f64,
            y: f64,
        }
        let p: Point = parse(role, self.call(role, key, body)?)?;
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(BackendError::malformed(role, "non-finite gaze point"));
        }
        Ok((p.x, p.y))
    }
}
