use std::fmt;

use gazequery::backends::BackendError;
use gazequery::evaluation::EvalError;
use gazequery::pipeline::PipelineError;
use gazequery::session::SessionError;
use gazequery::synth::SynthError;
use serde::Serialize;

/// Machine-readable failure, printed as one JSON line on stderr.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub stage: String,
    pub kind: String,
    pub message: String,
    pub role: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: CliError,
}

impl CliError {
    pub fn new(stage: &str, kind: &str, message: impl Into<String>) -> Self {
        Self { stage: stage.into(), kind: kind.into(), message: message.into(), role: None }
    }

    /// Structured form of any error reaching the top level.
    pub fn report(e: &anyhow::Error, subcommand: &str) -> ErrorReport {
        let error = e
            .downcast_ref::<CliError>()
            .cloned()
            .or_else(|| e.downcast_ref::<PipelineError>().map(CliError::from))
            .or_else(|| e.downcast_ref::<SessionError>().map(CliError::from))
            .or_else(|| e.downcast_ref::<BackendError>().map(|b| CliError::backend("backends", b)))
            .or_else(|| e.downcast_ref::<SynthError>().map(CliError::from))
            .or_else(|| e.downcast_ref::<EvalError>().map(CliError::from))
            .unwrap_or_else(|| CliError::new(subcommand, "Error", format!("{e:#}")));
        ErrorReport { error }
    }

    pub fn backend(stage: &str, e: &BackendError) -> Self {
        let kind = match e {
            BackendError::BackendUnavailable { .. } => "BackendUnavailable",
            BackendError::FixtureMiss { .. } => "FixtureMiss",
            BackendError::MalformedResponse { .. } => "MalformedResponse",
            BackendError::NotConfigured(_) => "NotConfigured",
            BackendError::Config(_) => "ConfigError",
            BackendError::Io { .. } => "IoError",
        };
        Self { role: e.role().map(|r| r.to_string()), ..Self::new(stage, kind, e.to_string()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.kind, self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<&PipelineError> for CliError {
    fn from(e: &PipelineError) -> Self {
        Self { role: e.role().map(|r| r.to_string()), ..Self::new(&e.stage().to_string(), e.kind(), e.to_string()) }
    }
}

impl From<&SessionError> for CliError {
    fn from(e: &SessionError) -> Self {
        let kind = match e {
            SessionError::MissingFile(_) => "MissingFile",
            SessionError::Schema { .. } => "SchemaError",
            SessionError::Ordering { .. } => "OrderingError",
            SessionError::DanglingReference(_) => "DanglingReference",
            SessionError::Io { .. } => "IoError",
        };
        Self::new("load", kind, e.to_string())
    }
}

impl From<&SynthError> for CliError {
    fn from(e: &SynthError) -> Self {
        match e {
            SynthError::Session(s) => s.into(),
            SynthError::Config(_) => Self::new("synth", "ConfigError", e.to_string()),
            SynthError::SeedMismatch => Self::new("synth", "SeedMismatch", e.to_string()),
        }
    }
}

impl From<&EvalError> for CliError {
    fn from(e: &EvalError) -> Self {
        let kind = match e {
            EvalError::EmptyTruth => "EmptyTruth",
            EvalError::Read { .. } => "ReadError",
        };
        Self::new("eval", kind, e.to_string())
    }
}
