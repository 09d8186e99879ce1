//! `backends.toml`: one table per role.
//!
//! ```toml
//! [captioner]
//! kind = "fixture"
//! fixture_dir = "fixtures"          # relative to this file
//!
//! [responder]
//! kind = "remote"
//! endpoint = "https://llm.example/v1/chat/completions"
//! timeout_s = 60
//! [responder.parameters]
//! model = "gpt-4-0613"
//! presence_penalty = 0.6
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Backend, BackendError, Backends, FixtureBackend, RemoteBackend, Role};

/// Environment variable holding the bearer token sent to remote backends.
pub const TOKEN_ENV: &str = "GAZEQUERY_BACKEND_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    #[serde(skip)]
    pub role: Option<Role>,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(default)]
    pub parameters: Map<String, Value>,
}

/// Sampling parameters sent with every generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponderParams {
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for ResponderParams {
    fn default() -> Self {
        Self {
            model: "gpt-4-0613".into(),
            max_tokens: 1500,
            temperature: 0.0,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.6,
        }
    }
}

impl ResponderParams {
    /// Chat-completions style body with one user message.
    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackendConfig {
    pub descriptors: BTreeMap<Role, BackendDescriptor>,
}

impl BackendConfig {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| BackendError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse TOML text; relative fixture directories resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, BackendError> {
        let raw: BTreeMap<String, BackendDescriptor> =
            toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        let mut descriptors = BTreeMap::new();
        for (name, mut d) in raw {
            let role = Role::parse(&name).ok_or_else(|| BackendError::Config(format!("unknown role `{name}`")))?;
            d.role = Some(role);
            if let Some(dir) = &d.fixture_dir {
                if dir.is_relative() {
                    d.fixture_dir = Some(base.join(dir));
                }
            }
            d.validate(role)?;
            descriptors.insert(role, d);
        }
        Ok(Self { descriptors })
    }

    /// Every role answered from `dir/<role>/<hash>.json`.
    pub fn all_fixtures(dir: &Path) -> Self {
        let descriptors = Role::ALL
            .into_iter()
            .map(|role| {
                (
                    role,
                    BackendDescriptor {
                        role: Some(role),
                        kind: BackendKind::Fixture,
                        endpoint: None,
                        fixture_dir: Some(dir.to_path_buf()),
                        timeout_s: None,
                        parameters: Map::new(),
                    },
                )
            })
            .collect();
        Self { descriptors }
    }

    /// Same roles and parameters, every one answered from `dir`.
    pub fn replayed_from(&self, dir: &Path) -> Self {
        let mut out = self.clone();
        for d in out.descriptors.values_mut() {
            d.kind = BackendKind::Fixture;
            d.endpoint = None;
            d.fixture_dir = Some(dir.to_path_buf());
        }
        out
    }

    pub fn has(&self, role: Role) -> bool {
        self.descriptors.contains_key(&role)
    }

    pub fn build(&self) -> Result<Backends, BackendError> {
        let mut backends = Backends::new();
        for (role, d) in &self.descriptors {
            let backend: Arc<dyn Backend> = match d.kind {
                BackendKind::Fixture => Arc::new(FixtureBackend::new(d.fixture_dir.clone().expect("validated"))),
                BackendKind::Remote => {
                    let timeout = Duration::from_secs_f64(d.timeout_s.unwrap_or(60.0));
                    let token = std::env::var(TOKEN_ENV).ok();
                    Arc::new(RemoteBackend::new(d.endpoint.clone().expect("validated"), timeout, token))
                }
            };
            if *role == Role::Responder {
                let params: ResponderParams = serde_json::from_value(Value::Object(d.parameters.clone()))
                    .map_err(|e| BackendError::Config(format!("responder parameters: {e}")))?;
                backends.set_responder_params(params);
                backends.set(*role, backend, Map::new());
            } else {
                backends.set(*role, backend, role_parameters(*role, &d.parameters));
            }
        }
        Ok(backends)
    }
}

/// Configured parameters over the per-role defaults.
pub(super) fn role_parameters(role: Role, given: &Map<String, Value>) -> Map<String, Value> {
    let mut params = Map::new();
    if role == Role::Captioner {
        params.insert("description_type".into(), json!("Detail"));
    }
    for (k, v) in given {
        params.insert(k.clone(), v.clone());
    }
    params
}

impl BackendDescriptor {
    fn validate(&self, role: Role) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                Err(BackendError::Config(format!("{role}: remote backend requires `endpoint`")))
            }
            BackendKind::Fixture if self.fixture_dir.is_none() => {
                Err(BackendError::Config(format!("{role}: fixture backend requires `fixture_dir`")))
            }
            _ => {
                if self.timeout_s.is_some_and(|t| !(t > 0.0)) {
                    return Err(BackendError::Config(format!("{role}: timeout_s must be positive")));
                }
                Ok(())
            }
        }
    }
}
