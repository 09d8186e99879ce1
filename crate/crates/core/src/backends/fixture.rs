use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{Backend, BackendError, Request, Role};

/// Answers requests from `<dir>/<role>/<request-hash>.json`.
///
/// A fixture file is either `{"request": <key>, "response": <value>}` or the
/// bare response value.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    dir: PathBuf,
}

impl FixtureBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(dir: &Path, role: Role, hash: &str) -> PathBuf {
        dir.join(role.as_str()).join(format!("{hash}.json"))
    }

    /// Store `response` as the canned answer to `request`.
    pub fn write(dir: &Path, role: Role, key: &Value, hash: &str, response: &Value) -> Result<PathBuf, BackendError> {
        let path = Self::path_for(dir, role, hash);
        let io = |source| BackendError::Io { path: path.clone(), source };
        std::fs::create_dir_all(path.parent().expect("role directory")).map_err(io)?;
        let mut text = serde_json::to_string_pretty(&json!({"request": key, "response": response}))
            .expect("json values serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(io)?;
        Ok(path)
    }
}

impl Backend for FixtureBackend {
    fn call(&self, request: &Request) -> Result<Value, BackendError> {
        let hash = request.hash();
        let path = Self::path_for(&self.dir, request.role, &hash);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::FixtureMiss { role: request.role, hash })
            }
            Err(source) => return Err(BackendError::Io { path, source }),
        };
        let v: Value = serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse {
            role: request.role,
            detail: format!("{}: {e}", path.display()),
        })?;
        match v {
            Value::Object(mut m) if m.contains_key("request") && m.contains_key("response") => {
                Ok(m.remove("response").expect("checked"))
            }
            other => Ok(other),
        }
    }
}
