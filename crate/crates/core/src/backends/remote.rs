use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, Request, Role};

/// JSON-over-HTTP client: POSTs the request body to `endpoint` and expects
/// the role's response schema back. Generation endpoints may instead answer
/// in chat-completions shape (`choices[0].message.content`).
///
/// A timed-out or dropped request is retried once before giving up.
pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl RemoteBackend {
    pub fn new(endpoint: String, timeout: Duration, token: Option<String>) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().new_agent();
        Self { endpoint, agent, token }
    }

    fn post(&self, body: &Value) -> Result<(u16, String), ureq::Error> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string()?;
        Ok((status, text))
    }
}

fn transient(e: &ureq::Error) -> bool {
    matches!(e, ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed)
}

/// Reduce a chat-completions reply to `{"text": ...}`.
fn normalize(role: Role, v: Value) -> Result<Value, BackendError> {
    if role != Role::Responder || v.get("text").is_some() {
        return Ok(v);
    }
    match v.pointer("/choices/0/message/content").and_then(Value::as_str) {
        Some(content) => Ok(json!({"text": content})),
        None => Err(BackendError::MalformedResponse {
            role,
            detail: "neither `text` nor `choices[0].message.content` present".into(),
        }),
    }
}

impl Backend for RemoteBackend {
    fn call(&self, request: &Request) -> Result<Value, BackendError> {
        let role = request.role;
        let unavailable = |detail: String| BackendError::BackendUnavailable { role, detail };
        let (status, text) = match self.post(&request.body) {
            Err(e) if transient(&e) => {
                tracing::warn!(%role, error = %e, "retrying remote backend once");
                self.post(&request.body).map_err(|e| unavailable(e.to_string()))?
            }
            other => other.map_err(|e| unavailable(e.to_string()))?,
        };
        if !(200..300).contains(&status) {
            return Err(unavailable(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse { role, detail: e.to_string() })?;
        normalize(role, v)
    }
}
