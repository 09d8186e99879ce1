use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistantResponse {
    pub thought: String,
    pub answer: String,
    pub query: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object in response")]
    NoJson,
    #[error("response lacks field `{0}`")]
    MissingField(&'static str),
    #[error("response field `{0}` is not a non-empty string")]
    InvalidField(&'static str),
}

/// Byte offset one past the `}` closing the object opened at `start`, or
/// `None` if it never closes. String literals are skipped.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced `{...}` that parses as a JSON object. Prose and code
/// fences around it are ignored.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        if let Some(end) = balanced_end(text, start) {
            if let Ok(Value::Object(m)) = serde_json::from_str(&text[start..end]) {
                return Some(m);
            }
        }
        from = start + 1;
    }
    None
}

pub fn parse_response(raw: &str) -> Result<AssistantResponse, ParseError> {
    let obj = extract_json_object(raw).ok_or(ParseError::NoJson)?;
    let field = |name: &'static str| -> Result<String, ParseError> {
        match obj.get(name) {
            None => Err(ParseError::MissingField(name)),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            Some(_) => Err(ParseError::InvalidField(name)),
        }
    };
    Ok(AssistantResponse { thought: field("thought")?, answer: field("answer")?, query: field("query")? })
}
