//! Structured-object extraction from model text.
//!
//! Models wrap JSON in prose and code fences; this extractor finds the first
//! balanced object, parses it, and checks the declared shape.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Required keys for one structured response. Keys are dot-paths into the
/// object (`"score_decisions.stick_with_previous_score"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeDescriptor {
    pub name: String,
    pub required: Vec<String>,
}

impl ShapeDescriptor {
    pub fn new(name: &str, required: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            required: required.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn check(&self, value: &Value) -> Result<(), ExtractError> {
        for path in &self.required {
            let mut cursor = value;
            for segment in path.split('.') {
                match cursor.get(segment) {
                    Some(next) => cursor = next,
                    None => {
                        return Err(ExtractError::MissingKey {
                            shape: self.name.clone(),
                            key: path.clone(),
                        })
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExtractError {
    #[error("no parseable structured object in response")]
    NoStructuredObject { raw: String },
    #[error("structured object is invalid JSON: {message}")]
    InvalidJson { raw: String, message: String },
    #[error("shape '{shape}' missing required key '{key}'")]
    MissingKey { shape: String, key: String },
}

impl ExtractError {
    /// The offending raw text, for repair prompts and diagnostics.
    pub fn raw_text(&self) -> Option<&str> {
        match self {
            ExtractError::NoStructuredObject { raw } | ExtractError::InvalidJson { raw, .. } => {
                Some(raw)
            }
            ExtractError::MissingKey { .. } => None,
        }
    }
}

/// Locates the first well-formed JSON object in `text`, validates it against
/// `shape`, and returns it.
pub fn extract_structured(text: &str, shape: &ShapeDescriptor) -> Result<Value, ExtractError> {
    let stripped = strip_code_fences(text.trim());

    // Direct parse first; cheapest and covers clean responses.
    if let Ok(value @ Value::Object(_)) = serde_json::from_str::<Value>(stripped) {
        shape.check(&value)?;
        return Ok(value);
    }

    let candidate = first_balanced_object(stripped)
        .or_else(|| first_balanced_object(text))
        .ok_or_else(|| ExtractError::NoStructuredObject {
            raw: text.to_string(),
        })?;
    let value: Value = serde_json::from_str(&candidate).map_err(|e| ExtractError::InvalidJson {
        raw: text.to_string(),
        message: e.to_string(),
    })?;
    shape.check(&value)?;
    Ok(value)
}

fn strip_code_fences(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix("```json").unwrap_or(s);
    let s = s.strip_prefix("```").unwrap_or(s);
    let s = s.strip_suffix("```").unwrap_or(s);
    s.trim()
}

/// Scans for the first `{...}` block with balanced braces, honoring string
/// literals and escapes.
fn first_balanced_object(s: &str) -> Option<String> {
    let mut depth = 0usize;
    let mut start = None;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    return Some(s[start.expect("set with depth")..=i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}
