//! Chat-completion provider interface and the deterministic scripted backend.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CompletionRequest, RoleTag};

/// Transport-level failure. Transient errors are retried by the gateway;
/// permanent ones are not.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("permanent provider failure: {0}")]
    Permanent(String),
}

/// Raw provider output before gateway accounting.
#[derive(Debug, Clone)]
pub struct ProviderResponse {
    pub text: String,
    /// Provider-reported usage; `None` falls back to the character/4 proxy.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// One backend capable of serving completions.
///
/// Implementations must be safe for concurrent callers.
pub trait Provider: Send + Sync {
    fn id(&self) -> String;
    fn complete(
        &self,
        request: &CompletionRequest,
        turn_index: u64,
    ) -> Result<ProviderResponse, ProviderError>;
}

/// One canned response in a fixture set.
///
/// Lookup keys are routing metadata, not prompt hashes, so prompt-template
/// edits never invalidate fixtures. `case_id = "*"` matches any case; a
/// `null` agent or turn matches any value of that field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub case_id: String,
    pub role: RoleTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u64>,
    pub text: String,
}

/// Versioned fixture file: maps (case, role, agent, turn) keys to response
/// text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureSet {
    pub version: u32,
    pub fixtures: Vec<Fixture>,
}

impl FixtureSet {
    pub const CURRENT_VERSION: u32 = 1;

    pub fn new(fixtures: Vec<Fixture>) -> Self {
        Self {
            version: Self::CURRENT_VERSION,
            fixtures,
        }
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Permanent(format!("cannot read fixture file: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| ProviderError::Permanent(format!("cannot parse fixture file: {e}")))
    }
}

/// Deterministic provider backed by a fixture set: a pure function of
/// (fixture set, request key).
pub struct ScriptedProvider {
    set: FixtureSet,
}

impl ScriptedProvider {
    pub fn new(set: FixtureSet) -> Self {
        Self { set }
    }

    /// Most-specific match wins; ties go to file order.
    fn lookup(&self, case_id: &str, role: RoleTag, agent: &str, turn: u64) -> Option<&Fixture> {
        self.set
            .fixtures
            .iter()
            .filter(|f| {
                f.role == role
                    && (f.case_id == "*" || f.case_id == case_id)
                    && f.agent.as_deref().is_none_or(|a| a == agent)
                    && f.turn.is_none_or(|t| t == turn)
            })
            .max_by_key(|f| {
                let mut specificity = 0u8;
                if f.case_id != "*" {
                    specificity += 4;
                }
                if f.agent.is_some() {
                    specificity += 2;
                }
                if f.turn.is_some() {
                    specificity += 1;
                }
                specificity
            })
    }
}

impl Provider for ScriptedProvider {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        turn_index: u64,
    ) -> Result<ProviderResponse, ProviderError> {
        match self.lookup(
            &request.case_id,
            request.role,
            &request.agent_name,
            turn_index,
        ) {
            Some(fixture) => Ok(ProviderResponse {
                text: fixture.text.clone(),
                prompt_tokens: None,
                completion_tokens: None,
            }),
            None => Err(ProviderError::Permanent(format!(
                "no fixture for ({}, {}, {}, turn {})",
                request.case_id,
                request.role.as_str(),
                request.agent_name,
                turn_index
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ResponseContract;

    fn req(case: &str, role: RoleTag, agent: &str) -> CompletionRequest {
        CompletionRequest {
            role,
            case_id: case.to_string(),
            agent_name: agent.to_string(),
            system_text: "s".into(),
            user_text: "u".into(),
            temperature: 0.0,
            max_output: None,
            response_contract: ResponseContract::FreeText,
        }
    }

    #[test]
    fn most_specific_fixture_wins() {
        let provider = ScriptedProvider::new(FixtureSet::new(vec![
            Fixture {
                case_id: "*".into(),
                role: RoleTag::Planner,
                agent: None,
                turn: None,
                text: "generic".into(),
            },
            Fixture {
                case_id: "case_7".into(),
                role: RoleTag::Planner,
                agent: None,
                turn: None,
                text: "case level".into(),
            },
            Fixture {
                case_id: "case_7".into(),
                role: RoleTag::Planner,
                agent: Some("pa".into()),
                turn: Some(1),
                text: "exact".into(),
            },
        ]));
        let r = req("case_7", RoleTag::Planner, "pa");
        assert_eq!(provider.complete(&r, 0).unwrap().text, "case level");
        assert_eq!(provider.complete(&r, 1).unwrap().text, "exact");
        let other = req("case_9", RoleTag::Planner, "pa");
        assert_eq!(provider.complete(&other, 0).unwrap().text, "generic");
    }

    #[test]
    fn missing_fixture_is_permanent() {
        let provider = ScriptedProvider::new(FixtureSet::new(vec![]));
        let r = req("case_1", RoleTag::Specialist, "sa");
        assert!(matches!(
            provider.complete(&r, 0),
            Err(ProviderError::Permanent(_))
        ));
    }

    #[test]
    fn identical_requests_yield_identical_text() {
        let provider = ScriptedProvider::new(FixtureSet::new(vec![Fixture {
            case_id: "c".into(),
            role: RoleTag::Single,
            agent: None,
            turn: None,
            text: "answer".into(),
        }]));
        let r = req("c", RoleTag::Single, "solo");
        let a = provider.complete(&r, 0).unwrap();
        let b = provider.complete(&r, 0).unwrap();
        assert_eq!(a.text, b.text);
    }
}
