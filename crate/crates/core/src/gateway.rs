//! Uniform chat-completion front: role-based provider bindings, retries with
//! exponential backoff, token accounting, and structured-output extraction
//! with a single repair round.

pub mod embed;
pub mod extract;
pub mod http;
pub mod ledger;
pub mod provider;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use embed::{cosine, Embedder, HashedEmbedder};
pub use extract::{extract_structured, ExtractError, ShapeDescriptor};
pub use ledger::{LedgerEntry, LedgerKey, RoleTotals, TokenLedger};
pub use provider::{
    Fixture, FixtureSet, Provider, ProviderError, ProviderResponse, ScriptedProvider,
};

/// Which seat in the pipeline a request comes from. Provider bindings,
/// fixture keys, and the ledger are all role-scoped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleTag {
    Planner,
    Specialist,
    Supervisor,
    Single,
    DebateAgent,
    DebateSupervisor,
    Embedder,
}

impl RoleTag {
    pub const ALL: [RoleTag; 7] = [
        RoleTag::Planner,
        RoleTag::Specialist,
        RoleTag::Supervisor,
        RoleTag::Single,
        RoleTag::DebateAgent,
        RoleTag::DebateSupervisor,
        RoleTag::Embedder,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoleTag::Planner => "planner",
            RoleTag::Specialist => "specialist",
            RoleTag::Supervisor => "supervisor",
            RoleTag::Single => "single",
            RoleTag::DebateAgent => "debate-agent",
            RoleTag::DebateSupervisor => "debate-supervisor",
            RoleTag::Embedder => "embedder",
        }
    }
}

impl std::fmt::Display for RoleTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Expected response format for a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResponseContract {
    FreeText,
    Structured(ShapeDescriptor),
}

/// One completion call. Benchmark runs pin temperature to 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: RoleTag,
    pub case_id: String,
    pub agent_name: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output: Option<u32>,
    pub response_contract: ResponseContract,
}

impl CompletionRequest {
    pub fn ledger_key(&self) -> LedgerKey {
        LedgerKey {
            case_id: self.case_id.clone(),
            role: self.role,
            agent_name: self.agent_name.clone(),
        }
    }
}

/// Completion text plus accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_id: String,
    #[serde(skip)]
    pub latency: Duration,
    pub attempt_count: u32,
}

/// A structured call after extraction (and at most one repair round).
#[derive(Debug, Clone)]
pub struct StructuredCompletion {
    pub value: Value,
    pub raw_text: String,
    /// 1 on clean parse, 2 when a repair round ran.
    pub call_count: u32,
    pub results: Vec<CompletionResult>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 250,
        }
    }
}

/// Optional per-provider throttling.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ThrottleConfig {
    pub max_concurrent: Option<usize>,
    pub min_interval_ms: Option<u64>,
}

struct Throttle {
    config: ThrottleConfig,
    in_flight: Mutex<usize>,
    freed: Condvar,
    last_start: Mutex<Option<Instant>>,
}

impl Throttle {
    fn new(config: ThrottleConfig) -> Self {
        Self {
            config,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            last_start: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        if let Some(cap) = self.config.max_concurrent {
            let mut in_flight = self.in_flight.lock().unwrap();
            while *in_flight >= cap.max(1) {
                in_flight = self.freed.wait(in_flight).unwrap();
            }
            *in_flight += 1;
        }
        if let Some(interval) = self.config.min_interval_ms {
            let mut last = self.last_start.lock().unwrap();
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                let min = Duration::from_millis(interval);
                if elapsed < min {
                    std::thread::sleep(min - elapsed);
                }
            }
            *last = Some(Instant::now());
        }
    }

    fn release(&self) {
        if self.config.max_concurrent.is_some() {
            let mut in_flight = self.in_flight.lock().unwrap();
            *in_flight = in_flight.saturating_sub(1);
            self.freed.notify_one();
        }
    }
}

struct Binding {
    provider: Arc<dyn Provider>,
    throttle: Throttle,
}

const DEFAULT_REPAIR_INSTRUCTION: &str = "Your previous response could not be parsed as the \
required JSON object. Reply with ONLY a valid JSON object, no code fences and no surrounding \
prose.\n\nRequired top-level structure: {{shape_requirements}}\n\nYour previous response:\n{{raw_text}}";

/// Request parameters every agent inherits. Temperature stays pinned at 0
/// for benchmark determinism unless a run deliberately overrides it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CallDefaults {
    pub temperature: f64,
    pub max_output: Option<u32>,
}

impl Default for CallDefaults {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output: None,
        }
    }
}

/// Role-bound completion front with accounting and structured extraction.
pub struct Gateway {
    bindings: BTreeMap<RoleTag, Binding>,
    embedder: Arc<dyn Embedder>,
    retry: RetryPolicy,
    repair_instruction: String,
    call_defaults: CallDefaults,
    ledger: TokenLedger,
}

pub struct GatewayBuilder {
    bindings: BTreeMap<RoleTag, Binding>,
    embedder: Arc<dyn Embedder>,
    retry: RetryPolicy,
    repair_instruction: String,
    call_defaults: CallDefaults,
}

impl Default for GatewayBuilder {
    fn default() -> Self {
        Self {
            bindings: BTreeMap::new(),
            embedder: Arc::new(HashedEmbedder::default()),
            retry: RetryPolicy::default(),
            repair_instruction: DEFAULT_REPAIR_INSTRUCTION.to_string(),
            call_defaults: CallDefaults::default(),
        }
    }
}

impl GatewayBuilder {
    pub fn bind(self, role: RoleTag, provider: Arc<dyn Provider>) -> Self {
        self.bind_throttled(role, provider, ThrottleConfig::default())
    }

    pub fn bind_throttled(
        mut self,
        role: RoleTag,
        provider: Arc<dyn Provider>,
        throttle: ThrottleConfig,
    ) -> Self {
        self.bindings.insert(
            role,
            Binding {
                provider,
                throttle: Throttle::new(throttle),
            },
        );
        self
    }

    /// Binds one provider to every role.
    pub fn bind_all(mut self, provider: Arc<dyn Provider>) -> Self {
        for role in RoleTag::ALL {
            self = self.bind(role, provider.clone());
        }
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn repair_instruction(mut self, template: impl Into<String>) -> Self {
        self.repair_instruction = template.into();
        self
    }

    pub fn call_defaults(mut self, defaults: CallDefaults) -> Self {
        self.call_defaults = defaults;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            bindings: self.bindings,
            embedder: self.embedder,
            retry: self.retry,
            repair_instruction: self.repair_instruction,
            call_defaults: self.call_defaults,
            ledger: TokenLedger::new(),
        }
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder::default()
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    pub fn call_defaults(&self) -> CallDefaults {
        self.call_defaults
    }

    /// Distinct provider ids across bound roles, for comparability flags.
    pub fn provider_ids(&self) -> BTreeMap<RoleTag, String> {
        self.bindings
            .iter()
            .map(|(role, b)| (*role, b.provider.id()))
            .collect()
    }

    /// Issues one completion with transport retries. Every attempt is
    /// recorded in the ledger; token counts land on success.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let binding = self
            .bindings
            .get(&request.role)
            .ok_or(GatewayError::NoProviderForRole { role: request.role })?;
        let key = request.ledger_key();
        let turn = self.ledger.turn_index(&key);
        let started = Instant::now();

        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            binding.throttle.acquire();
            self.ledger.record_attempt(&key);
            let outcome = binding.provider.complete(request, turn);
            binding.throttle.release();
            match outcome {
                Ok(response) => {
                    if response.text.trim().is_empty() {
                        return Err(GatewayError::EmptyCompletion {
                            role: request.role,
                            case_id: request.case_id.clone(),
                        });
                    }
                    let prompt_tokens = response.prompt_tokens.unwrap_or_else(|| {
                        char_token_proxy(&request.system_text)
                            + char_token_proxy(&request.user_text)
                    });
                    let completion_tokens = response
                        .completion_tokens
                        .unwrap_or_else(|| char_token_proxy(&response.text));
                    self.ledger
                        .record_success(&key, prompt_tokens, completion_tokens);
                    return Ok(CompletionResult {
                        text: response.text,
                        prompt_tokens,
                        completion_tokens,
                        provider_id: binding.provider.id(),
                        latency: started.elapsed(),
                        attempt_count: attempt,
                    });
                }
                Err(ProviderError::Transient(message)) => {
                    last_error = message;
                    if attempt < self.retry.max_attempts {
                        let backoff = self.retry.base_backoff_ms << (attempt - 1);
                        if backoff > 0 {
                            std::thread::sleep(Duration::from_millis(backoff));
                        }
                    }
                }
                Err(ProviderError::Permanent(message)) => {
                    return Err(GatewayError::ProviderUnavailable {
                        role: request.role,
                        last_error: message,
                    });
                }
            }
        }
        Err(GatewayError::ProviderUnavailable {
            role: request.role,
            last_error,
        })
    }

    /// Completion plus extraction against the request's declared shape.
    /// One parse failure triggers exactly one repair round; a second failure
    /// is terminal for this call.
    pub fn complete_structured(
        &self,
        request: &CompletionRequest,
    ) -> Result<StructuredCompletion, GatewayError> {
        let shape = match &request.response_contract {
            ResponseContract::Structured(shape) => shape.clone(),
            ResponseContract::FreeText => {
                return Err(GatewayError::NotStructured { role: request.role })
            }
        };

        let first = self.complete(request)?;
        match extract_structured(&first.text, &shape) {
            Ok(value) => Ok(StructuredCompletion {
                value,
                raw_text: first.text.clone(),
                call_count: 1,
                results: vec![first],
            }),
            Err(first_err) => {
                log::warn!(
                    "parse failure for ({}, {}, {}): {first_err}; issuing repair round",
                    request.case_id,
                    request.role,
                    request.agent_name
                );
                let repair_user = self
                    .repair_instruction
                    .replace("{{shape_requirements}}", &shape.required.join(", "))
                    .replace("{{raw_text}}", &first.text);
                let repair_request = CompletionRequest {
                    user_text: repair_user,
                    ..request.clone()
                };
                let second = self.complete(&repair_request)?;
                match extract_structured(&second.text, &shape) {
                    Ok(value) => Ok(StructuredCompletion {
                        value,
                        raw_text: second.text.clone(),
                        call_count: 2,
                        results: vec![first, second],
                    }),
                    Err(second_err) => Err(GatewayError::ParseFailure {
                        role: request.role,
                        case_id: request.case_id.clone(),
                        raw_text: second.text,
                        source: second_err,
                    }),
                }
            }
        }
    }

    /// Embeds a non-empty batch; order preserved.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyEmbedBatch);
        }
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            match self.embedder.embed(texts) {
                Ok(vectors) => return Ok(vectors),
                Err(ProviderError::Transient(message)) => {
                    last_error = message;
                    if attempt < self.retry.max_attempts {
                        let backoff = self.retry.base_backoff_ms << (attempt - 1);
                        if backoff > 0 {
                            std::thread::sleep(Duration::from_millis(backoff));
                        }
                    }
                }
                Err(ProviderError::Permanent(message)) => {
                    return Err(GatewayError::ProviderUnavailable {
                        role: RoleTag::Embedder,
                        last_error: message,
                    });
                }
            }
        }
        Err(GatewayError::ProviderUnavailable {
            role: RoleTag::Embedder,
            last_error,
        })
    }

    pub fn embedder_id(&self) -> String {
        self.embedder.id()
    }
}

/// Deterministic proxy when the provider reports no usage block.
fn char_token_proxy(text: &str) -> u64 {
    (text.chars().count() as u64) / 4
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no provider configured for role '{role}'")]
    NoProviderForRole { role: RoleTag },
    #[error("provider for role '{role}' unavailable after retries: {last_error}")]
    ProviderUnavailable { role: RoleTag, last_error: String },
    #[error("empty completion from role '{role}' on case '{case_id}'")]
    EmptyCompletion { role: RoleTag, case_id: String },
    #[error("request for role '{role}' has no structured response contract")]
    NotStructured { role: RoleTag },
    #[error(
        "structured parse failed after repair for role '{role}' on case '{case_id}': {source}"
    )]
    ParseFailure {
        role: RoleTag,
        case_id: String,
        raw_text: String,
        #[source]
        source: ExtractError,
    },
    #[error("embed called with an empty batch")]
    EmptyEmbedBatch,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(case: &str, role: RoleTag, agent: &str) -> CompletionRequest {
        CompletionRequest {
            role,
            case_id: case.into(),
            agent_name: agent.into(),
            system_text: "sys".into(),
            user_text: "user".into(),
            temperature: 0.0,
            max_output: None,
            response_contract: ResponseContract::FreeText,
        }
    }

    fn structured_request(case: &str, role: RoleTag, shape: ShapeDescriptor) -> CompletionRequest {
        CompletionRequest {
            response_contract: ResponseContract::Structured(shape),
            ..request(case, role, "agent")
        }
    }

    struct FlakyProvider {
        failures_before_success: u32,
        calls: AtomicU32,
    }

    impl Provider for FlakyProvider {
        fn id(&self) -> String {
            "flaky".into()
        }
        fn complete(
            &self,
            _request: &CompletionRequest,
            _turn: u64,
        ) -> Result<ProviderResponse, ProviderError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures_before_success {
                Err(ProviderError::Transient("connection reset".into()))
            } else {
                Ok(ProviderResponse {
                    text: "ok".into(),
                    prompt_tokens: Some(10),
                    completion_tokens: Some(2),
                })
            }
        }
    }

    fn scripted(fixtures: Vec<Fixture>) -> Arc<dyn Provider> {
        Arc::new(ScriptedProvider::new(FixtureSet::new(fixtures)))
    }

    #[test]
    fn scripted_fixture_round_trips_with_one_attempt() {
        let gateway = Gateway::builder()
            .bind_all(scripted(vec![Fixture {
                case_id: "case_7".into(),
                role: RoleTag::Planner,
                agent: None,
                turn: None,
                text: "the plan".into(),
            }]))
            .build();
        let result = gateway
            .complete(&request("case_7", RoleTag::Planner, "pa"))
            .unwrap();
        assert_eq!(result.text, "the plan");
        assert_eq!(result.attempt_count, 1);
        // Scripted counts use the character/4 proxy: 7 chars of prompt.
        assert_eq!(result.prompt_tokens, 1);
        assert_eq!(result.completion_tokens, 2);
    }

    #[test]
    fn transient_failures_retry_until_success() {
        let gateway = Gateway::builder()
            .bind(
                RoleTag::Single,
                Arc::new(FlakyProvider {
                    failures_before_success: 2,
                    calls: AtomicU32::new(0),
                }),
            )
            .retry(RetryPolicy {
                max_attempts: 3,
                base_backoff_ms: 0,
            })
            .build();
        let result = gateway
            .complete(&request("c", RoleTag::Single, "solo"))
            .unwrap();
        assert_eq!(result.attempt_count, 3);
        let key = request("c", RoleTag::Single, "solo").ledger_key();
        let entry = gateway.ledger().snapshot()[&key];
        assert_eq!(entry.attempt_count, 3);
        assert_eq!(entry.call_count, 1);
    }

    #[test]
    fn exhausted_retries_surface_the_last_error() {
        let gateway = Gateway::builder()
            .bind(
                RoleTag::Single,
                Arc::new(FlakyProvider {
                    failures_before_success: 99,
                    calls: AtomicU32::new(0),
                }),
            )
            .retry(RetryPolicy {
                max_attempts: 2,
                base_backoff_ms: 0,
            })
            .build();
        let err = gateway
            .complete(&request("c", RoleTag::Single, "solo"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::ProviderUnavailable { .. }));
    }

    #[test]
    fn empty_text_is_an_empty_completion_error() {
        let gateway = Gateway::builder()
            .bind_all(scripted(vec![Fixture {
                case_id: "*".into(),
                role: RoleTag::Single,
                agent: None,
                turn: None,
                text: "   ".into(),
            }]))
            .build();
        let err = gateway
            .complete(&request("c", RoleTag::Single, "solo"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::EmptyCompletion { .. }));
    }

    #[test]
    fn repair_round_fixes_a_bad_first_parse() {
        let shape = ShapeDescriptor::new("t", &["answer"]);
        let gateway = Gateway::builder()
            .bind_all(scripted(vec![
                Fixture {
                    case_id: "c".into(),
                    role: RoleTag::Supervisor,
                    agent: None,
                    turn: Some(0),
                    text: "not json at all".into(),
                },
                Fixture {
                    case_id: "c".into(),
                    role: RoleTag::Supervisor,
                    agent: None,
                    turn: Some(1),
                    text: "{\"answer\": 42}".into(),
                },
            ]))
            .build();
        let out = gateway
            .complete_structured(&structured_request("c", RoleTag::Supervisor, shape))
            .unwrap();
        assert_eq!(out.call_count, 2);
        assert_eq!(out.value["answer"], 42);
    }

    #[test]
    fn second_parse_failure_is_terminal() {
        let shape = ShapeDescriptor::new("t", &["answer"]);
        let gateway = Gateway::builder()
            .bind_all(scripted(vec![Fixture {
                case_id: "c".into(),
                role: RoleTag::Supervisor,
                agent: None,
                turn: None,
                text: "still not json".into(),
            }]))
            .build();
        let err = gateway
            .complete_structured(&structured_request("c", RoleTag::Supervisor, shape))
            .unwrap_err();
        assert!(matches!(err, GatewayError::ParseFailure { .. }));
        // Exactly two calls: original plus one repair.
        let (_, _) = gateway.ledger().totals();
        let calls: u64 = gateway
            .ledger()
            .snapshot()
            .values()
            .map(|e| e.call_count)
            .sum();
        assert_eq!(calls, 2);
    }

    #[test]
    fn ledger_conservation_over_many_calls() {
        let gateway = Gateway::builder()
            .bind_all(scripted(vec![Fixture {
                case_id: "*".into(),
                role: RoleTag::Specialist,
                agent: None,
                turn: None,
                text: "a response body".into(),
            }]))
            .build();
        let mut expected = (0u64, 0u64);
        for i in 0..25 {
            let r = gateway
                .complete(&request(&format!("case_{i}"), RoleTag::Specialist, "sa"))
                .unwrap();
            expected.0 += r.prompt_tokens;
            expected.1 += r.completion_tokens;
        }
        assert_eq!(gateway.ledger().totals(), expected);
    }

    #[test]
    fn unbound_role_is_an_error() {
        let gateway = Gateway::builder().build();
        let err = gateway
            .complete(&request("c", RoleTag::Planner, "pa"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::NoProviderForRole { .. }));
    }
}
