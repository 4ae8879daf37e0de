//! Hierarchical multi-agent shortlisting engine over high-dimensional
//! candidate pools, with single-agent and debate baselines, a benchmark
//! harness, and agent-profile clustering diagnostics.
//!
//! Pipeline: a planner reads the deal context and emits specialist
//! blueprints; specialists each rank the pool from their own focus; a
//! supervisor fuses the shortlists by consensus counting and weighted
//! reciprocal-rank scoring. Everything runs offline against a scripted
//! provider, or against remote chat-completion endpoints.

pub mod agents;
pub mod baselines;
pub mod bench;
pub mod cluster;
pub mod domain;
pub mod fixtures;
pub mod gateway;
pub mod ingest;
pub mod prompt;
pub(crate) mod util;

/// Stable hex hash of a serializable config, recorded in run metadata.
pub fn derive_config_hash<T: serde::Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).unwrap_or_default();
    format!("{:016x}", util::fnv64(text.as_bytes()))
}

pub use domain::{
    final_shortlist_size, specialist_shortlist_size, validate_shortlist, AgentBlueprint,
    CandidateRecord, CasePool, DomainError, FeatureKind, FeatureValue, Profile, RankedShortlist,
    ScoreScale, ShortlistEntry, TaskContext, ValidationReport,
};
pub use gateway::{Gateway, GatewayError, RoleTag};
pub use prompt::{PromptVariant, SupervisorPromptMode, TemplateStore};
