//! Planner agent: reads the deal context and emits strategic guidance plus
//! a set of specialist blueprints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentBlueprint, CandidateRecord, TaskContext};
use crate::gateway::{Gateway, GatewayError, RoleTag};
use crate::prompt::{PromptVariant, TemplateError, TemplateStore};

/// Upper bound on blueprints kept from one planner output. Accuracy peaks
/// around 4-5 agents and degrades beyond that, so runaway planners are
/// bounded while the requested count is still recorded for analysis.
pub const DEFAULT_BLUEPRINT_CAP: usize = 10;

/// Validated planner output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub strategic_guidance: String,
    pub blueprints: Vec<AgentBlueprint>,
    /// How many agent configurations the model emitted before validation,
    /// dedup, and the cap.
    pub requested_count: usize,
    /// Verbatim model text, persisted for profile clustering.
    pub raw_text: String,
    /// 1 on a clean parse, 2 when a repair round ran.
    pub call_count: u32,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("planner returned empty strategic guidance")]
    EmptyGuidance,
    #[error("planner 'agents' value is not an array")]
    BadAgentsShape,
    #[error("planner produced zero valid blueprints")]
    NoValidBlueprints,
}

/// Runs the planner for one case: render, complete, extract, validate.
/// Blueprints with missing fields are dropped, colliding names keep the
/// first occurrence, and the kept list is truncated to `cap`.
pub fn plan(
    gateway: &Gateway,
    store: &TemplateStore,
    ctx: &TaskContext,
    schema: &[String],
    sample: &[CandidateRecord],
    variant: PromptVariant,
    cap: usize,
) -> Result<PlannerOutput, PlannerError> {
    let prompt = store.render_planner_prompt(ctx, schema, sample, variant)?;
    let persona_name = store.persona("planner")?.name.clone();
    let request = prompt.into_request(
        RoleTag::Planner,
        &ctx.company_id,
        persona_name,
        gateway.call_defaults(),
    );
    let completion = gateway.complete_structured(&request)?;

    let guidance = completion.value["strategic_guidance"]
        .as_str()
        .unwrap_or_default()
        .trim()
        .to_string();
    if guidance.is_empty() {
        return Err(PlannerError::EmptyGuidance);
    }
    let agents = completion.value["agents"]
        .as_array()
        .ok_or(PlannerError::BadAgentsShape)?;
    let requested_count = agents.len();

    let mut blueprints: Vec<AgentBlueprint> = Vec::new();
    for item in agents {
        let Some(blueprint) = parse_blueprint(item) else {
            log::warn!(
                "case {}: dropping incomplete agent configuration: {item}",
                ctx.company_id
            );
            continue;
        };
        if blueprints.iter().any(|b| b.name == blueprint.name) {
            log::warn!(
                "case {}: duplicate blueprint name '{}', keeping first",
                ctx.company_id,
                blueprint.name
            );
            continue;
        }
        blueprints.push(blueprint);
    }
    if blueprints.is_empty() {
        return Err(PlannerError::NoValidBlueprints);
    }
    if blueprints.len() > cap.max(1) {
        log::warn!(
            "case {}: planner requested {} agents, capping at {}",
            ctx.company_id,
            blueprints.len(),
            cap
        );
        blueprints.truncate(cap.max(1));
    }

    Ok(PlannerOutput {
        strategic_guidance: guidance,
        blueprints,
        requested_count,
        raw_text: completion.raw_text,
        call_count: completion.call_count,
    })
}

/// Accepts the documented keys plus the aliases models commonly emit for
/// them ("abilities", "guides"/"focus").
fn parse_blueprint(item: &serde_json::Value) -> Option<AgentBlueprint> {
    let get = |keys: &[&str]| -> String {
        keys.iter()
            .find_map(|k| item.get(*k).and_then(|v| v.as_str()))
            .unwrap_or_default()
            .trim()
            .to_string()
    };
    let blueprint = AgentBlueprint {
        name: get(&["name", "agent_name"]),
        role: get(&["role"]),
        ability: get(&["ability", "abilities"]),
        profile: get(&["profile", "guides", "guide", "focus"]),
    };
    blueprint.is_complete().then_some(blueprint)
}
