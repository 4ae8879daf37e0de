//! Prompt rendering from versioned template assets.
//!
//! Templates live on disk (`assets/templates/<version>/`) and are compiled
//! into the binary as the built-in default; an override directory can be
//! loaded at runtime so prompt experiments do not require recompilation.
//! Placeholders use `{{name}}` and every placeholder in a template must be
//! substituted at render time.
//!
//! Prompt-guidance variants: the business variant inserts the shared
//! business hint block verbatim; the generic variant omits it and differs by
//! nothing else.

pub mod table;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentBlueprint, CandidateRecord, CasePool, RankedShortlist, TaskContext};
use crate::gateway::{CompletionRequest, ResponseContract, RoleTag, ShapeDescriptor};
use table::{render_candidate_table, render_profile, render_table};

/// Generic vs business-domain-guided prompting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    Generic,
    Business,
}

impl PromptVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptVariant::Generic => "generic",
            PromptVariant::Business => "business",
        }
    }
}

/// Supervisor prompt family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisorPromptMode {
    Importance,
    WeightAssign,
    WeightSelect,
    Majority,
}

/// A fully substituted prompt plus its structured-output contract.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
    pub declared_shape: ShapeDescriptor,
}

impl RenderedPrompt {
    /// Builds the completion request for this prompt under the gateway's
    /// call defaults (temperature pinned to 0 unless overridden).
    pub fn into_request(
        self,
        role: RoleTag,
        case_id: impl Into<String>,
        agent_name: impl Into<String>,
        defaults: crate::gateway::CallDefaults,
    ) -> CompletionRequest {
        CompletionRequest {
            role,
            case_id: case_id.into(),
            agent_name: agent_name.into(),
            system_text: self.system_text,
            user_text: self.user_text,
            temperature: defaults.temperature,
            max_output: defaults.max_output,
            response_contract: ResponseContract::Structured(self.declared_shape),
        }
    }
}

/// A specialist's output as the supervisor prompt needs it: shortlist with
/// scores plus the declared focus and rationale.
#[derive(Debug, Clone)]
pub struct AgentReportView<'a> {
    pub name: &'a str,
    pub evaluation_focus: &'a str,
    pub overall_rationale: &'a str,
    pub shortlist: &'a RankedShortlist,
    pub rationales: Option<&'a BTreeMap<String, String>>,
}

const TEMPLATE_VERSION: &str = include_str!("../assets/templates/v1/VERSION");

macro_rules! builtin_templates {
    ($($name:literal),+ $(,)?) => {
        [$(
            ($name, include_str!(concat!("../assets/templates/v1/", $name, ".txt"))),
        )+]
    };
}

const BUILTIN_TEMPLATES: [(&str, &str); 25] = builtin_templates![
    "business_hint",
    "planner.system",
    "planner.user",
    "specialist.system",
    "specialist.user",
    "supervisor_importance.system",
    "supervisor_importance.user",
    "supervisor_weight_assign.system",
    "supervisor_weight_assign.user",
    "supervisor_weight_select.system",
    "supervisor_weight_select.user",
    "supervisor_majority.system",
    "supervisor_majority.user",
    "single_agent.system",
    "single_agent.user",
    "single_reflect.system",
    "single_reflect.user",
    "debate_eval.system",
    "debate_eval.user",
    "debate_debate.system",
    "debate_debate.user",
    "debate_reflect.system",
    "debate_reflect.user",
    "debate_supervisor.system",
    "debate_supervisor.user",
];

const BUILTIN_PERSONAS: &str = include_str!("../assets/templates/v1/personas.json");
const BUILTIN_COMMITTEE: &str = include_str!("../assets/templates/v1/committee.json");

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z0-9_]+)\}\}").expect("valid regex"))
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("template '{template}' placeholder '{placeholder}' has no value")]
    MissingPlaceholderValue {
        template: String,
        placeholder: String,
    },
    #[error("template asset {path}: {message}")]
    BadAsset { path: String, message: String },
    #[error("planner sample must contain exactly 2 candidates, got {got}")]
    BadSampleSize { got: usize },
    #[error("unknown persona '{0}'")]
    UnknownPersona(String),
}

/// Versioned template set plus fixed personas and the debate committee.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    version: String,
    templates: BTreeMap<String, String>,
    personas: BTreeMap<String, AgentBlueprint>,
    committee: Vec<AgentBlueprint>,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateStore {
    /// The compiled-in template set.
    pub fn builtin() -> Self {
        let templates = BUILTIN_TEMPLATES
            .iter()
            .map(|(name, text)| (name.to_string(), text.to_string()))
            .collect();
        let personas =
            serde_json::from_str(BUILTIN_PERSONAS).expect("built-in personas are valid JSON");
        let committee =
            serde_json::from_str(BUILTIN_COMMITTEE).expect("built-in committee is valid JSON");
        Self {
            version: TEMPLATE_VERSION.trim().to_string(),
            templates,
            personas,
            committee,
        }
    }

    /// Loads a template directory with the same file layout as the built-in
    /// assets (a `VERSION` file, `<name>.txt` templates, `personas.json`,
    /// `committee.json`).
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let read = |file: String| -> Result<String, TemplateError> {
            let path = dir.join(&file);
            std::fs::read_to_string(&path).map_err(|e| TemplateError::BadAsset {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        let version = read("VERSION".to_string())?.trim().to_string();
        let mut templates = BTreeMap::new();
        for (name, _) in BUILTIN_TEMPLATES.iter() {
            templates.insert(name.to_string(), read(format!("{name}.txt"))?);
        }
        let personas_text = read("personas.json".to_string())?;
        let personas =
            serde_json::from_str(&personas_text).map_err(|e| TemplateError::BadAsset {
                path: dir.join("personas.json").display().to_string(),
                message: e.to_string(),
            })?;
        let committee_text = read("committee.json".to_string())?;
        let committee =
            serde_json::from_str(&committee_text).map_err(|e| TemplateError::BadAsset {
                path: dir.join("committee.json").display().to_string(),
                message: e.to_string(),
            })?;
        Ok(Self {
            version,
            templates,
            personas,
            committee,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn persona(&self, key: &str) -> Result<&AgentBlueprint, TemplateError> {
        self.personas
            .get(key)
            .ok_or_else(|| TemplateError::UnknownPersona(key.to_string()))
    }

    /// The three fixed debate-committee blueprints.
    pub fn committee(&self) -> &[AgentBlueprint] {
        &self.committee
    }

    pub fn business_hint(&self) -> &str {
        self.templates
            .get("business_hint")
            .map(String::as_str)
            .unwrap_or_default()
    }

    /// The exact hint block the business variant inserts; the generic
    /// variant renders it as the empty string.
    pub fn business_hint_block(&self) -> String {
        format!("# Business Hint:\n{}\n\n", self.business_hint().trim())
    }

    fn hint_block(&self, variant: PromptVariant) -> String {
        match variant {
            PromptVariant::Business => self.business_hint_block(),
            PromptVariant::Generic => String::new(),
        }
    }

    fn render(&self, name: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let template = self
            .templates
            .get(name)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))?;
        for capture in placeholder_regex().captures_iter(template) {
            let placeholder = capture.get(1).expect("group 1").as_str();
            if !vars.contains_key(placeholder) {
                return Err(TemplateError::MissingPlaceholderValue {
                    template: name.to_string(),
                    placeholder: placeholder.to_string(),
                });
            }
        }
        let out = placeholder_regex().replace_all(template, |caps: &regex::Captures<'_>| {
            vars[caps.get(1).expect("group 1").as_str()].clone()
        });
        Ok(out.into_owned())
    }

    fn persona_vars<'a>(persona: &AgentBlueprint) -> BTreeMap<&'a str, String> {
        let mut vars = BTreeMap::new();
        vars.insert("name", persona.name.clone());
        vars.insert("role", persona.role.clone());
        vars.insert("ability", persona.ability.clone());
        vars.insert("profile", persona.profile.clone());
        vars
    }

    /// Planner prompt: context, feature schema, and a 2-candidate sample.
    pub fn render_planner_prompt(
        &self,
        ctx: &TaskContext,
        schema: &[String],
        sample: &[CandidateRecord],
        variant: PromptVariant,
    ) -> Result<RenderedPrompt, TemplateError> {
        if sample.len() != 2 {
            return Err(TemplateError::BadSampleSize { got: sample.len() });
        }
        let persona = self.persona("planner")?;
        let system_text = self.render("planner.system", &Self::persona_vars(persona))?;
        let mut vars = BTreeMap::new();
        vars.insert("business_hint_block", self.hint_block(variant));
        vars.insert("lead_profile", render_profile(&ctx.lead_profile));
        vars.insert("target_profile", render_profile(&ctx.target_profile));
        vars.insert("feature_names", schema.join(", "));
        vars.insert("sample_candidates", render_table(sample, schema));
        let user_text = self.render("planner.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new("planner", &["strategic_guidance", "agents"]),
        })
    }

    /// Specialist prompt: full candidate table plus the agent's blueprint
    /// and the requested list length k'.
    pub fn render_specialist_prompt(
        &self,
        blueprint: &AgentBlueprint,
        ctx: &TaskContext,
        pool: &CasePool,
        k_prime: usize,
    ) -> Result<RenderedPrompt, TemplateError> {
        let system_text = self.render("specialist.system", &Self::persona_vars(blueprint))?;
        let mut vars = BTreeMap::new();
        vars.insert("target_profile", render_profile(&ctx.target_profile));
        vars.insert("lead_profile", render_profile(&ctx.lead_profile));
        vars.insert("candidates_data", render_candidate_table(pool));
        vars.insert("dynamic_top_k", k_prime.to_string());
        vars.insert("total_candidates", pool.size().to_string());
        let user_text = self.render("specialist.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new(
                "specialist",
                &["evaluation_focus", "overall_rationale", "ranked_candidates"],
            ),
        })
    }

    /// Supervisor prompt in one of the four prompt modes.
    pub fn render_supervisor_prompt(
        &self,
        mode: SupervisorPromptMode,
        guidance: &str,
        reports: &[AgentReportView<'_>],
        weights: Option<&BTreeMap<String, f64>>,
        k: usize,
        variant: PromptVariant,
    ) -> Result<RenderedPrompt, TemplateError> {
        let persona = self.persona("supervisor")?;
        let mut system_vars = Self::persona_vars(persona);
        system_vars.insert("top_k", k.to_string());

        let mut vars = BTreeMap::new();
        vars.insert("business_hint_block", self.hint_block(variant));
        vars.insert("top_k", k.to_string());
        vars.insert("planner_strategic_guidance", guidance.to_string());
        vars.insert("agent_reports", render_agent_reports(reports));

        let (template_base, shape) = match mode {
            SupervisorPromptMode::Importance => (
                "supervisor_importance",
                ShapeDescriptor::new("supervisor-final", &["final_ranking"]),
            ),
            SupervisorPromptMode::WeightAssign => {
                let roster = reports
                    .iter()
                    .map(|r| format!("- {} — focus: {}", r.name, r.evaluation_focus))
                    .collect::<Vec<_>>()
                    .join("\n");
                vars.insert("agent_roster", roster);
                (
                    "supervisor_weight_assign",
                    ShapeDescriptor::new("supervisor-weights", &["weights"]),
                )
            }
            SupervisorPromptMode::WeightSelect => {
                let weight_lines = weights
                    .map(|w| {
                        w.iter()
                            .map(|(name, value)| format!("- {name}: {value:.4}"))
                            .collect::<Vec<_>>()
                            .join("\n")
                    })
                    .unwrap_or_else(|| "N/A".to_string());
                vars.insert("weights", weight_lines);
                (
                    "supervisor_weight_select",
                    ShapeDescriptor::new("supervisor-final", &["final_ranking"]),
                )
            }
            SupervisorPromptMode::Majority => (
                "supervisor_majority",
                ShapeDescriptor::new("supervisor-final", &["final_ranking"]),
            ),
        };
        let system_text = self.render(&format!("{template_base}.system"), &system_vars)?;
        let user_text = self.render(&format!("{template_base}.user"), &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: shape,
        })
    }

    /// Single-agent shortlist prompt (1-5 scale, final shortlist size).
    pub fn render_single_prompt(
        &self,
        ctx: &TaskContext,
        pool: &CasePool,
        top_k: usize,
        variant: PromptVariant,
    ) -> Result<RenderedPrompt, TemplateError> {
        let persona = self.persona("single")?;
        let system_text = self.render("single_agent.system", &Self::persona_vars(persona))?;
        let mut vars = BTreeMap::new();
        vars.insert("business_hint_block", self.hint_block(variant));
        vars.insert("target_profile", render_profile(&ctx.target_profile));
        vars.insert("lead_profile", render_profile(&ctx.lead_profile));
        vars.insert("candidates_list", render_candidate_table(pool));
        vars.insert("top_k", top_k.to_string());
        let user_text = self.render("single_agent.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new("single", &["ranked_candidates"]),
        })
    }

    /// Self-reflection prompt over the single agent's own k runs.
    pub fn render_single_reflect_prompt(
        &self,
        runs: &[RankedShortlist],
    ) -> Result<RenderedPrompt, TemplateError> {
        let persona = self.persona("single")?;
        let mut system_vars = Self::persona_vars(persona);
        system_vars.insert("runs_k", runs.len().to_string());
        let system_text = self.render("single_reflect.system", &system_vars)?;

        let shortlists = runs
            .iter()
            .enumerate()
            .map(|(i, list)| {
                let body = list
                    .entries
                    .iter()
                    .map(|e| format!("{}. {} (score {})", e.rank, e.firm_id, e.score))
                    .collect::<Vec<_>>()
                    .join("\n");
                format!("## Shortlist {}:\n{body}", i + 1)
            })
            .collect::<Vec<_>>()
            .join("\n\n");
        let mut vars = BTreeMap::new();
        vars.insert("runs_k", runs.len().to_string());
        vars.insert("shortlists", shortlists);
        let user_text = self.render("single_reflect.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new("single-reflect", &["selected_run"]),
        })
    }

    /// Shared context string for debate prompts: lead profile plus the
    /// optional business hint block.
    pub fn debate_context(&self, ctx: &TaskContext, variant: PromptVariant) -> String {
        format!(
            "{}Lead Investor Profile: {}",
            self.hint_block(variant),
            render_profile(&ctx.lead_profile)
        )
    }

    /// Debate phase 1: independent committee evaluation.
    pub fn render_debate_eval_prompt(
        &self,
        blueprint: &AgentBlueprint,
        ctx: &TaskContext,
        pool: &CasePool,
        variant: PromptVariant,
    ) -> Result<RenderedPrompt, TemplateError> {
        let system_text = self.render("debate_eval.system", &Self::persona_vars(blueprint))?;
        let mut vars = BTreeMap::new();
        vars.insert("target_profile", render_profile(&ctx.target_profile));
        vars.insert("profile", blueprint.profile.clone());
        vars.insert("candidates_data", render_candidate_table(pool));
        vars.insert("context", self.debate_context(ctx, variant));
        let user_text = self.render("debate_eval.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new("debate-eval", &["evaluations"]),
        })
    }

    /// Debate phase 2: peer critique with scores already stripped from the
    /// embedded evaluations.
    pub fn render_debate_debate_prompt(
        &self,
        blueprint: &AgentBlueprint,
        peers: &[String],
        stripped_evaluations: &str,
        context: &str,
    ) -> Result<RenderedPrompt, TemplateError> {
        let system_text = self.render("debate_debate.system", &Self::persona_vars(blueprint))?;
        let mut vars = BTreeMap::new();
        vars.insert("peers_list", peers.join(", "));
        vars.insert("stripped_evaluations", stripped_evaluations.to_string());
        vars.insert("context", context.to_string());
        let user_text = self.render("debate_debate.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new(
                "debate-debate",
                &["agree", "disagree", "questions"],
            ),
        })
    }

    /// Debate phase 3: reflection over the agent's own evaluations in light
    /// of peer feedback.
    pub fn render_debate_reflect_prompt(
        &self,
        blueprint: &AgentBlueprint,
        own_evaluations: &str,
        context: &str,
    ) -> Result<RenderedPrompt, TemplateError> {
        let system_text = self.render("debate_reflect.system", &Self::persona_vars(blueprint))?;
        let mut vars = BTreeMap::new();
        vars.insert("evaluations", own_evaluations.to_string());
        vars.insert("context", context.to_string());
        let user_text = self.render("debate_reflect.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new(
                "debate-reflect",
                &[
                    "reflection_summary",
                    "score_decisions.stick_with_previous_score",
                ],
            ),
        })
    }

    /// Debate synthesis: supervisor integrates final evaluations into the
    /// top-k decision.
    pub fn render_debate_supervisor_prompt(
        &self,
        ctx: &TaskContext,
        final_evaluations: &str,
        debate_summary: &str,
        top_k: usize,
    ) -> Result<RenderedPrompt, TemplateError> {
        let persona = self.persona("debate_supervisor")?;
        let mut system_vars = Self::persona_vars(persona);
        system_vars.insert("top_k", top_k.to_string());
        let system_text = self.render("debate_supervisor.system", &system_vars)?;
        let mut vars = BTreeMap::new();
        vars.insert("target_profile", render_profile(&ctx.target_profile));
        vars.insert("final_evaluations", final_evaluations.to_string());
        vars.insert("debate_summary", debate_summary.to_string());
        vars.insert("top_k", top_k.to_string());
        let user_text = self.render("debate_supervisor.user", &vars)?;
        Ok(RenderedPrompt {
            system_text,
            user_text,
            declared_shape: ShapeDescriptor::new("debate-supervisor", &["final_ranking"]),
        })
    }
}

/// Serializes specialist reports for supervisor prompts, one block per
/// agent, labeled by producer name.
pub fn render_agent_reports(reports: &[AgentReportView<'_>]) -> String {
    reports
        .iter()
        .map(|report| {
            let lines = report
                .shortlist
                .entries
                .iter()
                .map(|e| {
                    let rationale = report
                        .rationales
                        .and_then(|r| r.get(&e.firm_id))
                        .map(|r| format!(" — {r}"))
                        .unwrap_or_default();
                    format!("{}. {} (score {}){rationale}", e.rank, e.firm_id, e.score)
                })
                .collect::<Vec<_>>()
                .join("\n");
            format!(
                "## Agent: {}\nEvaluation focus: {}\nOverall rationale: {}\nRanked shortlist:\n{lines}",
                report.name, report.evaluation_focus, report.overall_rationale
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ScoreScale;
    use crate::ingest::synthetic::{generate_synthetic, SyntheticSpec};

    fn pool36() -> CasePool {
        let spec = SyntheticSpec {
            num_cases: 1,
            candidates_per_case: (36, 36),
            seed: 11,
            ..SyntheticSpec::default()
        };
        generate_synthetic(&spec).unwrap().remove(0)
    }

    fn store() -> TemplateStore {
        TemplateStore::builtin()
    }

    const HINT_ANCHOR: &str = "pair tie strength with the lead company";

    #[test]
    fn business_planner_prompt_contains_verbatim_hint() {
        let pool = pool36();
        let store = store();
        let schema = pool.feature_names();
        let business = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..2],
                PromptVariant::Business,
            )
            .unwrap();
        assert!(business.user_text.contains(HINT_ANCHOR));
        let generic = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..2],
                PromptVariant::Generic,
            )
            .unwrap();
        assert!(!generic.user_text.contains(HINT_ANCHOR));
        assert!(!generic.system_text.contains(HINT_ANCHOR));
    }

    #[test]
    fn variants_differ_only_by_the_hint_block() {
        let pool = pool36();
        let store = store();
        let schema = pool.feature_names();
        let business = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..2],
                PromptVariant::Business,
            )
            .unwrap();
        let generic = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..2],
                PromptVariant::Generic,
            )
            .unwrap();
        assert_eq!(business.system_text, generic.system_text);
        assert_eq!(
            business
                .user_text
                .replacen(&store.business_hint_block(), "", 1),
            generic.user_text
        );
    }

    #[test]
    fn planner_rendering_is_deterministic() {
        let pool = pool36();
        let store = store();
        let schema = pool.feature_names();
        let a = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..2],
                PromptVariant::Business,
            )
            .unwrap();
        let b = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..2],
                PromptVariant::Business,
            )
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn planner_sample_must_be_two_candidates() {
        let pool = pool36();
        let store = store();
        let schema = pool.feature_names();
        let err = store
            .render_planner_prompt(
                &pool.context,
                &schema,
                &pool.candidates[..3],
                PromptVariant::Generic,
            )
            .unwrap_err();
        assert!(matches!(err, TemplateError::BadSampleSize { got: 3 }));
    }

    #[test]
    fn specialist_prompt_embeds_k_prime_and_pool_order() {
        let pool = pool36();
        let store = store();
        let blueprint = AgentBlueprint {
            name: "Network Analyst".into(),
            role: "network evaluator".into(),
            ability: "network analysis".into(),
            profile: "Focus on tie strength.".into(),
        };
        let prompt = store
            .render_specialist_prompt(&blueprint, &pool.context, &pool, 12)
            .unwrap();
        assert!(prompt.user_text.contains("**top 12**"));
        assert!(prompt.user_text.contains("total of 36 candidates"));
        // Table rows appear in pool order, firm id first.
        let table_start = prompt.user_text.find("firm_id").unwrap();
        let after = &prompt.user_text[table_start..];
        let first = after.find(&pool.candidates[0].firm_id).unwrap();
        let second = after.find(&pool.candidates[1].firm_id).unwrap();
        assert!(first < second);
    }

    #[test]
    fn missing_features_render_as_na() {
        // Synthetic pools have ~10% missing firmstate cells; find one.
        let spec = SyntheticSpec {
            num_cases: 3,
            candidates_per_case: (36, 36),
            seed: 2,
            ..SyntheticSpec::default()
        };
        let pools = generate_synthetic(&spec).unwrap();
        let pool = pools
            .iter()
            .find(|p| {
                p.candidates.iter().any(|c| {
                    c.features.get("firmstate") == Some(&crate::domain::FeatureValue::Missing)
                })
            })
            .expect("at least one missing firmstate in 108 candidates");
        let store = store();
        let prompt = store
            .render_single_prompt(&pool.context, pool, 12, PromptVariant::Generic)
            .unwrap();
        assert!(prompt.user_text.contains("N/A"));
    }

    fn sample_reports(n: usize) -> Vec<RankedShortlist> {
        (0..n)
            .map(|i| {
                RankedShortlist::from_ordered(
                    format!("Agent {i}"),
                    ScoreScale::OneToTen,
                    vec![(format!("vc_a{i}"), 9.0), ("vc_shared".to_string(), 8.0)],
                )
            })
            .collect()
    }

    #[test]
    fn supervisor_importance_contains_two_step_headings() {
        let store = store();
        let lists = sample_reports(3);
        let views: Vec<AgentReportView<'_>> = lists
            .iter()
            .map(|l| AgentReportView {
                name: &l.producer,
                evaluation_focus: "ties",
                overall_rationale: "rank by ties",
                shortlist: l,
                rationales: None,
            })
            .collect();
        let prompt = store
            .render_supervisor_prompt(
                SupervisorPromptMode::Importance,
                "prioritize ties",
                &views,
                None,
                12,
                PromptVariant::Business,
            )
            .unwrap();
        assert!(prompt.user_text.contains("Identify Consensus Picks"));
        assert!(prompt
            .user_text
            .contains("Fill Remaining Slots via Conflict Resolution"));
        assert!(prompt.user_text.contains("prioritize ties"));
    }

    #[test]
    fn weight_assign_contains_sum_constraint() {
        let store = store();
        let lists = sample_reports(2);
        let views: Vec<AgentReportView<'_>> = lists
            .iter()
            .map(|l| AgentReportView {
                name: &l.producer,
                evaluation_focus: "focus",
                overall_rationale: "r",
                shortlist: l,
                rationales: None,
            })
            .collect();
        let prompt = store
            .render_supervisor_prompt(
                SupervisorPromptMode::WeightAssign,
                "g",
                &views,
                None,
                12,
                PromptVariant::Generic,
            )
            .unwrap();
        assert!(prompt.user_text.contains("must equal 1.0"));
        assert_eq!(prompt.declared_shape.required, vec!["weights"]);
    }

    #[test]
    fn majority_prompt_serializes_every_list_with_producer_names() {
        let store = store();
        let lists = sample_reports(5);
        let views: Vec<AgentReportView<'_>> = lists
            .iter()
            .map(|l| AgentReportView {
                name: &l.producer,
                evaluation_focus: "f",
                overall_rationale: "r",
                shortlist: l,
                rationales: None,
            })
            .collect();
        let prompt = store
            .render_supervisor_prompt(
                SupervisorPromptMode::Majority,
                "g",
                &views,
                None,
                12,
                PromptVariant::Generic,
            )
            .unwrap();
        for i in 0..5 {
            assert!(prompt.user_text.contains(&format!("## Agent: Agent {i}")));
        }
        assert!(prompt.system_text.contains("majority vote"));
    }

    #[test]
    fn single_business_prompt_has_scale_guidance_and_hint() {
        let pool = pool36();
        let store = store();
        let prompt = store
            .render_single_prompt(&pool.context, &pool, 12, PromptVariant::Business)
            .unwrap();
        assert!(prompt.user_text.contains("Scoring Guidance (1-5 scale)"));
        assert!(prompt.user_text.contains(HINT_ANCHOR));
    }

    #[test]
    fn debate_reflect_shape_requires_stick_decision() {
        let store = store();
        let blueprint = &store.committee()[0].clone();
        let prompt = store
            .render_debate_reflect_prompt(blueprint, "{}", "ctx")
            .unwrap();
        assert!(prompt
            .declared_shape
            .required
            .contains(&"score_decisions.stick_with_previous_score".to_string()));
    }

    #[test]
    fn no_residual_placeholders_in_any_rendering() {
        let pool = pool36();
        let store = store();
        let schema = pool.feature_names();
        let lists = sample_reports(3);
        let views: Vec<AgentReportView<'_>> = lists
            .iter()
            .map(|l| AgentReportView {
                name: &l.producer,
                evaluation_focus: "f",
                overall_rationale: "r",
                shortlist: l,
                rationales: None,
            })
            .collect();
        let weights: BTreeMap<String, f64> =
            [("Agent 0".to_string(), 0.5), ("Agent 1".to_string(), 0.5)]
                .into_iter()
                .collect();
        let committee = store.committee().to_vec();
        let mut rendered: Vec<RenderedPrompt> = Vec::new();
        for variant in [PromptVariant::Generic, PromptVariant::Business] {
            rendered.push(
                store
                    .render_planner_prompt(&pool.context, &schema, &pool.candidates[..2], variant)
                    .unwrap(),
            );
            rendered.push(
                store
                    .render_single_prompt(&pool.context, &pool, 12, variant)
                    .unwrap(),
            );
            rendered.push(
                store
                    .render_debate_eval_prompt(&committee[0], &pool.context, &pool, variant)
                    .unwrap(),
            );
            for mode in [
                SupervisorPromptMode::Importance,
                SupervisorPromptMode::WeightAssign,
                SupervisorPromptMode::WeightSelect,
                SupervisorPromptMode::Majority,
            ] {
                rendered.push(
                    store
                        .render_supervisor_prompt(mode, "g", &views, Some(&weights), 12, variant)
                        .unwrap(),
                );
            }
        }
        rendered.push(
            store
                .render_specialist_prompt(&committee[0], &pool.context, &pool, 12)
                .unwrap(),
        );
        rendered.push(store.render_single_reflect_prompt(&lists).unwrap());
        rendered.push(
            store
                .render_debate_debate_prompt(
                    &committee[0],
                    &["Capability Analyst".to_string()],
                    "{}",
                    "ctx",
                )
                .unwrap(),
        );
        rendered.push(
            store
                .render_debate_reflect_prompt(&committee[0], "{}", "ctx")
                .unwrap(),
        );
        rendered.push(
            store
                .render_debate_supervisor_prompt(&pool.context, "{}", "summary", 12)
                .unwrap(),
        );

        let marker = placeholder_regex();
        for prompt in &rendered {
            assert!(
                !marker.is_match(&prompt.system_text),
                "residual placeholder in system text: {}",
                prompt.system_text
            );
            assert!(
                !marker.is_match(&prompt.user_text),
                "residual placeholder in user text: {}",
                prompt.user_text
            );
        }
    }

    #[test]
    fn from_dir_matches_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        std::fs::write(base.join("VERSION"), TEMPLATE_VERSION).unwrap();
        for (name, text) in BUILTIN_TEMPLATES.iter() {
            std::fs::write(base.join(format!("{name}.txt")), text).unwrap();
        }
        std::fs::write(base.join("personas.json"), BUILTIN_PERSONAS).unwrap();
        std::fs::write(base.join("committee.json"), BUILTIN_COMMITTEE).unwrap();
        let loaded = TemplateStore::from_dir(base).unwrap();
        assert_eq!(loaded.version(), store().version());
        let pool = pool36();
        let a = loaded
            .render_single_prompt(&pool.context, &pool, 12, PromptVariant::Business)
            .unwrap();
        let b = store()
            .render_single_prompt(&pool.context, &pool, 12, PromptVariant::Business)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_placeholder_value_is_an_error() {
        let store = store();
        let err = store.render("planner.user", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TemplateError::MissingPlaceholderValue { .. }));
    }
}
