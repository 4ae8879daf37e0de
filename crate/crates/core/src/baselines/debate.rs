//! Debate committee baseline: three fixed evaluators score the pool
//! independently, critique each other's reasoning with all numeric scores
//! stripped, reflect (optionally revising their own evaluation), and a
//! dedicated supervisor synthesizes the final shortlist.
//!
//! The committee is a fixed asset, not planner-generated; its three
//! blueprints mirror the three score axes (integrity, capability, fit).
//! One evaluate-debate-reflect cycle is the default; `rounds` is a knob
//! for ablations.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::domain::{
    final_shortlist_size, AgentBlueprint, CasePool, RankedShortlist, ScoreScale, TaskContext,
};
use crate::gateway::{Gateway, GatewayError, RoleTag};
use crate::prompt::{PromptVariant, TemplateError, TemplateStore};
use crate::util::parallel_map;

/// One firm's three-axis scores with rationales, each on the 1-5 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmScores {
    pub integrity_score: u8,
    pub integrity_rationale: String,
    pub capability_score: u8,
    pub capability_rationale: String,
    pub fit_score: u8,
    pub fit_rationale: String,
}

impl FirmScores {
    pub fn composite(&self) -> f64 {
        f64::from(self.integrity_score + self.capability_score + self.fit_score) / 3.0
    }
}

/// One agent's evaluation of the whole pool.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DebateEvaluation {
    pub scores: BTreeMap<String, FirmScores>,
}

/// Peer-directed critique from the debate phase.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DebateFeedback {
    pub agree: Vec<PeerPoints>,
    pub disagree: Vec<PeerPoints>,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerPoints {
    pub agent_name: String,
    pub points: Vec<String>,
}

/// Reflection outcome; carries the explicit stick decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub reflection_summary: String,
    pub improvement_suggestions: Vec<String>,
    pub reasoning: String,
    pub stick_with_previous_score: bool,
    /// Present only when the agent re-issued a full evaluation.
    pub revised: Option<DebateEvaluation>,
}

/// One evaluate-debate-reflect cycle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DebateRound {
    pub feedback: BTreeMap<String, DebateFeedback>,
    pub reflections: BTreeMap<String, Reflection>,
}

/// Full record of a debate run for one case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub agents: Vec<AgentBlueprint>,
    pub initial_evaluations: BTreeMap<String, DebateEvaluation>,
    pub rounds: Vec<DebateRound>,
    pub final_evaluations: BTreeMap<String, DebateEvaluation>,
    pub synthesis: RankedShortlist,
    /// Rendered phase-2 user texts, kept for the score-hiding audit.
    pub debate_prompts: Vec<String>,
    pub raw_responses: Vec<(String, String)>,
    pub flags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DebateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("every committee agent failed the evaluation phase")]
    AllAgentsFailed,
}

/// True when the text contains a `"...score...": <digit>` shaped leak.
pub fn peer_scores_leaked(text: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"(?i)"[a-z_]*score[a-z_]*"\s*:\s*"?\s*[0-9]"#).expect("valid regex")
    });
    re.is_match(text)
}

/// Peers' evaluations with every numeric score field removed before
/// rendering; only the rationales survive.
fn strip_scores(
    evaluations: &BTreeMap<String, DebateEvaluation>,
    exclude_agent: &str,
) -> serde_json::Value {
    let stripped: BTreeMap<&String, BTreeMap<&String, serde_json::Value>> = evaluations
        .iter()
        .filter(|(name, _)| name.as_str() != exclude_agent)
        .map(|(name, eval)| {
            let firms = eval
                .scores
                .iter()
                .map(|(firm, s)| {
                    (
                        firm,
                        json!({
                            "integrity_rationale": s.integrity_rationale,
                            "capability_rationale": s.capability_rationale,
                            "fit_rationale": s.fit_rationale,
                        }),
                    )
                })
                .collect();
            (name, firms)
        })
        .collect();
    serde_json::to_value(stripped).expect("stripped evaluations serialize")
}

fn clamp_score(raw: Option<f64>) -> u8 {
    match raw {
        Some(v) if v.is_finite() => (v.round() as i64).clamp(1, 5) as u8,
        _ => 3,
    }
}

fn parse_evaluation(value: &serde_json::Value, pool: &CasePool, agent: &str) -> DebateEvaluation {
    let mut scores = BTreeMap::new();
    if let Some(object) = value.get("evaluations").and_then(|v| v.as_object()) {
        for (firm_id, fields) in object {
            if !pool.contains_firm(firm_id) {
                log::warn!("debate agent '{agent}': dropping unknown firm '{firm_id}'");
                continue;
            }
            let rationale = |key: &str| -> String {
                fields
                    .get(key)
                    .and_then(|v| v.as_str())
                    .filter(|s| !s.trim().is_empty())
                    .unwrap_or("(not provided)")
                    .to_string()
            };
            scores.insert(
                firm_id.clone(),
                FirmScores {
                    integrity_score: clamp_score(
                        fields.get("integrity_score").and_then(|v| v.as_f64()),
                    ),
                    integrity_rationale: rationale("integrity_rationale"),
                    capability_score: clamp_score(
                        fields.get("capability_score").and_then(|v| v.as_f64()),
                    ),
                    capability_rationale: rationale("capability_rationale"),
                    fit_score: clamp_score(fields.get("fit_score").and_then(|v| v.as_f64())),
                    fit_rationale: rationale("fit_rationale"),
                },
            );
        }
    }
    DebateEvaluation { scores }
}

fn parse_feedback(
    value: &serde_json::Value,
    valid_peers: &[String],
    agent: &str,
) -> DebateFeedback {
    let parse_points = |key: &str| -> Vec<PeerPoints> {
        value
            .get(key)
            .and_then(|v| v.as_array())
            .map(|items| {
                items
                    .iter()
                    .filter_map(|item| {
                        let name = item.get("agent_name")?.as_str()?.to_string();
                        if !valid_peers.contains(&name) {
                            log::warn!(
                                "debate agent '{agent}': dropping feedback aimed at invalid peer '{name}'"
                            );
                            return None;
                        }
                        let points = item
                            .get("points")
                            .and_then(|v| v.as_array())
                            .map(|ps| {
                                ps.iter()
                                    .filter_map(|p| p.as_str().map(str::to_owned))
                                    .collect()
                            })
                            .unwrap_or_default();
                        Some(PeerPoints { agent_name: name, points })
                    })
                    .collect()
            })
            .unwrap_or_default()
    };
    DebateFeedback {
        agree: parse_points("agree"),
        disagree: parse_points("disagree"),
        questions: value
            .get("questions")
            .and_then(|v| v.as_array())
            .map(|qs| {
                qs.iter()
                    .filter_map(|q| q.as_str().map(str::to_owned))
                    .collect()
            })
            .unwrap_or_default(),
    }
}

/// Feedback aimed at `target` from every other agent, serialized for the
/// reflection prompt.
fn feedback_for(target: &str, feedback: &BTreeMap<String, DebateFeedback>) -> String {
    let mut sections = Vec::new();
    for (author, fb) in feedback {
        if author == target {
            continue;
        }
        let mut lines = Vec::new();
        for entry in fb.agree.iter().filter(|e| e.agent_name == target) {
            for point in &entry.points {
                lines.push(format!("AGREES: {point}"));
            }
        }
        for entry in fb.disagree.iter().filter(|e| e.agent_name == target) {
            for point in &entry.points {
                lines.push(format!("DISAGREES: {point}"));
            }
        }
        for question in &fb.questions {
            lines.push(format!("ASKS: {question}"));
        }
        if !lines.is_empty() {
            sections.push(format!("From {author}:\n{}", lines.join("\n")));
        }
    }
    if sections.is_empty() {
        "No peer feedback was directed at you.".to_string()
    } else {
        sections.join("\n\n")
    }
}

/// Mean-composite ranking across surviving agents: the deterministic
/// synthesis fallback. Ties break by firm id; unevaluated firms sort last.
fn fallback_ranking(
    evaluations: &BTreeMap<String, DebateEvaluation>,
    pool: &CasePool,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, Option<f64>)> = pool
        .candidates
        .iter()
        .map(|c| {
            let composites: Vec<f64> = evaluations
                .values()
                .filter_map(|e| e.scores.get(&c.firm_id).map(FirmScores::composite))
                .collect();
            let mean = (!composites.is_empty())
                .then(|| composites.iter().sum::<f64>() / composites.len() as f64);
            (c.firm_id.clone(), mean)
        })
        .collect();
    scored.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => y
            .partial_cmp(&x)
            .expect("finite")
            .then_with(|| a.0.cmp(&b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    scored
        .into_iter()
        .map(|(id, mean)| (id, mean.unwrap_or(3.0)))
        .collect()
}

/// Runs the three-phase debate and supervisor synthesis for one case.
pub fn run_debate(
    gateway: &Gateway,
    store: &TemplateStore,
    pool: &CasePool,
    ctx: &TaskContext,
    variant: PromptVariant,
    rounds: usize,
) -> Result<DebateTranscript, DebateError> {
    let agents: Vec<AgentBlueprint> = store.committee().to_vec();
    let top_k = final_shortlist_size(pool.size()).expect("pool invariant m >= 3");
    let context = store.debate_context(ctx, variant);
    let mut flags: Vec<String> = Vec::new();
    let mut raw_responses: Vec<(String, String)> = Vec::new();

    // Phase 1: independent evaluations, concurrent across the committee.
    let phase1 = parallel_map(&agents, agents.len(), |_, agent| {
        let prompt = store.render_debate_eval_prompt(agent, ctx, pool, variant)?;
        let request = prompt.into_request(
            RoleTag::DebateAgent,
            &ctx.company_id,
            agent.name.clone(),
            gateway.call_defaults(),
        );
        let completion = gateway.complete_structured(&request)?;
        Ok::<_, DebateError>((
            completion.raw_text.clone(),
            parse_evaluation(&completion.value, pool, &agent.name),
        ))
    });

    let mut evaluations: BTreeMap<String, DebateEvaluation> = BTreeMap::new();
    let mut active: Vec<AgentBlueprint> = Vec::new();
    for (agent, outcome) in agents.iter().zip(phase1) {
        match outcome {
            Ok((raw, eval)) if !eval.scores.is_empty() => {
                raw_responses.push((format!("eval:{}", agent.name), raw));
                evaluations.insert(agent.name.clone(), eval);
                active.push(agent.clone());
            }
            Ok((raw, _)) => {
                log::warn!(
                    "debate agent '{}' returned no usable evaluations",
                    agent.name
                );
                raw_responses.push((format!("eval:{}", agent.name), raw));
                flags.push(format!("phase1-failed:{}", agent.name));
            }
            Err(DebateError::Gateway(GatewayError::NoProviderForRole { role })) => {
                return Err(GatewayError::NoProviderForRole { role }.into());
            }
            Err(err) => {
                log::warn!("debate agent '{}' failed phase 1: {err}", agent.name);
                flags.push(format!("phase1-failed:{}", agent.name));
            }
        }
    }
    if active.is_empty() {
        return Err(DebateError::AllAgentsFailed);
    }
    let initial_evaluations = evaluations.clone();

    let mut debate_prompts: Vec<String> = Vec::new();
    let mut round_records: Vec<DebateRound> = Vec::new();

    for _round in 0..rounds.max(1) {
        if active.len() < 2 {
            flags.push("debate-skipped-insufficient-peers".to_string());
            break;
        }

        // Phase 2: peer critique with scores hidden (barrier after phase 1).
        let inputs: Vec<(AgentBlueprint, Vec<String>, String)> = active
            .iter()
            .map(|agent| {
                let peers: Vec<String> = active
                    .iter()
                    .filter(|a| a.name != agent.name)
                    .map(|a| a.name.clone())
                    .collect();
                let stripped =
                    serde_json::to_string_pretty(&strip_scores(&evaluations, &agent.name))
                        .expect("stripped evaluations serialize");
                (agent.clone(), peers, stripped)
            })
            .collect();
        let phase2 = parallel_map(&inputs, inputs.len(), |_, (agent, peers, stripped)| {
            let prompt = store.render_debate_debate_prompt(agent, peers, stripped, &context)?;
            let user_text = prompt.user_text.clone();
            let request = prompt.into_request(
                RoleTag::DebateAgent,
                &ctx.company_id,
                agent.name.clone(),
                gateway.call_defaults(),
            );
            let completion = gateway.complete_structured(&request)?;
            Ok::<_, DebateError>((
                user_text,
                completion.raw_text.clone(),
                parse_feedback(&completion.value, peers, &agent.name),
            ))
        });

        let mut feedback: BTreeMap<String, DebateFeedback> = BTreeMap::new();
        for ((agent, _, _), outcome) in inputs.iter().zip(phase2) {
            match outcome {
                Ok((prompt_text, raw, fb)) => {
                    debate_prompts.push(prompt_text);
                    raw_responses.push((format!("debate:{}", agent.name), raw));
                    feedback.insert(agent.name.clone(), fb);
                }
                Err(err) => {
                    log::warn!("debate agent '{}' failed phase 2: {err}", agent.name);
                    flags.push(format!("phase2-failed:{}", agent.name));
                }
            }
        }

        // Phase 3: reflection (barrier after phase 2); an agent may revise
        // by re-issuing a full evaluation.
        let reflect_inputs: Vec<(AgentBlueprint, String, String)> = active
            .iter()
            .map(|agent| {
                let own = serde_json::to_string_pretty(&evaluations[&agent.name])
                    .expect("evaluation serializes");
                let fb_context = format!(
                    "{context}\n\n# Peer Feedback:\n{}",
                    feedback_for(&agent.name, &feedback)
                );
                (agent.clone(), own, fb_context)
            })
            .collect();
        let phase3 = parallel_map(
            &reflect_inputs,
            reflect_inputs.len(),
            |_, (agent, own, fb_ctx)| {
                let prompt = store.render_debate_reflect_prompt(agent, own, fb_ctx)?;
                let request = prompt.into_request(
                    RoleTag::DebateAgent,
                    &ctx.company_id,
                    agent.name.clone(),
                    gateway.call_defaults(),
                );
                let completion = gateway.complete_structured(&request)?;
                Ok::<_, DebateError>((completion.raw_text.clone(), completion.value))
            },
        );

        let mut reflections: BTreeMap<String, Reflection> = BTreeMap::new();
        for ((agent, _, _), outcome) in reflect_inputs.iter().zip(phase3) {
            match outcome {
                Ok((raw, value)) => {
                    raw_responses.push((format!("reflect:{}", agent.name), raw));
                    let stick = value["score_decisions"]["stick_with_previous_score"]
                        .as_bool()
                        .unwrap_or(true);
                    let revised = (!stick)
                        .then(|| {
                            let parsed = parse_evaluation(
                                &json!({"evaluations": value.get("revised_evaluations")}),
                                pool,
                                &agent.name,
                            );
                            (!parsed.scores.is_empty()).then_some(parsed)
                        })
                        .flatten();
                    if !stick && revised.is_none() {
                        // Revise without a payload keeps the previous scores.
                        log::warn!(
                            "debate agent '{}' chose to revise but sent no evaluation; keeping previous scores",
                            agent.name
                        );
                        flags.push(format!("revise-without-payload:{}", agent.name));
                    }
                    if let Some(revision) = &revised {
                        evaluations.insert(agent.name.clone(), revision.clone());
                    }
                    reflections.insert(
                        agent.name.clone(),
                        Reflection {
                            reflection_summary: value["reflection_summary"]
                                .as_str()
                                .unwrap_or_default()
                                .to_string(),
                            improvement_suggestions: value["improvement_suggestions"]
                                .as_array()
                                .map(|a| {
                                    a.iter()
                                        .filter_map(|v| v.as_str().map(str::to_owned))
                                        .collect()
                                })
                                .unwrap_or_default(),
                            reasoning: value["score_decisions"]["reasoning"]
                                .as_str()
                                .unwrap_or_default()
                                .to_string(),
                            stick_with_previous_score: stick,
                            revised,
                        },
                    );
                }
                Err(err) => {
                    log::warn!(
                        "debate agent '{}' failed phase 3; previous evaluation carries forward: {err}",
                        agent.name
                    );
                    flags.push(format!("phase3-failed:{}", agent.name));
                }
            }
        }
        round_records.push(DebateRound {
            feedback,
            reflections,
        });
    }

    // Supervisor synthesis over the final evaluations.
    let final_evaluations = evaluations;
    let evals_json =
        serde_json::to_string_pretty(&final_evaluations).expect("evaluations serialize");
    let debate_summary = round_records
        .last()
        .map(|round| {
            round
                .feedback
                .iter()
                .map(|(name, fb)| {
                    format!(
                        "{name}: {} agreements, {} disagreements, {} questions",
                        fb.agree.len(),
                        fb.disagree.len(),
                        fb.questions.len()
                    )
                })
                .collect::<Vec<_>>()
                .join("\n")
        })
        .unwrap_or_else(|| "No debate round was held.".to_string());

    let fallback = fallback_ranking(&final_evaluations, pool);
    let supervisor_name = store.persona("debate_supervisor")?.name.clone();
    let prompt = store.render_debate_supervisor_prompt(ctx, &evals_json, &debate_summary, top_k)?;
    let request = prompt.into_request(
        RoleTag::DebateSupervisor,
        &ctx.company_id,
        supervisor_name,
        gateway.call_defaults(),
    );

    let composite_of = |firm_id: &str| -> f64 {
        fallback
            .iter()
            .find(|(id, _)| id == firm_id)
            .map(|(_, score)| *score)
            .unwrap_or(3.0)
    };

    let synthesis = match gateway.complete_structured(&request) {
        Ok(completion) => {
            raw_responses.push(("synthesis".to_string(), completion.raw_text.clone()));
            let mut cleaned: Vec<String> = Vec::new();
            for firm_id in crate::agents::supervisor::parse_final_ranking(&completion.value) {
                if pool.contains_firm(&firm_id) && !cleaned.contains(&firm_id) {
                    cleaned.push(firm_id);
                } else {
                    flags.push("synthesis-invalid-entry-dropped".to_string());
                }
            }
            if cleaned.len() > top_k {
                cleaned.truncate(top_k);
                flags.push("synthesis-overlong-truncated".to_string());
            }
            if cleaned.len() < top_k {
                for (firm_id, _) in &fallback {
                    if cleaned.len() >= top_k {
                        break;
                    }
                    if !cleaned.contains(firm_id) {
                        cleaned.push(firm_id.clone());
                    }
                }
                flags.push("synthesis-padded".to_string());
            }
            RankedShortlist::from_ordered(
                "debate-supervisor",
                ScoreScale::OneToFive,
                cleaned
                    .into_iter()
                    .map(|id| {
                        let score = composite_of(&id);
                        (id, score)
                    })
                    .collect::<Vec<_>>(),
            )
        }
        Err(err @ (GatewayError::ParseFailure { .. } | GatewayError::EmptyCompletion { .. })) => {
            log::warn!(
                "debate supervisor failed for case {}; mean-score fallback: {err}",
                ctx.company_id
            );
            flags.push("synthesis-fallback".to_string());
            RankedShortlist::from_ordered(
                "debate-supervisor",
                ScoreScale::OneToFive,
                fallback.iter().take(top_k).cloned().collect::<Vec<_>>(),
            )
        }
        Err(err) => return Err(err.into()),
    };

    Ok(DebateTranscript {
        agents,
        initial_evaluations,
        rounds: round_records,
        final_evaluations,
        synthesis,
        debate_prompts,
        raw_responses,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Fixture, FixtureSet, ScriptedProvider};
    use crate::ingest::synthetic::{generate_synthetic, SyntheticSpec};
    use std::sync::Arc;

    fn pool36() -> CasePool {
        generate_synthetic(&SyntheticSpec {
            num_cases: 1,
            candidates_per_case: (36, 36),
            seed: 17,
            ..SyntheticSpec::default()
        })
        .unwrap()
        .remove(0)
    }

    fn eval_text(pool: &CasePool, seed: usize) -> String {
        let evaluations: serde_json::Map<String, serde_json::Value> = pool
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let base = 1 + (i * (seed + 2) + seed) % 5;
                (
                    c.firm_id.clone(),
                    json!({
                        "integrity_score": base,
                        "integrity_rationale": format!("integrity view of {}", c.firm_id),
                        "capability_score": 1 + (i + seed) % 5,
                        "capability_rationale": format!("capability view of {}", c.firm_id),
                        "fit_score": 1 + (i * 2 + seed) % 5,
                        "fit_rationale": format!("fit view of {}", c.firm_id),
                    }),
                )
            })
            .collect();
        json!({ "evaluations": evaluations }).to_string()
    }

    fn feedback_text(peers: &[&str]) -> String {
        json!({
            "agree": [{"agent_name": peers[0], "points": ["solid reasoning on ties"]}],
            "disagree": [{"agent_name": peers[1], "points": ["overweights geography"]}],
            "questions": [format!("{}: why discount stage fit?", peers[0])]
        })
        .to_string()
    }

    fn stick_text() -> String {
        json!({
            "reflection_summary": "my reasoning holds",
            "improvement_suggestions": ["quantify tie strength"],
            "score_decisions": {"reasoning": "peer feedback aligned", "stick_with_previous_score": true}
        })
        .to_string()
    }

    fn synthesis_text(pool: &CasePool, k: usize) -> String {
        let ranking: Vec<_> = pool.candidates[..k]
            .iter()
            .enumerate()
            .map(|(i, c)| json!({"firm_id": c.firm_id, "rank": i + 1}))
            .collect();
        json!({"rationale": "committee consensus", "final_ranking": ranking}).to_string()
    }

    fn committee_fixtures(pool: &CasePool, supervisor_text: &str) -> Vec<Fixture> {
        let store = TemplateStore::builtin();
        let names: Vec<String> = store.committee().iter().map(|b| b.name.clone()).collect();
        let mut fixtures = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let peers: Vec<&str> = names
                .iter()
                .filter(|n| *n != name)
                .map(String::as_str)
                .collect();
            fixtures.push(Fixture {
                case_id: "*".into(),
                role: RoleTag::DebateAgent,
                agent: Some(name.clone()),
                turn: Some(0),
                text: eval_text(pool, i),
            });
            fixtures.push(Fixture {
                case_id: "*".into(),
                role: RoleTag::DebateAgent,
                agent: Some(name.clone()),
                turn: Some(1),
                text: feedback_text(&peers),
            });
            fixtures.push(Fixture {
                case_id: "*".into(),
                role: RoleTag::DebateAgent,
                agent: Some(name.clone()),
                turn: Some(2),
                text: stick_text(),
            });
        }
        fixtures.push(Fixture {
            case_id: "*".into(),
            role: RoleTag::DebateSupervisor,
            agent: None,
            turn: None,
            text: supervisor_text.to_string(),
        });
        fixtures
    }

    fn gateway(fixtures: Vec<Fixture>) -> Gateway {
        Gateway::builder()
            .bind_all(Arc::new(ScriptedProvider::new(FixtureSet::new(fixtures))))
            .build()
    }

    #[test]
    fn full_debate_issues_ten_calls_and_sticks_keep_evaluations() {
        let pool = pool36();
        let gw = gateway(committee_fixtures(&pool, &synthesis_text(&pool, 12)));
        let transcript = run_debate(
            &gw,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            PromptVariant::Generic,
            1,
        )
        .unwrap();
        assert_eq!(transcript.agents.len(), 3);
        assert_eq!(transcript.synthesis.len(), 12);
        // All agents stuck: supervisor sees phase-1 evaluations unchanged.
        assert_eq!(transcript.initial_evaluations, transcript.final_evaluations);
        // 3 evals + 3 debates + 3 reflections + 1 synthesis.
        assert_eq!(gw.ledger().case_call_count(pool.case_id()), 10);
        assert!(transcript.flags.is_empty());
    }

    #[test]
    fn phase_two_payload_has_rationales_but_zero_scores() {
        let pool = pool36();
        let gw = gateway(committee_fixtures(&pool, &synthesis_text(&pool, 12)));
        let transcript = run_debate(
            &gw,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            PromptVariant::Business,
            1,
        )
        .unwrap();
        assert_eq!(transcript.debate_prompts.len(), 3);
        for prompt in &transcript.debate_prompts {
            assert!(
                prompt.contains("rationale"),
                "rationales must survive stripping"
            );
            assert!(
                !peer_scores_leaked(prompt),
                "peer score leaked into phase-2 prompt:\n{prompt}"
            );
        }
        // Each agent's payload excludes itself.
        let names: Vec<String> = transcript.agents.iter().map(|a| a.name.clone()).collect();
        for (i, prompt) in transcript.debate_prompts.iter().enumerate() {
            let stripped_section = prompt
                .split("All Agents' Evaluations (scores hidden):")
                .nth(1)
                .unwrap();
            let own = format!("\"{}\"", names[i]);
            assert!(
                !stripped_section
                    .split("Context:")
                    .next()
                    .unwrap()
                    .contains(&own),
                "agent {} saw its own evaluation",
                names[i]
            );
        }
    }

    #[test]
    fn fallback_synthesis_ranks_by_mean_composite() {
        let pool = pool36();
        // Supervisor returns garbage twice; fallback must kick in.
        let mut fixtures = committee_fixtures(&pool, "not json, sorry");
        fixtures.retain(|f| f.role != RoleTag::DebateSupervisor);
        fixtures.push(Fixture {
            case_id: "*".into(),
            role: RoleTag::DebateSupervisor,
            agent: None,
            turn: None,
            text: "not json, sorry".into(),
        });
        let gw = gateway(fixtures);
        let transcript = run_debate(
            &gw,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            PromptVariant::Generic,
            1,
        )
        .unwrap();
        assert!(transcript.flags.contains(&"synthesis-fallback".to_string()));
        assert_eq!(transcript.synthesis.len(), 12);

        // Brute-force the expected ranking from the transcript's final
        // evaluations: mean composite desc, firm id asc.
        let mut expected: Vec<(String, f64)> = pool
            .candidates
            .iter()
            .map(|c| {
                let comps: Vec<f64> = transcript
                    .final_evaluations
                    .values()
                    .filter_map(|e| e.scores.get(&c.firm_id).map(FirmScores::composite))
                    .collect();
                (
                    c.firm_id.clone(),
                    comps.iter().sum::<f64>() / comps.len() as f64,
                )
            })
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let expected_ids: Vec<String> = expected.into_iter().take(12).map(|(id, _)| id).collect();
        let got: Vec<String> = transcript.synthesis.firm_ids().map(str::to_owned).collect();
        assert_eq!(got, expected_ids);
    }

    #[test]
    fn failing_agent_is_flagged_and_case_proceeds() {
        let pool = pool36();
        let store = TemplateStore::builtin();
        let broken = store.committee()[1].name.clone();
        let mut fixtures = committee_fixtures(&pool, &synthesis_text(&pool, 12));
        for fixture in &mut fixtures {
            if fixture.agent.as_deref() == Some(broken.as_str()) && fixture.turn == Some(0) {
                fixture.text = "I cannot evaluate these firms.".to_string();
            }
        }
        let gw = gateway(fixtures);
        let transcript =
            run_debate(&gw, &store, &pool, &pool.context, PromptVariant::Generic, 1).unwrap();
        assert!(transcript
            .flags
            .iter()
            .any(|f| f == &format!("phase1-failed:{broken}")));
        assert_eq!(transcript.final_evaluations.len(), 2);
        assert_eq!(transcript.synthesis.len(), 12);
    }

    #[test]
    fn revise_with_payload_updates_final_evaluations() {
        let pool = pool36();
        let store = TemplateStore::builtin();
        let reviser = store.committee()[0].name.clone();
        let revised_eval: serde_json::Value =
            serde_json::from_str::<serde_json::Value>(&eval_text(&pool, 7)).unwrap()["evaluations"]
                .clone();
        let revise_text = json!({
            "reflection_summary": "peers changed my mind",
            "improvement_suggestions": [],
            "score_decisions": {"reasoning": "updated", "stick_with_previous_score": false},
            "revised_evaluations": revised_eval
        })
        .to_string();
        let mut fixtures = committee_fixtures(&pool, &synthesis_text(&pool, 12));
        for fixture in &mut fixtures {
            if fixture.agent.as_deref() == Some(reviser.as_str()) && fixture.turn == Some(2) {
                fixture.text = revise_text.clone();
            }
        }
        let gw = gateway(fixtures);
        let transcript =
            run_debate(&gw, &store, &pool, &pool.context, PromptVariant::Generic, 1).unwrap();
        assert_ne!(
            transcript.initial_evaluations[&reviser],
            transcript.final_evaluations[&reviser]
        );
        let reflection = &transcript.rounds[0].reflections[&reviser];
        assert!(!reflection.stick_with_previous_score);
        assert!(reflection.revised.is_some());
    }

    #[test]
    fn revise_without_payload_is_treated_as_stick() {
        let pool = pool36();
        let store = TemplateStore::builtin();
        let reviser = store.committee()[2].name.clone();
        let revise_text = json!({
            "reflection_summary": "hmm",
            "improvement_suggestions": [],
            "score_decisions": {"reasoning": "changed my mind", "stick_with_previous_score": false}
        })
        .to_string();
        let mut fixtures = committee_fixtures(&pool, &synthesis_text(&pool, 12));
        for fixture in &mut fixtures {
            if fixture.agent.as_deref() == Some(reviser.as_str()) && fixture.turn == Some(2) {
                fixture.text = revise_text.clone();
            }
        }
        let gw = gateway(fixtures);
        let transcript =
            run_debate(&gw, &store, &pool, &pool.context, PromptVariant::Generic, 1).unwrap();
        assert_eq!(
            transcript.initial_evaluations[&reviser],
            transcript.final_evaluations[&reviser]
        );
        assert!(transcript
            .flags
            .contains(&format!("revise-without-payload:{reviser}")));
    }

    #[test]
    fn runs_are_deterministic_under_the_scripted_provider() {
        let pool = pool36();
        let store = TemplateStore::builtin();
        let run = || {
            let gw = gateway(committee_fixtures(&pool, &synthesis_text(&pool, 12)));
            let t = run_debate(
                &gw,
                &store,
                &pool,
                &pool.context,
                PromptVariant::Business,
                1,
            )
            .unwrap();
            serde_json::to_string(&t).unwrap()
        };
        assert_eq!(run(), run());
    }
}
