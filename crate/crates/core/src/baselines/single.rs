//! Single-agent baseline: one LLM reviews the whole pool and produces the
//! final shortlist directly (1-5 scale). With `runs_k > 1` the agent
//! generates k independent shortlists from the identical prompt and a
//! self-reflection call selects the one it deems most reliable — selection
//! only, never a newly synthesized list, so the choice stays auditable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::specialist::{normalize_entries, parse_entry, RawEntry};
use crate::domain::{final_shortlist_size, CasePool, RankedShortlist, ScoreScale, TaskContext};
use crate::gateway::{Gateway, GatewayError, RoleTag};
use crate::prompt::{PromptVariant, TemplateError, TemplateStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleAgentConfig {
    pub runs_k: usize,
    pub variant: PromptVariant,
}

impl Default for SingleAgentConfig {
    fn default() -> Self {
        Self {
            runs_k: 1,
            variant: PromptVariant::Generic,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleRunOutcome {
    /// The selected shortlist (one of `generations`).
    pub shortlist: RankedShortlist,
    pub generations: Vec<RankedShortlist>,
    /// 0-based index into `generations`.
    pub selected_index: usize,
    pub raw_responses: Vec<String>,
    pub reflection_raw: Option<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SingleAgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("run {run}: shortlist empty after normalization")]
    EmptyShortlist { run: usize },
    #[error("runs_k must be >= 1")]
    BadConfig,
}

/// Issues `runs_k` independent generations (identical prompt, independent
/// calls) and, when `runs_k > 1`, one reflection call that picks among them
/// by index. An out-of-range selection falls back to the first list,
/// flagged.
pub fn run_single(
    gateway: &Gateway,
    store: &TemplateStore,
    pool: &CasePool,
    ctx: &TaskContext,
    cfg: &SingleAgentConfig,
) -> Result<SingleRunOutcome, SingleAgentError> {
    if cfg.runs_k < 1 {
        return Err(SingleAgentError::BadConfig);
    }
    let top_k = final_shortlist_size(pool.size()).expect("pool invariant m >= 3");
    let persona_name = store.persona("single")?.name.clone();
    let mut flags: Vec<String> = Vec::new();
    let mut generations: Vec<RankedShortlist> = Vec::new();
    let mut raw_responses: Vec<String> = Vec::new();

    for run in 0..cfg.runs_k {
        let prompt = store.render_single_prompt(ctx, pool, top_k, cfg.variant)?;
        let request = prompt.into_request(
            RoleTag::Single,
            &ctx.company_id,
            persona_name.clone(),
            gateway.call_defaults(),
        );
        let completion = gateway.complete_structured(&request)?;
        let items = completion.value["ranked_candidates"]
            .as_array()
            .cloned()
            .unwrap_or_default();
        let raw_entries: Vec<RawEntry> = items.iter().filter_map(parse_entry).collect();
        let (entries, _, run_flags) = normalize_entries(
            &persona_name,
            raw_entries,
            pool,
            top_k,
            ScoreScale::OneToFive,
        );
        if entries.is_empty() {
            return Err(SingleAgentError::EmptyShortlist { run });
        }
        if run_flags.normalized {
            flags.push(format!("run-{run}-normalized"));
        }
        generations.push(
            RankedShortlist::new(persona_name.clone(), ScoreScale::OneToFive, entries)
                .expect("normalization yields valid list"),
        );
        raw_responses.push(completion.raw_text);
    }

    if cfg.runs_k == 1 {
        return Ok(SingleRunOutcome {
            shortlist: generations[0].clone(),
            generations,
            selected_index: 0,
            raw_responses,
            reflection_raw: None,
            flags,
        });
    }

    let prompt = store.render_single_reflect_prompt(&generations)?;
    let request = prompt.into_request(
        RoleTag::Single,
        &ctx.company_id,
        persona_name,
        gateway.call_defaults(),
    );
    let completion = gateway.complete_structured(&request)?;
    let selected = completion.value["selected_run"].as_i64().unwrap_or(0);
    let selected_index = if (1..=cfg.runs_k as i64).contains(&selected) {
        (selected - 1) as usize
    } else {
        log::warn!(
            "case {}: reflection selected run {selected} of {}; falling back to the first list",
            ctx.company_id,
            cfg.runs_k
        );
        flags.push("reflection-selection-invalid".to_string());
        0
    };

    Ok(SingleRunOutcome {
        shortlist: generations[selected_index].clone(),
        generations,
        selected_index,
        raw_responses,
        reflection_raw: Some(completion.raw_text),
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Fixture, FixtureSet, ScriptedProvider};
    use crate::ingest::synthetic::{generate_synthetic, SyntheticSpec};
    use serde_json::json;
    use std::sync::Arc;

    fn pool() -> CasePool {
        generate_synthetic(&SyntheticSpec {
            num_cases: 1,
            candidates_per_case: (12, 12),
            seed: 9,
            ..SyntheticSpec::default()
        })
        .unwrap()
        .remove(0)
    }

    fn generation_text(pool: &CasePool, offset: usize) -> String {
        let entries: Vec<_> = pool.candidates[offset..offset + 4]
            .iter()
            .enumerate()
            .map(|(i, c)| {
                json!({"firm_id": c.firm_id, "rank": i + 1, "score": 5 - i.min(4), "rationale": "fits"})
            })
            .collect();
        json!({"ranked_candidates": entries}).to_string()
    }

    fn gateway_with_turns(texts: Vec<String>) -> Gateway {
        let fixtures = texts
            .into_iter()
            .enumerate()
            .map(|(turn, text)| Fixture {
                case_id: "*".into(),
                role: RoleTag::Single,
                agent: None,
                turn: Some(turn as u64),
                text,
            })
            .collect();
        Gateway::builder()
            .bind_all(Arc::new(ScriptedProvider::new(FixtureSet::new(fixtures))))
            .build()
    }

    #[test]
    fn default_single_run_issues_one_call() {
        let pool = pool();
        let gateway = gateway_with_turns(vec![generation_text(&pool, 0)]);
        let out = run_single(
            &gateway,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            &SingleAgentConfig::default(),
        )
        .unwrap();
        assert_eq!(out.generations.len(), 1);
        assert_eq!(out.selected_index, 0);
        assert_eq!(out.shortlist.len(), 4); // floor(12/3)
        assert_eq!(out.shortlist.scale, ScoreScale::OneToFive);
        assert!(out.reflection_raw.is_none());
        assert_eq!(gateway.ledger().case_call_count(pool.case_id()), 1);
    }

    #[test]
    fn four_runs_add_one_reflection_call_and_select_within() {
        let pool = pool();
        let mut texts: Vec<String> = (0..4).map(|i| generation_text(&pool, i)).collect();
        texts.push(json!({"reasoning": "third looked best", "selected_run": 3}).to_string());
        let gateway = gateway_with_turns(texts);
        let out = run_single(
            &gateway,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            &SingleAgentConfig {
                runs_k: 4,
                variant: PromptVariant::Business,
            },
        )
        .unwrap();
        assert_eq!(out.generations.len(), 4);
        assert_eq!(out.selected_index, 2);
        assert_eq!(out.shortlist, out.generations[2]);
        // Budget: exactly runs_k + 1 completion calls.
        assert_eq!(gateway.ledger().case_call_count(pool.case_id()), 5);
    }

    #[test]
    fn selection_by_index_returns_that_list_verbatim() {
        let pool = pool();
        let mut texts: Vec<String> = (0..3).map(|i| generation_text(&pool, i)).collect();
        texts.push(json!({"reasoning": "second", "selected_run": 2}).to_string());
        let gateway = gateway_with_turns(texts);
        let out = run_single(
            &gateway,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            &SingleAgentConfig {
                runs_k: 3,
                variant: PromptVariant::Generic,
            },
        )
        .unwrap();
        assert_eq!(out.selected_index, 1);
        assert_eq!(out.shortlist, out.generations[1]);
    }

    #[test]
    fn out_of_range_selection_falls_back_to_first() {
        let pool = pool();
        let mut texts: Vec<String> = (0..2).map(|i| generation_text(&pool, i)).collect();
        texts.push(json!({"reasoning": "??", "selected_run": 7}).to_string());
        let gateway = gateway_with_turns(texts);
        let out = run_single(
            &gateway,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            &SingleAgentConfig {
                runs_k: 2,
                variant: PromptVariant::Generic,
            },
        )
        .unwrap();
        assert_eq!(out.selected_index, 0);
        assert!(out
            .flags
            .contains(&"reflection-selection-invalid".to_string()));
    }

    #[test]
    fn scores_clamp_to_the_five_point_scale() {
        let pool = pool();
        let entries: Vec<_> = pool.candidates[..4]
            .iter()
            .enumerate()
            .map(|(i, c)| json!({"firm_id": c.firm_id, "rank": i + 1, "score": 9.0}))
            .collect();
        let text = json!({"ranked_candidates": entries}).to_string();
        let gateway = gateway_with_turns(vec![text]);
        let out = run_single(
            &gateway,
            &TemplateStore::builtin(),
            &pool,
            &pool.context,
            &SingleAgentConfig::default(),
        )
        .unwrap();
        assert!(out.shortlist.entries.iter().all(|e| e.score == 5.0));
    }
}
