//! Oracle fixture generation for offline runs.
//!
//! Given synthetic pools with a planted feature rule, this produces a
//! scripted-provider fixture set whose agents behave like rule-based
//! oracles: specialists rank strictly by the planted feature, and
//! supervisors return the top-k slice of that ranking. Every system
//! (partner-mas, single, debate) can then run end-to-end with no network
//! and recover the planted ground truth exactly.

use serde_json::json;

use crate::domain::{final_shortlist_size, specialist_shortlist_size, CasePool};
use crate::gateway::{Fixture, FixtureSet, RoleTag};
use crate::ingest::synthetic::rank_by_feature;
use crate::prompt::TemplateStore;

/// Blueprint names the oracle planner deploys. Three specialists give the
/// deterministic supervisor a strict majority on every consensus firm.
pub fn oracle_specialist_names() -> [&'static str; 3] {
    [
        "Tie Strength Analyst",
        "Network Reach Analyst",
        "Track Record Analyst",
    ]
}

fn planner_text(feature: &str) -> String {
    let agents: Vec<serde_json::Value> = oracle_specialist_names()
        .iter()
        .map(|name| {
            json!({
                "name": name,
                "role": "co-investment network evaluator",
                "ability": format!("quantitative screening on {feature}"),
                "profile": format!("Rank candidates by {feature} in descending order; stronger values signal stronger partners.")
            })
        })
        .collect();
    json!({
        "strategic_guidance": format!(
            "Collaboration strength dominates this deal; prioritize candidates with the highest {feature}."
        ),
        "agents": agents
    })
    .to_string()
}

fn ranked_entries(ranking: &[String], count: usize, hi: f64, lo: f64) -> Vec<serde_json::Value> {
    let count = count.min(ranking.len());
    ranking
        .iter()
        .take(count)
        .enumerate()
        .map(|(i, firm_id)| {
            let score = if count <= 1 {
                hi
            } else {
                hi - (hi - lo) * i as f64 / (count - 1) as f64
            };
            json!({
                "firm_id": firm_id,
                "rank": i + 1,
                "score": (score * 10.0).round() / 10.0,
                "rationale": format!("rank {} by the focal feature", i + 1)
            })
        })
        .collect()
}

fn specialist_text(feature: &str, ranking: &[String], k_prime: usize) -> String {
    json!({
        "evaluation_focus": feature,
        "overall_rationale": format!("Candidates ordered by {feature}, strongest first."),
        "ranked_candidates": ranked_entries(ranking, k_prime, 10.0, 6.0)
    })
    .to_string()
}

/// One response that satisfies the weight-assign, selection, and majority
/// shapes at once, so it serves every supervisor turn in any mode.
fn supervisor_text(ranking: &[String], k: usize, agent_names: &[String]) -> String {
    let weight = 1.0 / agent_names.len().max(1) as f64;
    let weights: serde_json::Map<String, serde_json::Value> = agent_names
        .iter()
        .map(|name| (name.clone(), json!((weight * 1e4).round() / 1e4)))
        .collect();
    let final_ranking: Vec<serde_json::Value> = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, firm_id)| json!({"firm_id": firm_id, "rank": i + 1}))
        .collect();
    json!({
        "rationale": "All specialists agree; consensus covers the full shortlist.",
        "weights": weights,
        "final_ranking": final_ranking
    })
    .to_string()
}

/// Serves both the k generation turns and the reflection turn.
fn single_text(ranking: &[String], k: usize) -> String {
    json!({
        "ranked_candidates": ranked_entries(ranking, k, 5.0, 2.0),
        "reasoning": "The strongest network signals are decisive.",
        "selected_run": 1
    })
    .to_string()
}

fn debate_eval_text(pool: &CasePool, ranking: &[String]) -> String {
    let m = pool.size().max(1);
    let evaluations: serde_json::Map<String, serde_json::Value> = ranking
        .iter()
        .enumerate()
        .map(|(position, firm_id)| {
            // Quintile score: the better the feature rank, the higher all
            // three axes land.
            let score = 5 - (position * 5 / m).min(4);
            (
                firm_id.clone(),
                json!({
                    "integrity_score": score,
                    "integrity_rationale": format!("track record consistent with rank {}", position + 1),
                    "capability_score": score,
                    "capability_rationale": "capacity matches deal size",
                    "fit_score": score,
                    "fit_rationale": "profile aligns with the target",
                }),
            )
        })
        .collect();
    json!({ "evaluations": evaluations }).to_string()
}

fn debate_feedback_text(peers: &[String]) -> String {
    let agree: Vec<serde_json::Value> = peers
        .iter()
        .map(|peer| json!({"agent_name": peer, "points": ["network-first ordering is sound"]}))
        .collect();
    json!({"agree": agree, "disagree": [], "questions": []}).to_string()
}

fn debate_reflect_text() -> String {
    json!({
        "reflection_summary": "Peer feedback confirms the ordering.",
        "improvement_suggestions": [],
        "score_decisions": {"reasoning": "no change needed", "stick_with_previous_score": true}
    })
    .to_string()
}

/// Builds the full oracle fixture set for `pools`, keyed per case.
pub fn oracle_fixtures(pools: &[CasePool], feature: &str, store: &TemplateStore) -> FixtureSet {
    let specialist_names: Vec<String> = oracle_specialist_names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let committee: Vec<String> = store.committee().iter().map(|b| b.name.clone()).collect();
    let mut fixtures = Vec::new();

    for pool in pools {
        let case_id = pool.case_id().to_string();
        let ranking = rank_by_feature(pool, feature);
        let k = final_shortlist_size(pool.size()).expect("m >= 3");
        let k_prime = specialist_shortlist_size(pool.size()).expect("m >= 3");

        fixtures.push(Fixture {
            case_id: case_id.clone(),
            role: RoleTag::Planner,
            agent: None,
            turn: None,
            text: planner_text(feature),
        });
        for name in &specialist_names {
            fixtures.push(Fixture {
                case_id: case_id.clone(),
                role: RoleTag::Specialist,
                agent: Some(name.clone()),
                turn: None,
                text: specialist_text(feature, &ranking, k_prime),
            });
        }
        fixtures.push(Fixture {
            case_id: case_id.clone(),
            role: RoleTag::Supervisor,
            agent: None,
            turn: None,
            text: supervisor_text(&ranking, k, &specialist_names),
        });
        fixtures.push(Fixture {
            case_id: case_id.clone(),
            role: RoleTag::Single,
            agent: None,
            turn: None,
            text: single_text(&ranking, k),
        });
        for name in &committee {
            let peers: Vec<String> = committee.iter().filter(|n| *n != name).cloned().collect();
            fixtures.push(Fixture {
                case_id: case_id.clone(),
                role: RoleTag::DebateAgent,
                agent: Some(name.clone()),
                turn: Some(0),
                text: debate_eval_text(pool, &ranking),
            });
            fixtures.push(Fixture {
                case_id: case_id.clone(),
                role: RoleTag::DebateAgent,
                agent: Some(name.clone()),
                turn: Some(1),
                text: debate_feedback_text(&peers),
            });
            fixtures.push(Fixture {
                case_id: case_id.clone(),
                role: RoleTag::DebateAgent,
                agent: Some(name.clone()),
                turn: Some(2),
                text: debate_reflect_text(),
            });
        }
        fixtures.push(Fixture {
            case_id: case_id.clone(),
            role: RoleTag::DebateSupervisor,
            agent: None,
            turn: None,
            text: supervisor_text(&ranking, k, &committee),
        });
    }
    FixtureSet::new(fixtures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{generate_synthetic, SyntheticSpec};

    #[test]
    fn fixture_generation_is_deterministic_and_complete() {
        let pools = generate_synthetic(&SyntheticSpec {
            num_cases: 3,
            seed: 4,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let store = TemplateStore::builtin();
        let a = oracle_fixtures(&pools, "pair_tie_strength", &store);
        let b = oracle_fixtures(&pools, "pair_tie_strength", &store);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        // Per case: planner + 3 specialists + supervisor + single +
        // 3 debate agents x 3 turns + debate supervisor = 16.
        assert_eq!(a.fixtures.len(), 3 * 16);
    }
}
