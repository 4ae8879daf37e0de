//! Supervisor agent: fuses specialist shortlists into the final top-k list.
//!
//! Two stages mirror a committee decision. Consensus selection takes firms
//! with strict-majority support, counted over list membership. Conflict
//! resolution fills the remaining slots by weighted reciprocal rank: each
//! agent contributes `w_i / rank_i(firm)` for firms on its list and 0 for
//! firms it omitted (omission is weaker evidence than any explicit rank,
//! and 0 keeps the score monotone in rank improvements).
//!
//! The deterministic aggregator is always computed — in the LLM-mediated
//! modes it rides along as the audit trace.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CasePool, RankedShortlist, ScoreScale};
use crate::gateway::{Gateway, GatewayError, RoleTag};
use crate::prompt::{
    AgentReportView, PromptVariant, SupervisorPromptMode, TemplateError, TemplateStore,
};

use super::specialist::SpecialistReport;

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSource {
    LlmAssigned,
    Uniform,
    Configured,
}

/// Per-agent importance weights, normalized to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub weights: BTreeMap<String, f64>,
    pub source: WeightSource,
}

impl ImportanceWeights {
    pub fn uniform(agent_names: impl IntoIterator<Item = String>) -> Self {
        let names: Vec<String> = agent_names.into_iter().collect();
        let w = 1.0 / names.len().max(1) as f64;
        Self {
            weights: names.into_iter().map(|n| (n, w)).collect(),
            source: WeightSource::Uniform,
        }
    }

    /// Restricts raw (possibly missummed) weights to the given agent set,
    /// zero-fills absent agents, clamps negatives to 0, and renormalizes.
    /// Returns whether any adjustment was needed. A zero total falls back
    /// to uniform.
    pub fn from_raw(
        raw: &BTreeMap<String, f64>,
        agent_names: &[String],
        source: WeightSource,
    ) -> (Self, bool) {
        let mut adjusted = raw.keys().any(|k| !agent_names.iter().any(|n| n == k));
        let mut weights: BTreeMap<String, f64> = BTreeMap::new();
        for name in agent_names {
            let value = raw.get(name).copied().unwrap_or_else(|| {
                adjusted = true;
                0.0
            });
            let value = if value.is_finite() && value >= 0.0 {
                value
            } else {
                adjusted = true;
                0.0
            };
            weights.insert(name.clone(), value);
        }
        let total: f64 = weights.values().sum();
        if total <= 0.0 {
            return (Self::uniform(agent_names.to_vec()), true);
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            adjusted = true;
        }
        for value in weights.values_mut() {
            *value /= total;
        }
        (Self { weights, source }, adjusted)
    }

    pub fn get(&self, agent_name: &str) -> f64 {
        self.weights.get(agent_name).copied().unwrap_or(0.0)
    }
}

/// Support count F1: how many lists include the firm.
pub fn support_count(lists: &[&RankedShortlist], firm_id: &str) -> usize {
    lists
        .iter()
        .filter(|list| list.rank_of(firm_id).is_some())
        .count()
}

/// Weighted reciprocal-rank score F2: sum of `w_i / rank_i` over lists that
/// contain the firm; omitting lists contribute 0.
///
/// Contributions are summed in producer-name order so the value is
/// bit-identical under any reordering of the list collection.
pub fn f2_score(lists: &[&RankedShortlist], weights: &ImportanceWeights, firm_id: &str) -> f64 {
    canonical_order(lists)
        .into_iter()
        .filter_map(|list| {
            list.rank_of(firm_id)
                .map(|rank| weights.get(&list.producer) / rank as f64)
        })
        .sum()
}

fn canonical_order<'a>(lists: &[&'a RankedShortlist]) -> Vec<&'a RankedShortlist> {
    let mut sorted: Vec<&RankedShortlist> = lists.to_vec();
    sorted.sort_by(|a, b| a.producer.cmp(&b.producer));
    sorted
}

/// Everything the supervisor computed for one case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregationTrace {
    pub mode: String,
    pub weights: ImportanceWeights,
    pub support_counts: BTreeMap<String, usize>,
    pub f2_scores: BTreeMap<String, f64>,
    pub consensus_picks: Vec<String>,
    pub conflict_picks: Vec<String>,
    pub final_list: RankedShortlist,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmSupervisorMode {
    Importance,
    Weight,
    Majority,
}

impl LlmSupervisorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LlmSupervisorMode::Importance => "importance",
            LlmSupervisorMode::Weight => "weight",
            LlmSupervisorMode::Majority => "majority",
        }
    }
}

#[derive(Debug, Error)]
pub enum SupervisorError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no specialist shortlists to aggregate")]
    NoLists,
}

#[derive(Debug, Clone, Default)]
struct FirmStats {
    support: usize,
    f2: f64,
    mean_score: f64,
}

fn collect_stats(
    lists: &[&RankedShortlist],
    weights: &ImportanceWeights,
) -> BTreeMap<String, FirmStats> {
    let mut stats: BTreeMap<String, FirmStats> = BTreeMap::new();
    for list in canonical_order(lists) {
        for entry in &list.entries {
            let s = stats.entry(entry.firm_id.clone()).or_default();
            s.support += 1;
            s.f2 += weights.get(&list.producer) / entry.rank as f64;
            s.mean_score += entry.score;
        }
    }
    for s in stats.values_mut() {
        s.mean_score /= s.support.max(1) as f64;
    }
    stats
}

/// Consensus ordering: support desc, mean alignment score desc, firm id asc.
fn consensus_order(a: &(String, FirmStats), b: &(String, FirmStats)) -> Ordering {
    b.1.support
        .cmp(&a.1.support)
        .then_with(|| {
            b.1.mean_score
                .partial_cmp(&a.1.mean_score)
                .expect("finite scores")
        })
        .then_with(|| a.0.cmp(&b.0))
}

/// Conflict ordering: F2 desc, then the consensus chain.
fn conflict_order(a: &(String, FirmStats), b: &(String, FirmStats)) -> Ordering {
    b.1.f2
        .partial_cmp(&a.1.f2)
        .expect("finite f2")
        .then_with(|| consensus_order(a, b))
}

/// Deterministic consensus-then-conflict aggregation into the final top-k.
///
/// Firms with strict-majority support (> N/2 lists) fill consensus slots
/// first; remaining slots go to the highest weighted reciprocal-rank
/// scores. The tie-break chain is total, so output is deterministic and
/// invariant under list reordering.
pub fn aggregate_deterministic(
    lists: &[&RankedShortlist],
    weights: &ImportanceWeights,
    k: usize,
) -> Result<AggregationTrace, SupervisorError> {
    if lists.is_empty() || lists.iter().all(|l| l.is_empty()) {
        return Err(SupervisorError::NoLists);
    }
    let n = lists.len();
    let stats = collect_stats(lists, weights);
    let mut flags = Vec::new();

    let mut majority: Vec<(String, FirmStats)> = stats
        .iter()
        .filter(|(_, s)| s.support * 2 > n)
        .map(|(id, s)| (id.clone(), s.clone()))
        .collect();
    majority.sort_by(consensus_order);
    if majority.len() > k {
        majority.truncate(k);
    }
    let consensus_picks: Vec<String> = majority.into_iter().map(|(id, _)| id).collect();

    let mut rest: Vec<(String, FirmStats)> = stats
        .iter()
        .filter(|(id, _)| !consensus_picks.contains(id))
        .map(|(id, s)| (id.clone(), s.clone()))
        .collect();
    rest.sort_by(conflict_order);
    let remaining = k.saturating_sub(consensus_picks.len());
    let conflict_picks: Vec<String> = rest.into_iter().take(remaining).map(|(id, _)| id).collect();

    if consensus_picks.len() + conflict_picks.len() < k {
        flags.push("undersubscribed".to_string());
    }

    let ordered: Vec<(String, f64)> = consensus_picks
        .iter()
        .chain(conflict_picks.iter())
        .map(|id| (id.clone(), stats[id].f2))
        .collect();
    let final_list = RankedShortlist::from_ordered("supervisor", ScoreScale::Unbounded, ordered);

    Ok(AggregationTrace {
        mode: "deterministic".to_string(),
        weights: weights.clone(),
        support_counts: stats
            .iter()
            .map(|(id, s)| (id.clone(), s.support))
            .collect(),
        f2_scores: stats.iter().map(|(id, s)| (id.clone(), s.f2)).collect(),
        consensus_picks,
        conflict_picks,
        final_list,
        flags,
    })
}

/// Raw model responses captured during LLM-mediated aggregation, for the
/// run log.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SupervisorTranscript {
    pub weight_response: Option<String>,
    pub selection_response: Option<String>,
}

/// LLM-mediated aggregation in one of the three prompt modes. The
/// deterministic trace fields are computed alongside for audit regardless
/// of mode. Parse failures after repair fall back to the deterministic
/// aggregate with uniform weights, flagged `fallback`.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_llm(
    gateway: &Gateway,
    store: &TemplateStore,
    mode: LlmSupervisorMode,
    guidance: &str,
    reports: &[SpecialistReport],
    pool: &CasePool,
    k: usize,
    variant: PromptVariant,
) -> Result<(AggregationTrace, SupervisorTranscript), SupervisorError> {
    if reports.is_empty() {
        return Err(SupervisorError::NoLists);
    }
    let case_id = pool.case_id();
    let persona_name = store.persona("supervisor")?.name.clone();
    let agent_names: Vec<String> = reports.iter().map(|r| r.blueprint.name.clone()).collect();
    let lists: Vec<&RankedShortlist> = reports.iter().map(|r| &r.shortlist).collect();
    let views: Vec<AgentReportView<'_>> = reports
        .iter()
        .map(|r| AgentReportView {
            name: &r.blueprint.name,
            evaluation_focus: &r.evaluation_focus,
            overall_rationale: &r.overall_rationale,
            shortlist: &r.shortlist,
            rationales: Some(&r.per_entry_rationales),
        })
        .collect();

    let mut transcript = SupervisorTranscript::default();
    let mut flags: Vec<String> = Vec::new();

    // Weight mode first assigns importance weights in a dedicated call.
    let weights = match mode {
        LlmSupervisorMode::Weight => {
            let prompt = store.render_supervisor_prompt(
                SupervisorPromptMode::WeightAssign,
                guidance,
                &views,
                None,
                k,
                variant,
            )?;
            let request = prompt.into_request(
                RoleTag::Supervisor,
                case_id,
                persona_name.clone(),
                gateway.call_defaults(),
            );
            match gateway.complete_structured(&request) {
                Ok(completion) => {
                    transcript.weight_response = Some(completion.raw_text.clone());
                    let raw: BTreeMap<String, f64> = completion.value["weights"]
                        .as_object()
                        .map(|obj| {
                            obj.iter()
                                .filter_map(|(name, v)| v.as_f64().map(|w| (name.clone(), w)))
                                .collect()
                        })
                        .unwrap_or_default();
                    let (weights, adjusted) =
                        ImportanceWeights::from_raw(&raw, &agent_names, WeightSource::LlmAssigned);
                    if adjusted {
                        log::warn!("case {case_id}: supervisor weights renormalized");
                        flags.push("weights-renormalized".to_string());
                    }
                    weights
                }
                Err(err) if is_recoverable(&err) => {
                    log::warn!("case {case_id}: weight assignment failed ({err}); using uniform");
                    flags.push("weight-assign-fallback".to_string());
                    ImportanceWeights::uniform(agent_names.clone())
                }
                Err(err) => return Err(err.into()),
            }
        }
        _ => ImportanceWeights::uniform(agent_names.clone()),
    };

    let prompt_mode = match mode {
        LlmSupervisorMode::Importance => SupervisorPromptMode::Importance,
        LlmSupervisorMode::Weight => SupervisorPromptMode::WeightSelect,
        LlmSupervisorMode::Majority => SupervisorPromptMode::Majority,
    };
    let prompt = store.render_supervisor_prompt(
        prompt_mode,
        guidance,
        &views,
        Some(&weights.weights),
        k,
        variant,
    )?;
    let request = prompt.into_request(
        RoleTag::Supervisor,
        case_id,
        persona_name,
        gateway.call_defaults(),
    );

    // Audit fields come from the deterministic pass under the same weights.
    let audit = aggregate_deterministic(&lists, &weights, k)?;

    let model_ranking = match gateway.complete_structured(&request) {
        Ok(completion) => {
            transcript.selection_response = Some(completion.raw_text.clone());
            parse_final_ranking(&completion.value)
        }
        Err(err) if is_recoverable(&err) => {
            log::warn!(
                "case {case_id}: supervisor selection failed ({err}); deterministic fallback"
            );
            let mut trace = audit;
            trace.mode = mode.as_str().to_string();
            trace.flags.extend(flags);
            trace.flags.push("fallback".to_string());
            return Ok((trace, transcript));
        }
        Err(err) => return Err(err.into()),
    };

    // Validate the model's list against the pool and the target length.
    let mut cleaned: Vec<String> = Vec::new();
    for firm_id in model_ranking {
        if !pool.contains_firm(&firm_id) {
            log::warn!("case {case_id}: supervisor named unknown firm '{firm_id}'");
            flags.push("unknown-firm-dropped".to_string());
            continue;
        }
        if cleaned.contains(&firm_id) {
            flags.push("duplicate-firm-dropped".to_string());
            continue;
        }
        cleaned.push(firm_id);
    }
    if cleaned.len() > k {
        log::warn!(
            "case {case_id}: supervisor returned {} names for k={k}; truncating",
            cleaned.len()
        );
        cleaned.truncate(k);
        flags.push("overlong-truncated".to_string());
    }
    if cleaned.len() < k {
        // Top up from the deterministic ordering so the case still yields a
        // full shortlist.
        for firm_id in audit.final_list.firm_ids() {
            if cleaned.len() >= k {
                break;
            }
            if !cleaned.iter().any(|c| c == firm_id) {
                cleaned.push(firm_id.to_string());
            }
        }
        if cleaned.len() < k {
            flags.push("undersubscribed".to_string());
        } else {
            flags.push("padded-from-deterministic".to_string());
        }
    }

    let final_list = RankedShortlist::from_ordered(
        "supervisor",
        ScoreScale::Unbounded,
        cleaned
            .into_iter()
            .map(|id| {
                let f2 = audit.f2_scores.get(&id).copied().unwrap_or(0.0);
                (id, f2)
            })
            .collect::<Vec<_>>(),
    );

    let mut trace = audit;
    trace.mode = mode.as_str().to_string();
    trace.final_list = final_list;
    trace.flags.extend(flags);
    Ok((trace, transcript))
}

/// Final-ranking items may be objects with a firm id key or bare strings.
pub(crate) fn parse_final_ranking(value: &serde_json::Value) -> Vec<String> {
    value["final_ranking"]
        .as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|item| {
                    item.as_str().map(str::to_owned).or_else(|| {
                        ["firm_id", "vcfirmid", "id", "firm"]
                            .iter()
                            .find_map(|k| item.get(*k).and_then(|v| v.as_str()))
                            .map(str::to_owned)
                    })
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Model-behavior failures trigger the deterministic fallback; transport
/// and configuration failures propagate.
fn is_recoverable(err: &GatewayError) -> bool {
    matches!(
        err,
        GatewayError::ParseFailure { .. } | GatewayError::EmptyCompletion { .. }
    )
}
