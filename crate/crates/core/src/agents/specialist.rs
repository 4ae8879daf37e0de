//! Specialized agent: role-conditioned evaluation of the full candidate
//! pool into a ranked top-k' shortlist with alignment scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    specialist_shortlist_size, AgentBlueprint, CasePool, RankedShortlist, ScoreScale,
    ShortlistEntry, TaskContext,
};
use crate::gateway::{Gateway, GatewayError, RoleTag};
use crate::prompt::{TemplateError, TemplateStore};

/// Normalization findings for one specialist response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialistFlags {
    /// Anything was dropped, collapsed, truncated, or defaulted.
    pub normalized: bool,
    /// Fewer than k' entries survived; the report is still usable.
    pub short: bool,
    /// At least one score was clamped into [1, 10].
    pub clamped: bool,
}

/// One specialist's validated output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecialistReport {
    pub blueprint: AgentBlueprint,
    /// The feature subset the agent declared it focused on, verbatim.
    pub evaluation_focus: String,
    pub overall_rationale: String,
    /// Schema feature names matched in `evaluation_focus` by exact or
    /// substring match (underscores and spaces interchangeable).
    pub matched_features: Vec<String>,
    pub shortlist: RankedShortlist,
    pub per_entry_rationales: BTreeMap<String, String>,
    pub flags: SpecialistFlags,
    pub raw_text: String,
    pub call_count: u32,
}

#[derive(Debug, Error)]
pub enum SpecialistError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("specialist '{agent}' shortlist is empty after normalization")]
    EmptyShortlist { agent: String },
    #[error("specialist 'ranked_candidates' is not an array")]
    BadCandidatesShape,
}

/// Entry as parsed from model output, before normalization.
#[derive(Debug, Clone)]
pub(crate) struct RawEntry {
    pub(crate) firm_id: String,
    pub(crate) rank: Option<u64>,
    pub(crate) score: Option<f64>,
    pub(crate) rationale: Option<String>,
}

/// Runs one specialist over the pool and normalizes its shortlist:
/// unknown firms dropped, duplicates collapsed to best rank, overlong lists
/// truncated to k', ranks renumbered 1..len, scores clamped to [1, 10].
pub fn evaluate(
    gateway: &Gateway,
    store: &TemplateStore,
    blueprint: &AgentBlueprint,
    ctx: &TaskContext,
    pool: &CasePool,
) -> Result<SpecialistReport, SpecialistError> {
    let k_prime = specialist_shortlist_size(pool.size()).expect("pool invariant m >= 3");
    let prompt = store.render_specialist_prompt(blueprint, ctx, pool, k_prime)?;
    let request = prompt.into_request(
        RoleTag::Specialist,
        &ctx.company_id,
        blueprint.name.clone(),
        gateway.call_defaults(),
    );
    let completion = gateway.complete_structured(&request)?;

    let evaluation_focus = completion.value["evaluation_focus"]
        .as_str()
        .unwrap_or_default()
        .trim()
        .to_string();
    let overall_rationale = completion.value["overall_rationale"]
        .as_str()
        .unwrap_or_default()
        .trim()
        .to_string();
    let items = completion.value["ranked_candidates"]
        .as_array()
        .ok_or(SpecialistError::BadCandidatesShape)?;
    let raw_entries: Vec<RawEntry> = items.iter().filter_map(parse_entry).collect();

    let (entries, rationales, flags) = normalize_entries(
        &blueprint.name,
        raw_entries,
        pool,
        k_prime,
        ScoreScale::OneToTen,
    );
    if entries.is_empty() {
        return Err(SpecialistError::EmptyShortlist {
            agent: blueprint.name.clone(),
        });
    }
    let shortlist = RankedShortlist::new(blueprint.name.clone(), ScoreScale::OneToTen, entries)
        .expect("normalization yields contiguous unique ranks");

    Ok(SpecialistReport {
        matched_features: match_features(&evaluation_focus, pool),
        blueprint: blueprint.clone(),
        evaluation_focus,
        overall_rationale,
        shortlist,
        per_entry_rationales: rationales,
        flags,
        raw_text: completion.raw_text,
        call_count: completion.call_count,
    })
}

pub(crate) fn parse_entry(item: &serde_json::Value) -> Option<RawEntry> {
    let firm_id = ["firm_id", "vcfirmid", "id", "firm"]
        .iter()
        .find_map(|k| item.get(*k).and_then(|v| v.as_str()))?
        .trim()
        .to_string();
    if firm_id.is_empty() {
        return None;
    }
    let score = ["score", "alignment_score"]
        .iter()
        .find_map(|k| item.get(*k).and_then(|v| v.as_f64()));
    Some(RawEntry {
        firm_id,
        rank: item.get("rank").and_then(|v| v.as_u64()),
        score,
        rationale: item
            .get("rationale")
            .and_then(|v| v.as_str())
            .map(str::to_owned),
    })
}

/// The normalization pipeline, shared with the single-agent baseline.
/// Idempotent: feeding the output back through changes nothing.
pub(crate) fn normalize_entries(
    agent: &str,
    raw: Vec<RawEntry>,
    pool: &CasePool,
    limit: usize,
    scale: ScoreScale,
) -> (
    Vec<ShortlistEntry>,
    BTreeMap<String, String>,
    SpecialistFlags,
) {
    let (score_lo, score_hi) = scale.range().unwrap_or((f64::MIN, f64::MAX));
    let score_mid = (score_lo + score_hi) / 2.0;
    let mut flags = SpecialistFlags::default();

    // Order by claimed rank, position as the stable fallback.
    let mut ordered: Vec<(usize, RawEntry)> = raw.into_iter().enumerate().collect();
    ordered
        .sort_by_key(|(position, entry)| (entry.rank.unwrap_or(*position as u64 + 1), *position));

    let mut rationales = BTreeMap::new();
    let mut entries: Vec<ShortlistEntry> = Vec::new();
    for (_, entry) in ordered {
        if !pool.contains_firm(&entry.firm_id) {
            log::warn!(
                "specialist '{agent}': dropping unknown firm '{}'",
                entry.firm_id
            );
            flags.normalized = true;
            continue;
        }
        if entries.iter().any(|e| e.firm_id == entry.firm_id) {
            // Best (lowest) rank was seen first; collapse the duplicate.
            log::warn!(
                "specialist '{agent}': collapsing duplicate firm '{}'",
                entry.firm_id
            );
            flags.normalized = true;
            continue;
        }
        let score = match entry.score {
            Some(s) if s.is_finite() => {
                let clamped = s.clamp(score_lo, score_hi);
                if clamped != s {
                    log::warn!(
                        "agent '{agent}': clamping score {s} for '{}'",
                        entry.firm_id
                    );
                    flags.clamped = true;
                    flags.normalized = true;
                }
                clamped
            }
            _ => {
                // Scale midpoint; rank order, not magnitude, carries the
                // signal downstream.
                flags.normalized = true;
                score_mid
            }
        };
        if let Some(rationale) = entry.rationale {
            rationales.insert(entry.firm_id.clone(), rationale);
        }
        entries.push(ShortlistEntry {
            firm_id: entry.firm_id,
            rank: entries.len() + 1,
            score,
        });
    }

    if entries.len() > limit {
        log::warn!(
            "agent '{agent}': truncating {} entries to {limit}",
            entries.len()
        );
        entries.truncate(limit);
        flags.normalized = true;
    }
    if entries.len() < limit {
        flags.short = true;
    }
    rationales.retain(|firm, _| entries.iter().any(|e| &e.firm_id == firm));
    (entries, rationales, flags)
}

/// Exact/substring match of schema feature names inside the declared focus,
/// treating underscores and spaces as interchangeable.
fn match_features(focus: &str, pool: &CasePool) -> Vec<String> {
    let haystack = focus.to_lowercase().replace('_', " ");
    pool.feature_names()
        .into_iter()
        .filter(|name| {
            let needle = name.to_lowercase().replace('_', " ");
            haystack.contains(&needle)
        })
        .collect()
}
