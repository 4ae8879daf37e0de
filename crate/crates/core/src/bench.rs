//! Benchmark harness: runs a configured system over case sets, scores match
//! rates with confidence intervals, and assembles machine-readable reports.

pub mod runlog;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::supervisor::SupervisorTranscript;
use crate::agents::{
    aggregate_deterministic, aggregate_llm, plan, ImportanceWeights, LlmSupervisorMode,
    SpecialistReport, DEFAULT_BLUEPRINT_CAP,
};
use crate::baselines::{run_debate, run_single, SingleAgentConfig};
use crate::derive_config_hash;
use crate::domain::{final_shortlist_size, CasePool, RankedShortlist};
use crate::gateway::{Gateway, RoleTotals};
use crate::prompt::{PromptVariant, TemplateStore};
use crate::util::parallel_map;
use runlog::RunRecord;

/// Which system a bench run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    PartnerMas,
    Single,
    Debate,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::PartnerMas => "partner-mas",
            SystemKind::Single => "single",
            SystemKind::Debate => "debate",
        }
    }
}

/// Supervisor aggregation strategy for partner-mas runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisorMode {
    Deterministic,
    Importance,
    Weight,
    Majority,
}

impl SupervisorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupervisorMode::Deterministic => "deterministic",
            SupervisorMode::Importance => "importance",
            SupervisorMode::Weight => "weight",
            SupervisorMode::Majority => "majority",
        }
    }
}

/// One experiment: system, prompt variant, supervisor mode, and run knobs.
/// Provider bindings live on the [`Gateway`] handed to [`run_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub variant: PromptVariant,
    pub supervisor_mode: SupervisorMode,
    pub runs_k: usize,
    pub blueprint_cap: usize,
    pub debate_rounds: usize,
    /// Shuffle candidate order within each case (prompt-order sensitivity).
    pub shuffle_seed: Option<u64>,
    /// Draw the planner's 2-candidate sample at random instead of taking
    /// the first two in pool order.
    pub sample_seed: Option<u64>,
    pub concurrency: usize,
    /// Pinned to 0 for benchmark runs; overridable for ablations.
    pub temperature: f64,
    pub max_output: Option<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::PartnerMas,
            variant: PromptVariant::Business,
            supervisor_mode: SupervisorMode::Deterministic,
            runs_k: 1,
            blueprint_cap: DEFAULT_BLUEPRINT_CAP,
            debate_rounds: 1,
            shuffle_seed: None,
            sample_seed: None,
            concurrency: 4,
            temperature: 0.0,
            max_output: None,
        }
    }
}

/// One scored case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub final_list: RankedShortlist,
    pub matched: usize,
    pub truth_size: usize,
    /// Recall of the shortlist against ground truth, in percent.
    pub match_rate: f64,
    pub tokens: BTreeMap<String, RoleTotals>,
    pub flags: Vec<String>,
}

/// One case that could not be scored, with the failing stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedCase {
    pub case_id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub per_role: BTreeMap<String, RoleTotals>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub system: String,
    pub variant: String,
    pub supervisor_mode: String,
    pub runs_k: usize,
    pub template_version: String,
    pub config_hash: String,
    pub providers: BTreeMap<String, String>,
    /// More than one provider id contributed tokens; totals are not
    /// directly comparable across tokenizers.
    pub mixed_providers: bool,
    /// Excluded from canonical bytes so reruns compare clean.
    pub generated_at: Option<String>,
}

/// Current on-disk schema for [`BenchReport`] and the run log.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Full bench output: per-case results, aggregate metrics, token totals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(default)]
    pub schema_version: u32,
    pub metadata: BenchMetadata,
    pub scored_cases: usize,
    /// Arithmetic mean of per-case match rates over non-failed cases.
    pub mean_match_rate: Option<f64>,
    /// 95% CI half-width over per-case match rates (normal approximation).
    pub ci_half_width: Option<f64>,
    /// Pooled counts so per-partner conventions can be recomputed.
    pub pooled_matched: usize,
    pub pooled_truth: usize,
    pub token_totals: TokenTotals,
    pub cases: Vec<CaseResult>,
    pub failures: Vec<FailedCase>,
}

impl BenchReport {
    /// Pretty JSON with the timestamp cleared; byte-identical across
    /// reruns of a deterministic configuration.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        clone.metadata.generated_at = None;
        serde_json::to_string_pretty(&clone).expect("report serializes")
    }

    /// Flat per-case table for external plotting and statistics.
    pub fn per_case_table_csv(&self) -> String {
        let mut out = String::from(
            "case_id,matched,truth_size,match_rate,prompt_tokens,completion_tokens,flags\n",
        );
        for case in &self.cases {
            let prompt: u64 = case.tokens.values().map(|t| t.prompt_tokens).sum();
            let completion: u64 = case.tokens.values().map(|t| t.completion_tokens).sum();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                case.case_id,
                case.matched,
                case.truth_size,
                case.match_rate,
                prompt,
                completion,
                case.flags.join(";")
            ));
        }
        for failed in &self.failures {
            out.push_str(&format!(
                "{},,,,,,failed:{}\n",
                failed.case_id, failed.stage
            ));
        }
        out
    }

    /// 0 = all cases scored, 2 = partial failures.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn summary_text(&self) -> String {
        let mean = self
            .mean_match_rate
            .map(|m| format!("{m:.2}%"))
            .unwrap_or_else(|| "n/a".to_string());
        let ci = self
            .ci_half_width
            .map(|c| format!(" ± {c:.2}"))
            .unwrap_or_default();
        format!(
            "system {} ({}, supervisor {}): {} scored / {} failed | match rate {mean}{ci} | tokens {} prompt + {} completion{}",
            self.metadata.system,
            self.metadata.variant,
            self.metadata.supervisor_mode,
            self.scored_cases,
            self.failures.len(),
            self.token_totals.prompt_tokens,
            self.token_totals.completion_tokens,
            if self.metadata.mixed_providers {
                " | WARNING: mixed providers, token totals not comparable"
            } else {
                ""
            }
        )
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no cases to run")]
    NoCases,
    #[error("ground truth for case '{case_id}' is empty; match rate undefined")]
    EmptyTruth { case_id: String },
    #[error("all {0} cases failed")]
    AllCasesFailed(usize),
}

/// Match rate: `|F ∩ G| / |G| × 100` — the recall of the shortlist.
pub fn match_rate(
    final_list: &RankedShortlist,
    truth: &BTreeSet<String>,
) -> Result<f64, BenchError> {
    if truth.is_empty() {
        return Err(BenchError::EmptyTruth {
            case_id: String::new(),
        });
    }
    let matched = final_list
        .firm_ids()
        .filter(|id| truth.contains(*id))
        .count();
    Ok(100.0 * matched as f64 / truth.len() as f64)
}

/// 95% half-width under the normal approximation: `1.96 · s / √n` with the
/// sample (n-1) standard deviation. Undefined below two observations.
pub fn confidence_interval(rates: &[f64]) -> Option<f64> {
    if rates.len() < 2 {
        return None;
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let variance = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(1.96 * variance.sqrt() / n.sqrt())
}

enum CaseOutcome {
    Scored(Box<(CaseResult, RunRecord)>),
    Failed(FailedCase, Box<RunRecord>),
}

/// Executes the configured system over every case under the concurrency
/// cap. Per-case failures are recorded, never abort the bench; only a
/// fully failed bench is an error.
pub fn run_bench(
    cases: &[CasePool],
    cfg: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
) -> Result<(BenchReport, Vec<RunRecord>), BenchError> {
    if cases.is_empty() {
        return Err(BenchError::NoCases);
    }

    let outcomes = parallel_map(cases, cfg.concurrency, |_, pool| {
        run_case(pool, cfg, gateway, store)
    });

    let mut results: Vec<CaseResult> = Vec::new();
    let mut failures: Vec<FailedCase> = Vec::new();
    let mut records: Vec<RunRecord> = Vec::new();
    for outcome in outcomes {
        match outcome {
            CaseOutcome::Scored(boxed) => {
                let (mut result, record) = *boxed;
                result.tokens = gateway
                    .ledger()
                    .case_role_totals(&result.case_id)
                    .into_iter()
                    .map(|(role, totals)| (role.as_str().to_string(), totals))
                    .collect();
                results.push(result);
                records.push(record);
            }
            CaseOutcome::Failed(failed, record) => {
                log::warn!(
                    "case {} failed at {}: {}",
                    failed.case_id,
                    failed.stage,
                    failed.reason
                );
                failures.push(failed);
                records.push(*record);
            }
        }
    }

    if results.is_empty() {
        return Err(BenchError::AllCasesFailed(cases.len()));
    }

    let rates: Vec<f64> = results.iter().map(|r| r.match_rate).collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let (prompt_total, completion_total) = gateway.ledger().totals();
    let per_role: BTreeMap<String, RoleTotals> = gateway
        .ledger()
        .per_role_totals()
        .into_iter()
        .map(|(role, totals)| (role.as_str().to_string(), totals))
        .collect();
    let providers: BTreeMap<String, String> = gateway
        .provider_ids()
        .into_iter()
        .map(|(role, id)| (role.as_str().to_string(), id))
        .collect();
    let mixed_providers = providers.values().collect::<BTreeSet<_>>().len() > 1;

    let report = BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        metadata: BenchMetadata {
            system: cfg.system.as_str().to_string(),
            variant: cfg.variant.as_str().to_string(),
            supervisor_mode: cfg.supervisor_mode.as_str().to_string(),
            runs_k: cfg.runs_k,
            template_version: store.version().to_string(),
            config_hash: derive_config_hash(cfg),
            providers,
            mixed_providers,
            generated_at: Some(now_label()),
        },
        scored_cases: results.len(),
        mean_match_rate: Some(mean),
        ci_half_width: confidence_interval(&rates),
        pooled_matched: results.iter().map(|r| r.matched).sum(),
        pooled_truth: results.iter().map(|r| r.truth_size).sum(),
        token_totals: TokenTotals {
            prompt_tokens: prompt_total,
            completion_tokens: completion_total,
            per_role,
        },
        cases: results,
        failures,
    };
    Ok((report, records))
}

fn now_label() -> String {
    // Seconds since the epoch; a clock dependency is not worth a date lib.
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

fn run_case(
    pool: &CasePool,
    cfg: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
) -> CaseOutcome {
    let case_id = pool.case_id().to_string();
    let truth = pool.ground_truth.clone();
    let working = match cfg.shuffle_seed {
        Some(seed) => pool.shuffled(seed),
        None => pool.clone(),
    };
    let mut record = RunRecord::new(&case_id, cfg.system.as_str());
    let mut flags: Vec<String> = Vec::new();

    let fail = |stage: &str, reason: String, record: RunRecord| {
        CaseOutcome::Failed(
            FailedCase {
                case_id: case_id.clone(),
                stage: stage.to_string(),
                reason,
            },
            Box::new(record),
        )
    };

    let final_list: RankedShortlist = match cfg.system {
        SystemKind::PartnerMas => {
            let sample = planner_sample(&working, cfg.sample_seed);
            let planner_output = match plan(
                gateway,
                store,
                &working.context,
                &working.feature_names(),
                &sample,
                cfg.variant,
                cfg.blueprint_cap,
            ) {
                Ok(output) => output,
                Err(err) => return fail("planner", err.to_string(), record),
            };
            record.planner = Some(planner_output.clone());

            let reports_or_errors = parallel_map(
                &planner_output.blueprints,
                planner_output.blueprints.len(),
                |_, blueprint| {
                    crate::agents::evaluate(gateway, store, blueprint, &working.context, &working)
                },
            );
            let mut reports: Vec<SpecialistReport> = Vec::new();
            for (blueprint, outcome) in planner_output.blueprints.iter().zip(reports_or_errors) {
                match outcome {
                    Ok(report) => reports.push(report),
                    Err(err) => {
                        flags.push(format!("specialist-failed:{}", blueprint.name));
                        log::warn!(
                            "case {case_id}: specialist '{}' failed: {err}",
                            blueprint.name
                        );
                    }
                }
            }
            if reports.is_empty() {
                return fail("specialists", "every specialist failed".to_string(), record);
            }
            record.specialists = reports.clone();

            let (trace, transcript) = match cfg.supervisor_mode {
                SupervisorMode::Deterministic => {
                    let lists: Vec<&RankedShortlist> =
                        reports.iter().map(|r| &r.shortlist).collect();
                    let weights = ImportanceWeights::uniform(
                        reports.iter().map(|r| r.blueprint.name.clone()),
                    );
                    let k = final_shortlist_size(working.size()).expect("m >= 3");
                    match aggregate_deterministic(&lists, &weights, k) {
                        Ok(trace) => (trace, SupervisorTranscript::default()),
                        Err(err) => return fail("supervisor", err.to_string(), record),
                    }
                }
                llm_mode => {
                    let mode = match llm_mode {
                        SupervisorMode::Importance => LlmSupervisorMode::Importance,
                        SupervisorMode::Weight => LlmSupervisorMode::Weight,
                        SupervisorMode::Majority => LlmSupervisorMode::Majority,
                        SupervisorMode::Deterministic => unreachable!(),
                    };
                    let k = final_shortlist_size(working.size()).expect("m >= 3");
                    match aggregate_llm(
                        gateway,
                        store,
                        mode,
                        &planner_output.strategic_guidance,
                        &reports,
                        &working,
                        k,
                        cfg.variant,
                    ) {
                        Ok(pair) => pair,
                        Err(err) => return fail("supervisor", err.to_string(), record),
                    }
                }
            };
            flags.extend(trace.flags.iter().cloned());
            record.aggregation = Some(trace.clone());
            record.supervisor_transcript = Some(transcript);
            trace.final_list
        }
        SystemKind::Single => {
            let single_cfg = SingleAgentConfig {
                runs_k: cfg.runs_k,
                variant: cfg.variant,
            };
            match run_single(gateway, store, &working, &working.context, &single_cfg) {
                Ok(outcome) => {
                    flags.extend(outcome.flags.iter().cloned());
                    let list = outcome.shortlist.clone();
                    record.single = Some(outcome);
                    list
                }
                Err(err) => return fail("single", err.to_string(), record),
            }
        }
        SystemKind::Debate => {
            match run_debate(
                gateway,
                store,
                &working,
                &working.context,
                cfg.variant,
                cfg.debate_rounds,
            ) {
                Ok(transcript) => {
                    flags.extend(transcript.flags.iter().cloned());
                    let list = transcript.synthesis.clone();
                    record.debate = Some(transcript);
                    list
                }
                Err(err) => return fail("debate", err.to_string(), record),
            }
        }
    };

    let rate = match match_rate(&final_list, &truth) {
        Ok(rate) => rate,
        Err(_) => {
            return fail(
                "metric",
                "ground truth empty; match rate undefined".to_string(),
                record,
            )
        }
    };
    let matched = final_list
        .firm_ids()
        .filter(|id| truth.contains(*id))
        .count();
    record.match_rate = Some(rate);
    record.flags = flags.clone();

    CaseOutcome::Scored(Box::new((
        CaseResult {
            case_id,
            final_list,
            matched,
            truth_size: truth.len(),
            match_rate: rate,
            tokens: BTreeMap::new(), // filled from the ledger after the join
            flags,
        },
        record,
    )))
}

/// First two candidates in pool order, or a seeded random pair.
fn planner_sample(
    pool: &CasePool,
    sample_seed: Option<u64>,
) -> Vec<crate::domain::CandidateRecord> {
    match sample_seed {
        None => pool.candidates[..2].to_vec(),
        Some(seed) => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut hash = crate::util::fnv64(pool.case_id().as_bytes());
            hash ^= seed.wrapping_mul(0x2545_f491_4f6c_dd1d);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(hash);
            pool.candidates
                .choose_multiple(&mut rng, 2)
                .cloned()
                .collect()
        }
    }
}
