//! Core domain model: candidate pools, task contexts, and ranked shortlists.
//!
//! Everything here is immutable after construction and safe to share across
//! concurrent case evaluations. Shortlist-size arithmetic lives here so every
//! agent derives its list length from the same two functions.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum candidate count for a pool to admit a shortlist.
pub const MIN_POOL_SIZE: usize = 3;

/// One cell of the candidate feature matrix.
///
/// `Missing` is distinct from empty text: an empty cell in a source file
/// loads as `Missing`, never as `Text("")`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    Numeric(f64),
    Text(String),
    Categorical(String),
    Identifier(String),
    Missing,
}

impl FeatureValue {
    /// Builds a numeric value, rejecting NaN and infinities.
    pub fn finite_numeric(v: f64) -> Option<Self> {
        v.is_finite().then_some(FeatureValue::Numeric(v))
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(v) => Some(*v),
            _ => None,
        }
    }
}

/// Declared kind of a schema column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Text,
    Categorical,
    Identifier,
}

/// Ordered profile: feature name to value, insertion order preserved.
pub type Profile = IndexMap<String, FeatureValue>;

/// One candidate firm row: identifier, features, and the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub firm_id: String,
    pub features: Profile,
    pub is_ground_truth: bool,
}

/// Deal context: who is leading, what is being financed, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub company_id: String,
    pub lead_profile: Profile,
    pub target_profile: Profile,
    pub period_label: String,
}

impl TaskContext {
    pub fn new(
        company_id: impl Into<String>,
        lead_profile: Profile,
        target_profile: Profile,
        period_label: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let company_id = company_id.into();
        if company_id.is_empty() {
            return Err(DomainError::EmptyCompanyId);
        }
        if !lead_profile.values().any(|v| !v.is_missing()) {
            return Err(DomainError::EmptyProfile { which: "lead" });
        }
        if !target_profile.values().any(|v| !v.is_missing()) {
            return Err(DomainError::EmptyProfile { which: "target" });
        }
        Ok(Self {
            company_id,
            lead_profile,
            target_profile,
            period_label: period_label.into(),
        })
    }
}

/// One benchmark case: context, candidate matrix, schema, and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePool {
    pub context: TaskContext,
    pub candidates: Vec<CandidateRecord>,
    pub feature_schema: Vec<(String, FeatureKind)>,
    pub ground_truth: BTreeSet<String>,
    pub declared_real_size: Option<usize>,
}

impl CasePool {
    /// Assembles a pool, deriving `ground_truth` from candidate labels and
    /// checking every pool invariant.
    pub fn new(
        context: TaskContext,
        candidates: Vec<CandidateRecord>,
        feature_schema: Vec<(String, FeatureKind)>,
        declared_real_size: Option<usize>,
    ) -> Result<Self, DomainError> {
        if candidates.len() < MIN_POOL_SIZE {
            return Err(DomainError::PoolTooSmall {
                case: context.company_id.clone(),
                m: candidates.len(),
            });
        }
        let schema_names: BTreeSet<&str> = feature_schema.iter().map(|(n, _)| n.as_str()).collect();
        let mut seen = BTreeSet::new();
        let mut ground_truth = BTreeSet::new();
        for c in &candidates {
            if c.firm_id.is_empty() {
                return Err(DomainError::EmptyFirmId {
                    case: context.company_id.clone(),
                });
            }
            if !seen.insert(c.firm_id.clone()) {
                return Err(DomainError::DuplicateCandidate {
                    case: context.company_id.clone(),
                    firm_id: c.firm_id.clone(),
                });
            }
            for (name, value) in &c.features {
                if !schema_names.contains(name.as_str()) {
                    return Err(DomainError::UndeclaredFeature {
                        case: context.company_id.clone(),
                        feature: name.clone(),
                    });
                }
                if let FeatureValue::Numeric(v) = value {
                    if !v.is_finite() {
                        return Err(DomainError::NonFiniteFeature {
                            case: context.company_id.clone(),
                            firm_id: c.firm_id.clone(),
                            feature: name.clone(),
                        });
                    }
                }
            }
            if c.is_ground_truth {
                ground_truth.insert(c.firm_id.clone());
            }
        }
        if let Some(declared) = declared_real_size {
            if declared != ground_truth.len() {
                return Err(DomainError::RealSizeMismatch {
                    case: context.company_id.clone(),
                    declared,
                    actual: ground_truth.len(),
                });
            }
        }
        Ok(Self {
            context,
            candidates,
            feature_schema,
            ground_truth,
            declared_real_size,
        })
    }

    /// Candidate count `m`.
    pub fn size(&self) -> usize {
        self.candidates.len()
    }

    pub fn case_id(&self) -> &str {
        &self.context.company_id
    }

    pub fn contains_firm(&self, firm_id: &str) -> bool {
        self.candidates.iter().any(|c| c.firm_id == firm_id)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_schema.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Returns a copy with candidate rows shuffled by `seed` (ground truth,
    /// schema, and context untouched). Used for prompt-order sensitivity runs.
    pub fn shuffled(&self, seed: u64) -> CasePool {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        // Mix the case id into the stream so every case gets its own order.
        let mut hash = crate::util::fnv64(self.case_id().as_bytes());
        hash ^= seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(hash);
        let mut shuffled = self.clone();
        shuffled.candidates.shuffle(&mut rng);
        shuffled
    }
}

/// Score range tag for a shortlist's alignment scores.
///
/// Specialists score on 1-10, the single-agent and debate committees on 1-5.
/// `Unbounded` marks aggregated outputs whose scores are fusion values rather
/// than rubric scores; validation only requires them to be finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScale {
    OneToTen,
    OneToFive,
    Unbounded,
}

impl ScoreScale {
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            ScoreScale::OneToTen => Some((1.0, 10.0)),
            ScoreScale::OneToFive => Some((1.0, 5.0)),
            ScoreScale::Unbounded => None,
        }
    }

    pub fn clamp(&self, score: f64) -> f64 {
        match self.range() {
            Some((lo, hi)) => score.clamp(lo, hi),
            None => score,
        }
    }
}

/// One shortlist row: firm, 1-based rank, alignment score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub firm_id: String,
    pub rank: usize,
    pub score: f64,
}

/// An agent's ordered output. Ranks are exactly `1..=len` with unique firms;
/// library constructors enforce this (serde deserialization does not —
/// run [`validate_shortlist`] on externally sourced lists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedShortlist {
    pub producer: String,
    pub scale: ScoreScale,
    pub entries: Vec<ShortlistEntry>,
}

impl RankedShortlist {
    /// Validating constructor: entries must already be rank-sorted 1..=len
    /// with unique firms.
    pub fn new(
        producer: impl Into<String>,
        scale: ScoreScale,
        entries: Vec<ShortlistEntry>,
    ) -> Result<Self, DomainError> {
        let producer = producer.into();
        let mut seen = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(DomainError::BadRankSequence {
                    producer: producer.clone(),
                    expected: i + 1,
                    found: e.rank,
                });
            }
            if !seen.insert(e.firm_id.clone()) {
                return Err(DomainError::DuplicateShortlistFirm {
                    producer: producer.clone(),
                    firm_id: e.firm_id.clone(),
                });
            }
        }
        Ok(Self {
            producer,
            scale,
            entries,
        })
    }

    /// Ranks an already-ordered `(firm_id, score)` sequence 1..=n after
    /// dropping duplicate firms (first occurrence wins). Always valid.
    pub fn from_ordered<I, S>(producer: impl Into<String>, scale: ScoreScale, items: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for (firm, score) in items {
            let firm = firm.into();
            if seen.insert(firm.clone()) {
                entries.push(ShortlistEntry {
                    firm_id: firm,
                    rank: entries.len() + 1,
                    score,
                });
            }
        }
        Self {
            producer: producer.into(),
            scale,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn firm_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.firm_id.as_str())
    }

    pub fn firm_set(&self) -> BTreeSet<String> {
        self.firm_ids().map(str::to_owned).collect()
    }

    pub fn rank_of(&self, firm_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.firm_id == firm_id)
            .map(|e| e.rank)
    }

    pub fn score_of(&self, firm_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.firm_id == firm_id)
            .map(|e| e.score)
    }
}

/// A specialist configuration: name, role, ability, and the profile/guides
/// that condition its evaluation focus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBlueprint {
    pub name: String,
    pub role: String,
    pub ability: String,
    pub profile: String,
}

impl AgentBlueprint {
    pub fn is_complete(&self) -> bool {
        !self.name.trim().is_empty()
            && !self.role.trim().is_empty()
            && !self.ability.trim().is_empty()
            && !self.profile.trim().is_empty()
    }

    /// Concatenated text used for profile embedding and clustering.
    pub fn profile_text(&self) -> String {
        format!(
            "{} {} {} {}",
            self.name, self.role, self.ability, self.profile
        )
    }
}

/// Final shortlist size `⌊m/3⌋`.
pub fn final_shortlist_size(m: usize) -> Result<usize, DomainError> {
    if m < MIN_POOL_SIZE {
        return Err(DomainError::PoolTooSmall {
            case: String::new(),
            m,
        });
    }
    Ok(m / 3)
}

/// Per-specialist shortlist size `⌈m/3⌉`.
pub fn specialist_shortlist_size(m: usize) -> Result<usize, DomainError> {
    if m < MIN_POOL_SIZE {
        return Err(DomainError::PoolTooSmall {
            case: String::new(),
            m,
        });
    }
    Ok(m.div_ceil(3))
}

/// A single problem found by [`validate_shortlist`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShortlistViolation {
    UnknownFirm { firm_id: String },
    WrongLength { expected: usize, actual: usize },
    DuplicateFirm { firm_id: String },
    RankGap { expected: usize, found: usize },
    ScoreOutOfRange { firm_id: String, score: f64 },
}

impl fmt::Display for ShortlistViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownFirm { firm_id } => write!(f, "unknown firm {firm_id}"),
            Self::WrongLength { expected, actual } => {
                write!(f, "wrong length: expected {expected}, got {actual}")
            }
            Self::DuplicateFirm { firm_id } => write!(f, "duplicate firm {firm_id}"),
            Self::RankGap { expected, found } => {
                write!(f, "rank gap: expected {expected}, found {found}")
            }
            Self::ScoreOutOfRange { firm_id, score } => {
                write!(f, "score {score} out of range for {firm_id}")
            }
        }
    }
}

/// Outcome of a structural shortlist check. Never aborts; collects every
/// violation it finds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<ShortlistViolation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a shortlist against a pool: membership, length, rank sequence,
/// firm uniqueness, and score range (per the list's declared scale).
pub fn validate_shortlist(
    list: &RankedShortlist,
    pool: &CasePool,
    expected_len: usize,
) -> ValidationReport {
    let mut violations = Vec::new();
    if list.len() != expected_len {
        violations.push(ShortlistViolation::WrongLength {
            expected: expected_len,
            actual: list.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for (i, e) in list.entries.iter().enumerate() {
        if !pool.contains_firm(&e.firm_id) {
            violations.push(ShortlistViolation::UnknownFirm {
                firm_id: e.firm_id.clone(),
            });
        }
        if !seen.insert(e.firm_id.clone()) {
            violations.push(ShortlistViolation::DuplicateFirm {
                firm_id: e.firm_id.clone(),
            });
        }
        if e.rank != i + 1 {
            violations.push(ShortlistViolation::RankGap {
                expected: i + 1,
                found: e.rank,
            });
        }
        if let Some((lo, hi)) = list.scale.range() {
            if e.score < lo || e.score > hi {
                violations.push(ShortlistViolation::ScoreOutOfRange {
                    firm_id: e.firm_id.clone(),
                    score: e.score,
                });
            }
        }
        if !e.score.is_finite() {
            violations.push(ShortlistViolation::ScoreOutOfRange {
                firm_id: e.firm_id.clone(),
                score: e.score,
            });
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DomainError {
    #[error("pool for case '{case}' has {m} candidates; at least 3 required")]
    PoolTooSmall { case: String, m: usize },
    #[error("company id must be non-empty")]
    EmptyCompanyId,
    #[error("{which} profile has no non-missing field")]
    EmptyProfile { which: &'static str },
    #[error("case '{case}' contains a candidate with an empty firm id")]
    EmptyFirmId { case: String },
    #[error("case '{case}' contains duplicate candidate '{firm_id}'")]
    DuplicateCandidate { case: String, firm_id: String },
    #[error("case '{case}' candidate feature '{feature}' is not in the declared schema")]
    UndeclaredFeature { case: String, feature: String },
    #[error("case '{case}' candidate '{firm_id}' feature '{feature}' is not finite")]
    NonFiniteFeature {
        case: String,
        firm_id: String,
        feature: String,
    },
    #[error(
        "case '{case}' declares {declared} ground-truth co-investors but {actual} rows are labeled"
    )]
    RealSizeMismatch {
        case: String,
        declared: usize,
        actual: usize,
    },
    #[error("shortlist from '{producer}': expected rank {expected}, found {found}")]
    BadRankSequence {
        producer: String,
        expected: usize,
        found: usize,
    },
    #[error("shortlist from '{producer}': duplicate firm '{firm_id}'")]
    DuplicateShortlistFirm { producer: String, firm_id: String },
}
