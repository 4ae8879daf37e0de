//! Token accounting per (case, role, agent).

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::RoleTag;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedgerKey {
    pub case_id: String,
    pub role: RoleTag,
    pub agent_name: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Successful completions for this key.
    pub call_count: u64,
    /// All provider attempts, including retried transport failures.
    pub attempt_count: u64,
}

/// Cumulative, monotone token ledger. Totals always equal the sum of every
/// recorded completion; safe for concurrent writers.
#[derive(Debug, Default)]
pub struct TokenLedger {
    inner: Mutex<BTreeMap<LedgerKey, LedgerEntry>>,
}

/// Aggregate view over one role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub call_count: u64,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of completed calls so far for this key; used as the fixture
    /// turn index for the next call.
    pub fn turn_index(&self, key: &LedgerKey) -> u64 {
        self.inner
            .lock()
            .unwrap()
            .get(key)
            .map_or(0, |e| e.call_count)
    }

    pub fn record_attempt(&self, key: &LedgerKey) {
        let mut inner = self.inner.lock().unwrap();
        inner.entry(key.clone()).or_default().attempt_count += 1;
    }

    pub fn record_success(&self, key: &LedgerKey, prompt_tokens: u64, completion_tokens: u64) {
        let mut inner = self.inner.lock().unwrap();
        let entry = inner.entry(key.clone()).or_default();
        entry.prompt_tokens += prompt_tokens;
        entry.completion_tokens += completion_tokens;
        entry.call_count += 1;
    }

    pub fn snapshot(&self) -> BTreeMap<LedgerKey, LedgerEntry> {
        self.inner.lock().unwrap().clone()
    }

    /// (prompt, completion) grand totals.
    pub fn totals(&self) -> (u64, u64) {
        let inner = self.inner.lock().unwrap();
        inner.values().fold((0, 0), |(p, c), e| {
            (p + e.prompt_tokens, c + e.completion_tokens)
        })
    }

    pub fn per_role_totals(&self) -> BTreeMap<RoleTag, RoleTotals> {
        let inner = self.inner.lock().unwrap();
        let mut out: BTreeMap<RoleTag, RoleTotals> = BTreeMap::new();
        for (key, entry) in inner.iter() {
            let t = out.entry(key.role).or_default();
            t.prompt_tokens += entry.prompt_tokens;
            t.completion_tokens += entry.completion_tokens;
            t.call_count += entry.call_count;
        }
        out
    }

    /// Per-role totals restricted to one case.
    pub fn case_role_totals(&self, case_id: &str) -> BTreeMap<RoleTag, RoleTotals> {
        let inner = self.inner.lock().unwrap();
        let mut out: BTreeMap<RoleTag, RoleTotals> = BTreeMap::new();
        for (key, entry) in inner.iter().filter(|(k, _)| k.case_id == case_id) {
            let t = out.entry(key.role).or_default();
            t.prompt_tokens += entry.prompt_tokens;
            t.completion_tokens += entry.completion_tokens;
            t.call_count += entry.call_count;
        }
        out
    }

    pub fn case_call_count(&self, case_id: &str) -> u64 {
        self.inner
            .lock()
            .unwrap()
            .iter()
            .filter(|(k, _)| k.case_id == case_id)
            .map(|(_, e)| e.call_count)
            .sum()
    }
}
