//! Per-case run records: raw and parsed agent outputs, persisted as JSON
//! lines for the clustering and diagnostics tooling.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::supervisor::SupervisorTranscript;
use crate::agents::{AggregationTrace, PlannerOutput, SpecialistReport};
use crate::baselines::{DebateTranscript, SingleRunOutcome};

/// Everything one case produced during a run. Raw model text travels
/// inside the nested payloads (`raw_text` / `raw_responses` fields).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub case_id: String,
    pub system: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerOutput>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub specialists: Vec<SpecialistReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supervisor_transcript: Option<SupervisorTranscript>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleRunOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debate: Option<DebateTranscript>,
}

impl RunRecord {
    pub fn new(case_id: &str, system: &str) -> Self {
        Self {
            case_id: case_id.to_string(),
            system: system.to_string(),
            match_rate: None,
            flags: Vec::new(),
            planner: None,
            specialists: Vec::new(),
            aggregation: None,
            supervisor_transcript: None,
            single: None,
            debate: None,
        }
    }
}

/// Serializes records as JSON lines, one case per line, in case order.
pub fn to_jsonl(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(records: &[RunRecord], path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_jsonl(records).as_bytes())
}

pub fn read_jsonl(path: &Path) -> std::io::Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("run log line {}: {e}", idx + 1),
            )
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut a = RunRecord::new("case_1", "partner-mas");
        a.match_rate = Some(75.0);
        a.flags.push("weights-renormalized".into());
        let b = RunRecord::new("case_2", "single");
        write_jsonl(&[a.clone(), b.clone()], &path).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].case_id, "case_1");
        assert_eq!(back[0].match_rate, Some(75.0));
        assert_eq!(back[1].system, "single");
    }
}
