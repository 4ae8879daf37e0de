//! Deterministic plain-text serialization of profiles and candidate tables.
//!
//! Tables are aligned columns with the firm id first, one row per firm, in
//! pool order. Missing values render as the literal token "N/A". Numeric
//! features render with up to 4 significant digits; coordinate columns with
//! 3 decimals, so distance signals survive truncation.

use crate::domain::{CandidateRecord, CasePool, FeatureValue, Profile};

/// Renders a numeric feature for prompt embedding.
pub fn format_feature_number(value: f64, column: &str) -> String {
    if is_coordinate_column(column) {
        return format!("{value:.3}");
    }
    format_significant(value, 4)
}

fn is_coordinate_column(column: &str) -> bool {
    let lower = column.to_lowercase();
    lower.contains("lat") || lower.contains("lng") || lower.contains("lon")
}

/// Up to `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(value: f64, digits: u32) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).clamp(0, 12) as usize;
    let mut out = format!("{value:.decimals$}");
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    out
}

pub fn display_value(value: &FeatureValue, column: &str) -> String {
    match value {
        FeatureValue::Missing => "N/A".to_string(),
        FeatureValue::Numeric(v) => format_feature_number(*v, column),
        FeatureValue::Text(s) | FeatureValue::Categorical(s) | FeatureValue::Identifier(s) => {
            s.clone()
        }
    }
}

/// One-line profile rendering: `key: value | key: value`.
pub fn render_profile(profile: &Profile) -> String {
    if profile.is_empty() {
        return "N/A".to_string();
    }
    profile
        .iter()
        .map(|(name, value)| format!("{name}: {}", display_value(value, name)))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Full candidate table for a pool, in pool order.
pub fn render_candidate_table(pool: &CasePool) -> String {
    render_table(&pool.candidates, &pool.feature_names())
}

/// Aligned table over arbitrary records (used for the planner's 2-candidate
/// sample as well as full pools).
pub fn render_table(records: &[CandidateRecord], feature_names: &[String]) -> String {
    let mut columns: Vec<String> = Vec::with_capacity(feature_names.len() + 1);
    columns.push("firm_id".to_string());
    columns.extend(feature_names.iter().cloned());

    let mut rows: Vec<Vec<String>> = Vec::with_capacity(records.len() + 1);
    rows.push(columns.clone());
    for record in records {
        let mut row = Vec::with_capacity(columns.len());
        row.push(record.firm_id.clone());
        for name in feature_names {
            let cell = record
                .features
                .get(name)
                .map(|v| display_value(v, name))
                .unwrap_or_else(|| "N/A".to_string());
            row.push(cell);
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..columns.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();

    rows.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}
