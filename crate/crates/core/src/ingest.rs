//! Case ingestion: canonical delimited files, structured-record files, and
//! the canonical save path.
//!
//! The canonical on-disk form is a UTF-8 comma-delimited table with a header
//! row and one row per (company, candidate-firm) pair. Header names follow
//! the co-investor shortlisting schema (`companyid`, `vcfirmid`, `leadvc`,
//! `real`, `realsize`, `firmtype`, `pair_tie_strength`, `boncent`, `degree`,
//! ...). Unknown extra columns are carried as text features rather than
//! rejected. Empty numeric cells load as missing, not zero.
//!
//! The lead VC's own row (`leadornot = 1` or `vcfirmid == leadvc`) feeds the
//! lead profile and is excluded from the candidate list: a firm cannot
//! co-invest with itself.

pub mod synthetic;

use std::io::Read;
use std::path::{Path, PathBuf};

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    CandidateRecord, CasePool, DomainError, FeatureKind, FeatureValue, Profile, TaskContext,
    MIN_POOL_SIZE,
};

/// On-disk case source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseFile {
    pub format: CaseFileFormat,
    pub path: PathBuf,
    /// Optional column-kind manifest extending the canonical classification.
    pub schema_manifest: Option<PathBuf>,
}

impl CaseFile {
    pub fn delimited(path: impl Into<PathBuf>) -> Self {
        Self {
            format: CaseFileFormat::DelimitedTable,
            path: path.into(),
            schema_manifest: None,
        }
    }

    pub fn structured(path: impl Into<PathBuf>) -> Self {
        Self {
            format: CaseFileFormat::StructuredRecords,
            path: path.into(),
            schema_manifest: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseFileFormat {
    DelimitedTable,
    StructuredRecords,
}

/// One skipped case in a [`LoadReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCase {
    pub company_id: String,
    pub reason: String,
}

/// Non-fatal findings from a load: skipped cases and warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub cases_loaded: usize,
    pub skipped: Vec<SkippedCase>,
}

/// A successful load: pools in file order plus the load report.
#[derive(Debug, Clone)]
pub struct LoadedCases {
    pub pools: Vec<CasePool>,
    pub report: LoadReport,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column '{column}'")]
    MissingColumn { column: String },
    #[error("row {row}, column '{column}': cannot parse '{value}' as {expected}")]
    MalformedCell {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("case '{case}': inconsistent '{column}' values within one case")]
    InconsistentCaseField { case: String, column: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("structured-record file {path}: {message}")]
    BadStructuredRecords { path: PathBuf, message: String },
    #[error("schema manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },
    #[error("invalid synthetic spec: {0}")]
    BadSyntheticSpec(String),
}

/// How a header column participates in case assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnRole {
    CaseId,
    FirmId,
    LeadId,
    LeadFlag,
    TruthLabel,
    RealSize,
    Period,
    TargetFeature(FeatureKind),
    CandidateFeature(FeatureKind),
}

fn classify_column(name: &str) -> ColumnRole {
    use ColumnRole::*;
    use FeatureKind::*;
    match name {
        "companyid" => CaseId,
        "vcfirmid" => FirmId,
        "leadvc" => LeadId,
        "leadornot" => LeadFlag,
        "real" => TruthLabel,
        "realsize" => RealSize,
        "yearquarter" => Period,
        "year" => TargetFeature(Numeric),
        "companyindustrymajorgroup"
        | "companynation"
        | "companystate"
        | "companycity"
        | "companyzip" => TargetFeature(Categorical),
        "companylat" | "companylng" => TargetFeature(Numeric),
        "firmtype" | "firmnation" | "firmstate" | "firmcounty" | "firmzipcode" | "uszip_vc"
        | "uscity_vc" | "uscounty_vc" => CandidateFeature(Categorical),
        "firmgeographypreference" | "firmindustrypreference" | "firminvestmentstagepreference" => {
            CandidateFeature(Text)
        }
        "vcfirm_dealcount_20qtr"
        | "vcfirm_numcompinvest_20qtr"
        | "vcfirmIPOcount_20qtr"
        | "vcfirm_IPOcount_cum"
        | "vcfirm_dealcount_cum"
        | "vcfirm_numcompinvest_cum"
        | "boncent"
        | "degree"
        | "pair_tie_strength"
        | "uslat_vc"
        | "uslng_vc" => CandidateFeature(Numeric),
        _ => CandidateFeature(Text),
    }
}

/// Extra column kinds supplied alongside a case file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct SchemaManifest {
    #[serde(default)]
    columns: IndexMap<String, FeatureKind>,
}

/// Loads a case file into pools, one per distinct company id, preserving row
/// order within each case. Cases with fewer than three candidates are
/// skipped and recorded; a declared-real-size mismatch is a hard error.
pub fn load_cases(file: &CaseFile) -> Result<LoadedCases, IngestError> {
    match file.format {
        CaseFileFormat::DelimitedTable => {
            let manifest = match &file.schema_manifest {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    serde_json::from_str(&text).map_err(|e| IngestError::BadManifest {
                        path: path.clone(),
                        message: e.to_string(),
                    })?
                }
                None => SchemaManifest::default(),
            };
            let handle = std::fs::File::open(&file.path).map_err(|source| IngestError::Io {
                path: file.path.clone(),
                source,
            })?;
            load_delimited(handle, &manifest)
        }
        CaseFileFormat::StructuredRecords => load_structured(&file.path),
    }
}

fn load_structured(path: &Path) -> Result<LoadedCases, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: Vec<CasePool> =
        serde_json::from_str(&text).map_err(|e| IngestError::BadStructuredRecords {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    // Deserialization bypasses constructors; re-validate every pool.
    let mut pools = Vec::with_capacity(raw.len());
    let mut report = LoadReport::default();
    for pool in raw {
        report.rows_read += pool.candidates.len();
        if pool.candidates.len() < MIN_POOL_SIZE {
            log::warn!(
                "skipping case {}: {} candidates (minimum {})",
                pool.context.company_id,
                pool.candidates.len(),
                MIN_POOL_SIZE
            );
            report.skipped.push(SkippedCase {
                company_id: pool.context.company_id.clone(),
                reason: format!(
                    "{} candidates, minimum {MIN_POOL_SIZE}",
                    pool.candidates.len()
                ),
            });
            continue;
        }
        pools.push(CasePool::new(
            pool.context,
            pool.candidates,
            pool.feature_schema,
            pool.declared_real_size,
        )?);
    }
    report.cases_loaded = pools.len();
    Ok(LoadedCases { pools, report })
}

/// Loads the canonical delimited form from any reader.
pub fn load_delimited_from_reader<R: Read>(reader: R) -> Result<LoadedCases, IngestError> {
    load_delimited(reader, &SchemaManifest::default())
}

fn load_delimited<R: Read>(
    reader: R,
    manifest: &SchemaManifest,
) -> Result<LoadedCases, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();

    for required in ["companyid", "vcfirmid", "real"] {
        if !headers.iter().any(|h| h == required) {
            return Err(IngestError::MissingColumn {
                column: required.to_string(),
            });
        }
    }

    let roles: Vec<ColumnRole> = headers
        .iter()
        .map(|name| match manifest.columns.get(name) {
            Some(kind) => ColumnRole::CandidateFeature(*kind),
            None => classify_column(name),
        })
        .collect();

    // Group raw rows by company id, preserving first-appearance order.
    let mut groups: IndexMap<String, Vec<(usize, csv::StringRecord)>> = IndexMap::new();
    let mut rows_read = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row_number = idx + 2; // 1-based, after the header row
        rows_read += 1;
        let case_id = cell(&record, &headers, "companyid")
            .unwrap_or_default()
            .trim()
            .to_string();
        if case_id.is_empty() {
            return Err(IngestError::MalformedCell {
                row: row_number,
                column: "companyid".into(),
                value: String::new(),
                expected: "non-empty identifier",
            });
        }
        groups
            .entry(case_id)
            .or_default()
            .push((row_number, record));
    }

    let mut pools = Vec::new();
    let mut report = LoadReport {
        rows_read,
        ..LoadReport::default()
    };

    for (case_id, rows) in groups {
        match assemble_case(&case_id, &rows, &headers, &roles)? {
            AssembledCase::Pool(pool) => pools.push(*pool),
            AssembledCase::Skipped(reason) => {
                log::warn!("skipping case {case_id}: {reason}");
                report.skipped.push(SkippedCase {
                    company_id: case_id,
                    reason,
                });
            }
        }
    }
    report.cases_loaded = pools.len();
    Ok(LoadedCases { pools, report })
}

enum AssembledCase {
    Pool(Box<CasePool>),
    Skipped(String),
}

fn cell<'a>(record: &'a csv::StringRecord, headers: &[String], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .position(|h| h == name)
        .and_then(|i| record.get(i))
}

fn parse_feature(
    raw: &str,
    kind: FeatureKind,
    row: usize,
    column: &str,
) -> Result<FeatureValue, IngestError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(FeatureValue::Missing);
    }
    match kind {
        FeatureKind::Numeric => {
            let v: f64 = trimmed.parse().map_err(|_| IngestError::MalformedCell {
                row,
                column: column.to_string(),
                value: raw.to_string(),
                expected: "finite number",
            })?;
            FeatureValue::finite_numeric(v).ok_or_else(|| IngestError::MalformedCell {
                row,
                column: column.to_string(),
                value: raw.to_string(),
                expected: "finite number",
            })
        }
        FeatureKind::Text => Ok(FeatureValue::Text(trimmed.to_string())),
        FeatureKind::Categorical => Ok(FeatureValue::Categorical(trimmed.to_string())),
        FeatureKind::Identifier => Ok(FeatureValue::Identifier(trimmed.to_string())),
    }
}

fn parse_binary(raw: &str, row: usize, column: &str) -> Result<bool, IngestError> {
    match raw.trim() {
        "" | "0" => Ok(false),
        "1" => Ok(true),
        other => Err(IngestError::MalformedCell {
            row,
            column: column.to_string(),
            value: other.to_string(),
            expected: "0 or 1",
        }),
    }
}

fn assemble_case(
    case_id: &str,
    rows: &[(usize, csv::StringRecord)],
    headers: &[String],
    roles: &[ColumnRole],
) -> Result<AssembledCase, IngestError> {
    let lead_id: Option<String> = rows
        .iter()
        .find_map(|(_, r)| {
            cell(r, headers, "leadvc")
                .map(str::trim)
                .filter(|s| !s.is_empty())
        })
        .map(str::to_owned);

    // Target profile and period come from the first row's case-level columns.
    let (first_row_number, first_record) = &rows[0];
    let mut target_profile = Profile::new();
    let mut period_label = String::new();
    for ((header, role), raw) in headers.iter().zip(roles).zip(first_record.iter()) {
        match role {
            ColumnRole::Period => period_label = raw.trim().to_string(),
            ColumnRole::TargetFeature(kind) => {
                let value = parse_feature(raw, *kind, *first_row_number, header)?;
                target_profile.insert(header.clone(), value);
            }
            _ => {}
        }
    }

    let mut lead_profile = Profile::new();
    if let Some(id) = &lead_id {
        lead_profile.insert("leadvc".to_string(), FeatureValue::Identifier(id.clone()));
    }

    let mut schema: Vec<(String, FeatureKind)> = Vec::new();
    for (header, role) in headers.iter().zip(roles) {
        if let ColumnRole::CandidateFeature(kind) = role {
            schema.push((header.clone(), *kind));
        }
    }

    let mut candidates: Vec<CandidateRecord> = Vec::new();
    let mut declared_real_size: Option<usize> = None;

    for (row_number, record) in rows {
        let firm_id = cell(record, headers, "vcfirmid")
            .map(str::trim)
            .unwrap_or_default()
            .to_string();
        if firm_id.is_empty() {
            return Err(IngestError::MalformedCell {
                row: *row_number,
                column: "vcfirmid".into(),
                value: String::new(),
                expected: "non-empty identifier",
            });
        }

        let lead_flag = match cell(record, headers, "leadornot") {
            Some(raw) => parse_binary(raw, *row_number, "leadornot")?,
            None => false,
        };
        let is_lead = lead_flag || lead_id.as_deref() == Some(firm_id.as_str());

        let mut features = Profile::new();
        let mut is_truth = false;
        for ((header, role), raw) in headers.iter().zip(roles).zip(record.iter()) {
            match role {
                ColumnRole::CandidateFeature(kind) => {
                    let value = parse_feature(raw, *kind, *row_number, header)?;
                    features.insert(header.clone(), value);
                }
                ColumnRole::TruthLabel => {
                    is_truth = parse_binary(raw, *row_number, "real")?;
                }
                ColumnRole::RealSize => {
                    let trimmed = raw.trim();
                    if !trimmed.is_empty() {
                        let size: usize =
                            trimmed.parse().map_err(|_| IngestError::MalformedCell {
                                row: *row_number,
                                column: "realsize".into(),
                                value: raw.to_string(),
                                expected: "non-negative integer",
                            })?;
                        match declared_real_size {
                            None => declared_real_size = Some(size),
                            Some(prev) if prev != size => {
                                return Err(IngestError::InconsistentCaseField {
                                    case: case_id.to_string(),
                                    column: "realsize".into(),
                                });
                            }
                            _ => {}
                        }
                    }
                }
                _ => {}
            }
        }

        if is_lead {
            // Lead's own attributes become the lead profile; row is dropped
            // from the candidate list.
            for (name, value) in features {
                if !value.is_missing() {
                    lead_profile.insert(name, value);
                }
            }
            continue;
        }
        candidates.push(CandidateRecord {
            firm_id,
            features,
            is_ground_truth: is_truth,
        });
    }

    if candidates.len() < MIN_POOL_SIZE {
        return Ok(AssembledCase::Skipped(format!(
            "{} candidates, minimum {MIN_POOL_SIZE}",
            candidates.len()
        )));
    }

    if lead_profile.is_empty() {
        // No lead column at all; keep the context valid with a placeholder.
        lead_profile.insert(
            "leadvc".to_string(),
            FeatureValue::Identifier(format!("{case_id}-lead")),
        );
    }
    if !target_profile.values().any(|v| !v.is_missing()) {
        // Files without company-level columns still identify the target.
        target_profile.insert(
            "companyid".to_string(),
            FeatureValue::Identifier(case_id.to_string()),
        );
    }
    let context = TaskContext::new(case_id, lead_profile, target_profile, period_label)?;
    let pool = CasePool::new(context, candidates, schema, declared_real_size)?;
    Ok(AssembledCase::Pool(Box::new(pool)))
}

/// Serializes pools to the canonical delimited form. The column layout is a
/// deterministic function of pool content, so save ∘ load ∘ save is
/// byte-stable.
pub fn save_cases_csv(pools: &[CasePool]) -> Result<String, IngestError> {
    let mut target_columns: IndexSet<String> = IndexSet::new();
    let mut feature_columns: IndexSet<String> = IndexSet::new();
    let mut feature_kinds: IndexMap<String, FeatureKind> = IndexMap::new();
    let mut any_realsize = false;
    let mut any_period = false;
    const RESERVED: [&str; 7] = [
        "companyid",
        "vcfirmid",
        "leadvc",
        "leadornot",
        "real",
        "realsize",
        "yearquarter",
    ];
    for pool in pools {
        for name in pool.context.target_profile.keys() {
            if !RESERVED.contains(&name.as_str()) {
                target_columns.insert(name.clone());
            }
        }
        for (name, kind) in &pool.feature_schema {
            feature_columns.insert(name.clone());
            feature_kinds.entry(name.clone()).or_insert(*kind);
        }
        any_realsize |= pool.declared_real_size.is_some();
        any_period |= !pool.context.period_label.is_empty();
    }

    let mut header: Vec<String> = vec![
        "companyid".into(),
        "vcfirmid".into(),
        "leadvc".into(),
        "leadornot".into(),
        "real".into(),
    ];
    if any_realsize {
        header.push("realsize".into());
    }
    if any_period {
        header.push("yearquarter".into());
    }
    header.extend(target_columns.iter().cloned());
    header.extend(feature_columns.iter().cloned());

    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    wtr.write_record(&header)?;

    for pool in pools {
        let lead_id = match pool.context.lead_profile.get("leadvc") {
            Some(FeatureValue::Identifier(id)) => id.clone(),
            _ => String::new(),
        };
        // Re-emit a lead row when the profile carries more than the bare id.
        let lead_has_features = pool
            .context
            .lead_profile
            .keys()
            .any(|k| feature_columns.contains(k));
        if lead_has_features && !lead_id.is_empty() {
            let row = render_row(
                pool,
                &header,
                &target_columns,
                &lead_id,
                &lead_id,
                true,
                false,
                |name| pool.context.lead_profile.get(name),
            );
            wtr.write_record(&row)?;
        }
        for candidate in &pool.candidates {
            let row = render_row(
                pool,
                &header,
                &target_columns,
                &candidate.firm_id,
                &lead_id,
                false,
                candidate.is_ground_truth,
                |name| candidate.features.get(name),
            );
            wtr.write_record(&row)?;
        }
    }

    let bytes = wtr.into_inner().expect("csv writer over Vec cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Saves pools to `path` in the canonical delimited form.
pub fn save_cases_to_path(pools: &[CasePool], path: &Path) -> Result<(), IngestError> {
    let text = save_cases_csv(pools)?;
    std::fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[allow(clippy::too_many_arguments)]
fn render_row<'a>(
    pool: &'a CasePool,
    header: &[String],
    target_columns: &IndexSet<String>,
    firm_id: &str,
    lead_id: &str,
    is_lead: bool,
    is_truth: bool,
    feature_of: impl Fn(&str) -> Option<&'a FeatureValue>,
) -> Vec<String> {
    header
        .iter()
        .map(|col| match col.as_str() {
            "companyid" => pool.case_id().to_string(),
            "vcfirmid" => firm_id.to_string(),
            "leadvc" => lead_id.to_string(),
            "leadornot" => if is_lead { "1" } else { "0" }.to_string(),
            "real" => if is_truth { "1" } else { "0" }.to_string(),
            "realsize" => pool
                .declared_real_size
                .map(|s| s.to_string())
                .unwrap_or_default(),
            "yearquarter" => pool.context.period_label.clone(),
            name if target_columns.contains(name) => {
                render_cell(pool.context.target_profile.get(name))
            }
            name => render_cell(feature_of(name)),
        })
        .collect()
}

fn render_cell(value: Option<&FeatureValue>) -> String {
    match value {
        None | Some(FeatureValue::Missing) => String::new(),
        Some(FeatureValue::Numeric(v)) => format!("{v}"),
        Some(FeatureValue::Text(s))
        | Some(FeatureValue::Categorical(s))
        | Some(FeatureValue::Identifier(s)) => s.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FeatureValue;

    fn sample_csv(rows_per_case: &[(&str, usize)]) -> String {
        let mut out = String::from(
            "companyid,vcfirmid,leadvc,leadornot,real,realsize,yearquarter,companystate,firmtype,pair_tie_strength,degree\n",
        );
        for (case, n) in rows_per_case {
            let truth = 2.min(*n);
            for i in 0..*n {
                let real = if i < truth { 1 } else { 0 };
                out.push_str(&format!(
                    "{case},vc_{case}_{i},lead_{case},0,{real},{truth},2019Q3,CA,Private Equity,0.{i},{i}\n"
                ));
            }
        }
        out
    }

    #[test]
    fn groups_rows_by_company_id() {
        let csv = sample_csv(&[("compA", 36), ("compB", 36)]);
        let loaded = load_delimited_from_reader(csv.as_bytes()).unwrap();
        assert_eq!(loaded.pools.len(), 2);
        assert!(loaded.pools.iter().all(|p| p.size() == 36));
        assert_eq!(loaded.report.rows_read, 72);
        assert!(loaded.report.skipped.is_empty());
        assert_eq!(loaded.pools[0].case_id(), "compA");
    }

    #[test]
    fn real_size_mismatch_is_a_hard_error() {
        let mut csv = String::from("companyid,vcfirmid,leadvc,real,realsize\n");
        for i in 0..6 {
            let real = if i < 3 { 1 } else { 0 };
            csv.push_str(&format!("compX,vc_{i},lead,{real},4\n"));
        }
        let err = load_delimited_from_reader(csv.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("compX"), "error should name the case: {msg}");
        assert!(matches!(
            err,
            IngestError::Domain(DomainError::RealSizeMismatch { .. })
        ));
    }

    #[test]
    fn undersized_case_is_skipped_and_reported() {
        let csv = sample_csv(&[("compA", 2), ("compB", 5)]);
        let loaded = load_delimited_from_reader(csv.as_bytes()).unwrap();
        assert_eq!(loaded.pools.len(), 1);
        assert_eq!(loaded.pools[0].case_id(), "compB");
        assert_eq!(loaded.report.skipped.len(), 1);
        assert_eq!(loaded.report.skipped[0].company_id, "compA");
    }

    #[test]
    fn malformed_numeric_cell_names_row_and_column() {
        let csv = "companyid,vcfirmid,real,degree\nc1,v1,0,notanumber\n";
        let err = load_delimited_from_reader(csv.as_bytes()).unwrap_err();
        match err {
            IngestError::MalformedCell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "degree");
            }
            other => panic!("expected MalformedCell, got {other:?}"),
        }
    }

    #[test]
    fn empty_numeric_cells_are_missing_not_zero() {
        let csv = "companyid,vcfirmid,real,pair_tie_strength\n\
                   c1,v1,1,\nc1,v2,0,0\nc1,v3,0,1.5\n";
        let loaded = load_delimited_from_reader(csv.as_bytes()).unwrap();
        let pool = &loaded.pools[0];
        assert_eq!(
            pool.candidates[0].features["pair_tie_strength"],
            FeatureValue::Missing
        );
        assert_eq!(
            pool.candidates[1].features["pair_tie_strength"],
            FeatureValue::Numeric(0.0)
        );
    }

    #[test]
    fn lead_row_feeds_lead_profile_and_leaves_candidates() {
        let csv = "companyid,vcfirmid,leadvc,leadornot,real,firmtype,firmstate\n\
                   c1,lead_1,lead_1,1,0,Private Equity,NY\n\
                   c1,v1,lead_1,0,1,VC,CA\n\
                   c1,v2,lead_1,0,0,VC,CA\n\
                   c1,v3,lead_1,0,0,VC,MA\n";
        let loaded = load_delimited_from_reader(csv.as_bytes()).unwrap();
        let pool = &loaded.pools[0];
        assert_eq!(pool.size(), 3);
        assert!(!pool.contains_firm("lead_1"));
        assert_eq!(
            pool.context.lead_profile["firmstate"],
            FeatureValue::Categorical("NY".into())
        );
        assert_eq!(
            pool.context.lead_profile["leadvc"],
            FeatureValue::Identifier("lead_1".into())
        );
    }

    #[test]
    fn unknown_columns_become_text_features() {
        let csv =
            "companyid,vcfirmid,real,mystery_signal\nc1,v1,0,hello\nc1,v2,0,\nc1,v3,1,world\n";
        let loaded = load_delimited_from_reader(csv.as_bytes()).unwrap();
        let pool = &loaded.pools[0];
        assert_eq!(
            pool.feature_schema
                .iter()
                .find(|(n, _)| n == "mystery_signal")
                .map(|(_, k)| *k),
            Some(FeatureKind::Text)
        );
        assert_eq!(
            pool.candidates[0].features["mystery_signal"],
            FeatureValue::Text("hello".into())
        );
        assert_eq!(
            pool.candidates[1].features["mystery_signal"],
            FeatureValue::Missing
        );
    }

    #[test]
    fn case_shape_invariant_under_row_shuffle_within_group() {
        let base = sample_csv(&[("compA", 8)]);
        let mut lines: Vec<&str> = base.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        let a = load_delimited_from_reader(base.as_bytes()).unwrap();
        let b = load_delimited_from_reader(shuffled.as_bytes()).unwrap();
        assert_eq!(a.pools.len(), b.pools.len());
        assert_eq!(a.pools[0].size(), b.pools[0].size());
        assert_eq!(a.pools[0].ground_truth, b.pools[0].ground_truth);
    }

    #[test]
    fn schema_manifest_overrides_column_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("manifest.json");
        std::fs::write(
            &manifest_path,
            r#"{"columns": {"mystery_signal": "numeric"}}"#,
        )
        .unwrap();
        let csv_path = dir.path().join("cases.csv");
        std::fs::write(
            &csv_path,
            "companyid,vcfirmid,real,mystery_signal\nc1,v1,0,1.5\nc1,v2,0,\nc1,v3,1,2\n",
        )
        .unwrap();
        let file = CaseFile {
            format: CaseFileFormat::DelimitedTable,
            path: csv_path,
            schema_manifest: Some(manifest_path),
        };
        let loaded = load_cases(&file).unwrap();
        let pool = &loaded.pools[0];
        assert_eq!(
            pool.candidates[0].features["mystery_signal"],
            FeatureValue::Numeric(1.5)
        );
        assert_eq!(
            pool.feature_schema
                .iter()
                .find(|(n, _)| n == "mystery_signal")
                .map(|(_, k)| *k),
            Some(FeatureKind::Numeric)
        );
    }

    #[test]
    fn round_trip_is_identity() {
        let csv = sample_csv(&[("compA", 6), ("compB", 4)]);
        let first = load_delimited_from_reader(csv.as_bytes()).unwrap();
        let saved = save_cases_csv(&first.pools).unwrap();
        let second = load_delimited_from_reader(saved.as_bytes()).unwrap();
        assert_eq!(first.pools, second.pools);
        // Canonical form is byte-stable.
        let saved_again = save_cases_csv(&second.pools).unwrap();
        assert_eq!(saved, saved_again);
    }
}
