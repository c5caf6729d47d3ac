//! Transcript CSV ingestion and cleaning.
//!
//! Rows are validated one at a time; a bad row is rejected and recorded as a
//! [`ValidationIssue`], never fatal. Only unreadable input or a malformed
//! header abort a parse. No value is ever imputed.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{
    AssessmentWeighting, RefinedOutcome, StudentModuleOutcome, MAX_YEAR_LEVEL,
};

/// Column order of the canonical transcript CSV.
pub const TRANSCRIPT_COLUMNS: [&str; 9] = [
    "student_id",
    "department",
    "year_level",
    "module_code",
    "module_mark",
    "exam_mark",
    "cswk_mark",
    "exam_weight",
    "cswk_weight",
];

/// Extra trailing column carried by refined transcripts.
pub const REFINED_COLUMN: &str = "refined_module_mark";

/// Largest tolerated gap between the module mark and the weighted mean of its
/// component marks before a consistency warning is raised.
pub const COMPONENT_TOLERANCE: f64 = 1.0;

/// Source-of-error class of an ingest problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IssueCategory {
    DataEntry,
    Measurement,
    Distillation,
    DataIntegration,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Reject,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// 1-based data row (the header is row 0) or record ordinal.
    pub row_number: usize,
    pub field: String,
    pub category: IssueCategory,
    pub detail: String,
    pub severity: Severity,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {} [{:?}/{:?}] {}: {}",
            self.row_number, self.severity, self.category, self.field, self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub issues: Vec<ValidationIssue>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted_count + self.rejected_count
    }

    pub fn has_rejects(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Reject)
    }

    /// Appends a later stage's report. Counts are taken from `later`, which
    /// sees the earlier stage's survivors as its input.
    pub fn merge_stage(&mut self, later: IngestReport) {
        self.rejected_count += later.rejected_count;
        self.accepted_count = later.accepted_count;
        self.issues.extend(later.issues);
    }
}

/// What to do with records missing the mark of a weighted component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    DropRecord,
    #[default]
    FlagOnly,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" | "drop_record" | "drop-record" => Ok(MissingPolicy::DropRecord),
            "flag" | "flag_only" | "flag-only" => Ok(MissingPolicy::FlagOnly),
            other => Err(Error::Config(format!("unknown missing policy {other:?}"))),
        }
    }
}

/// Parsed rows plus the optional refined mark column.
struct ParsedRows {
    rows: Vec<(StudentModuleOutcome, Option<f64>)>,
    report: IngestReport,
    has_refined: bool,
}

struct RowIssue {
    field: &'static str,
    category: IssueCategory,
    detail: String,
}

impl RowIssue {
    fn new(field: &'static str, category: IssueCategory, detail: impl Into<String>) -> Self {
        Self {
            field,
            category,
            detail: detail.into(),
        }
    }
}

fn check_header(headers: &csv::StringRecord) -> Result<bool> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    let base = &TRANSCRIPT_COLUMNS[..];
    if got == base {
        return Ok(false);
    }
    if got.len() == base.len() + 1 && got[..base.len()] == *base && got[base.len()] == REFINED_COLUMN {
        return Ok(true);
    }
    Err(Error::Schema(format!(
        "expected header `{}`[,{REFINED_COLUMN}], got `{}`",
        TRANSCRIPT_COLUMNS.join(","),
        got.join(",")
    )))
}

fn parse_rows<R: Read>(input: R) -> Result<ParsedRows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(e) => return Err(Error::Schema(format!("unreadable header: {e}"))),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::Schema("missing header".into()));
    }
    let has_refined = check_header(&headers)?;
    let width = headers.len();

    let mut rows = Vec::new();
    let mut report = IngestReport::default();
    for (i, rec) in reader.records().enumerate() {
        let row_number = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(e) => {
                report.rejected_count += 1;
                report.issues.push(ValidationIssue {
                    row_number,
                    field: "*".into(),
                    category: IssueCategory::DataEntry,
                    detail: format!("unparseable row: {e}"),
                    severity: Severity::Reject,
                });
                continue;
            }
        };
        if rec.len() != width {
            report.rejected_count += 1;
            report.issues.push(ValidationIssue {
                row_number,
                field: "*".into(),
                category: IssueCategory::DataEntry,
                detail: format!("expected {width} fields, found {}", rec.len()),
                severity: Severity::Reject,
            });
            continue;
        }
        match parse_row(&rec, has_refined) {
            Ok((outcome, refined, warnings)) => {
                report.accepted_count += 1;
                report.issues.extend(warnings.into_iter().map(|w| ValidationIssue {
                    row_number,
                    field: w.field.into(),
                    category: w.category,
                    detail: w.detail,
                    severity: Severity::Warn,
                }));
                rows.push((outcome, refined));
            }
            Err(errs) => {
                report.rejected_count += 1;
                report.issues.extend(errs.into_iter().map(|e| ValidationIssue {
                    row_number,
                    field: e.field.into(),
                    category: e.category,
                    detail: e.detail,
                    severity: Severity::Reject,
                }));
            }
        }
    }
    Ok(ParsedRows {
        rows,
        report,
        has_refined,
    })
}

fn required<'a>(
    rec: &'a csv::StringRecord,
    idx: usize,
    errs: &mut Vec<RowIssue>,
) -> Option<&'a str> {
    let v = rec[idx].trim();
    if v.is_empty() {
        errs.push(RowIssue::new(
            TRANSCRIPT_COLUMNS.get(idx).copied().unwrap_or(REFINED_COLUMN),
            IssueCategory::Missing,
            "required value is empty",
        ));
        None
    } else {
        Some(v)
    }
}

fn parse_mark(field: &'static str, text: &str, errs: &mut Vec<RowIssue>) -> Option<f64> {
    match text.parse::<f64>() {
        Ok(v) if !v.is_finite() => {
            errs.push(RowIssue::new(
                field,
                IssueCategory::Measurement,
                format!("non-finite value {text:?}"),
            ));
            None
        }
        Ok(v) if !(0.0..=100.0).contains(&v) => {
            errs.push(RowIssue::new(
                field,
                IssueCategory::DataEntry,
                format!("out of range: {text} not in [0, 100]"),
            ));
            None
        }
        Ok(v) => Some(v),
        Err(_) => {
            errs.push(RowIssue::new(
                field,
                IssueCategory::DataEntry,
                format!("not a number: {text:?}"),
            ));
            None
        }
    }
}

fn parse_weight(field: &'static str, text: &str, errs: &mut Vec<RowIssue>) -> Option<u8> {
    match text.parse::<u8>() {
        Ok(v) if v <= 100 => Some(v),
        Ok(v) => {
            errs.push(RowIssue::new(
                field,
                IssueCategory::DataEntry,
                format!("out of range: {v} not in [0, 100]"),
            ));
            None
        }
        Err(_) => {
            errs.push(RowIssue::new(
                field,
                IssueCategory::DataEntry,
                format!("weight must be an integer percentage, got {text:?}"),
            ));
            None
        }
    }
}

type RowOk = (StudentModuleOutcome, Option<f64>, Vec<RowIssue>);

fn parse_row(
    rec: &csv::StringRecord,
    has_refined: bool,
) -> std::result::Result<RowOk, Vec<RowIssue>> {
    let mut errs = Vec::new();
    let mut warns = Vec::new();

    let student_id = required(rec, 0, &mut errs);
    let department = required(rec, 1, &mut errs);
    let year_level = required(rec, 2, &mut errs).and_then(|t| match t.parse::<u8>() {
        Ok(y) if y <= MAX_YEAR_LEVEL => Some(y),
        _ => {
            errs.push(RowIssue::new(
                "year_level",
                IssueCategory::DataEntry,
                format!("year level {t:?} not in 0..={MAX_YEAR_LEVEL}"),
            ));
            None
        }
    });
    let module_code = required(rec, 3, &mut errs);
    let module_mark = required(rec, 4, &mut errs).and_then(|t| parse_mark("module_mark", t, &mut errs));
    let exam_text = rec[5].trim();
    let cswk_text = rec[6].trim();
    let exam_mark = (!exam_text.is_empty())
        .then(|| parse_mark("exam_mark", exam_text, &mut errs))
        .flatten();
    let cswk_mark = (!cswk_text.is_empty())
        .then(|| parse_mark("cswk_mark", cswk_text, &mut errs))
        .flatten();
    let exam_weight = required(rec, 7, &mut errs).and_then(|t| parse_weight("exam_weight", t, &mut errs));
    let cswk_weight = required(rec, 8, &mut errs).and_then(|t| parse_weight("cswk_weight", t, &mut errs));

    let weighting = match (exam_weight, cswk_weight) {
        (Some(e), Some(c)) => match AssessmentWeighting::new(e, c) {
            Ok(w) => Some(w),
            Err(_) => {
                errs.push(RowIssue::new(
                    "cswk_weight",
                    IssueCategory::DataEntry,
                    format!("weights sum to {}, not 100", u16::from(e) + u16::from(c)),
                ));
                None
            }
        },
        _ => None,
    };

    if let Some(w) = weighting {
        if !exam_text.is_empty() && w.exam_weight() == 0 {
            errs.push(RowIssue::new(
                "exam_mark",
                IssueCategory::Distillation,
                "exam mark present on a module with zero exam weight",
            ));
        }
        if !cswk_text.is_empty() && w.coursework_weight() == 0 {
            errs.push(RowIssue::new(
                "cswk_mark",
                IssueCategory::Distillation,
                "coursework mark present on a module with zero coursework weight",
            ));
        }
    }

    let refined = if has_refined {
        required(rec, TRANSCRIPT_COLUMNS.len(), &mut errs).and_then(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                errs.push(RowIssue::new(
                    REFINED_COLUMN,
                    IssueCategory::DataEntry,
                    format!("not a finite number: {t:?}"),
                ));
                None
            }
        })
    } else {
        None
    };

    if !errs.is_empty() {
        return Err(errs);
    }
    let (Some(student_id), Some(department), Some(year_level), Some(module_code), Some(module_mark), Some(weighting)) =
        (student_id, department, year_level, module_code, module_mark, weighting)
    else {
        unreachable!("every missing field records an issue");
    };

    // Consistency of MM with its components, when all weighted components are present.
    let exam_share = f64::from(weighting.exam_weight()) / 100.0;
    let cswk_share = f64::from(weighting.coursework_weight()) / 100.0;
    let components = match (weighting.exam_weight(), weighting.coursework_weight()) {
        (0, _) => cswk_mark.map(|c| c * cswk_share),
        (_, 0) => exam_mark.map(|e| e * exam_share),
        _ => exam_mark.zip(cswk_mark).map(|(e, c)| e * exam_share + c * cswk_share),
    };
    if let Some(expected) = components {
        if (expected - module_mark).abs() > COMPONENT_TOLERANCE {
            warns.push(RowIssue::new(
                "module_mark",
                IssueCategory::Distillation,
                format!("module mark {module_mark} differs from weighted components {expected:.3}"),
            ));
        }
    }

    let outcome = StudentModuleOutcome {
        student_id: student_id.to_string(),
        department: department.to_string(),
        year_level,
        module_code: module_code.to_string(),
        module_mark,
        exam_mark,
        cswk_mark,
        weighting,
    };
    Ok((outcome, if has_refined { refined } else { None }, warns))
}

/// Parses a transcript CSV. A trailing `refined_module_mark` column is
/// accepted and ignored.
pub fn parse_transcript_csv<R: Read>(input: R) -> Result<(Vec<StudentModuleOutcome>, IngestReport)> {
    let parsed = parse_rows(input)?;
    Ok((parsed.rows.into_iter().map(|(o, _)| o).collect(), parsed.report))
}

/// Parses a refined transcript CSV; the `refined_module_mark` column is required.
pub fn parse_refined_csv<R: Read>(input: R) -> Result<(Vec<RefinedOutcome>, IngestReport)> {
    let parsed = parse_rows(input)?;
    if !parsed.has_refined {
        return Err(Error::Schema(format!("missing `{REFINED_COLUMN}` column")));
    }
    let rows = parsed
        .rows
        .into_iter()
        .map(|(outcome, r)| RefinedOutcome {
            outcome,
            refined_module_mark: r.expect("refined column present"),
        })
        .collect();
    Ok((rows, parsed.report))
}

/// Parses either schema, returning refined marks when the column is present.
pub fn parse_any_csv<R: Read>(
    input: R,
) -> Result<(Vec<StudentModuleOutcome>, Option<Vec<f64>>, IngestReport)> {
    let parsed = parse_rows(input)?;
    let has_refined = parsed.has_refined;
    let (records, refined): (Vec<_>, Vec<_>) = parsed.rows.into_iter().unzip();
    let refined = has_refined.then(|| refined.into_iter().map(|r| r.expect("refined column present")).collect());
    Ok((records, refined, parsed.report))
}

fn missing_component(rec: &StudentModuleOutcome) -> Option<&'static str> {
    if rec.weighting.exam_weight() > 0 && rec.exam_mark.is_none() {
        Some("exam_mark")
    } else if rec.weighting.coursework_weight() > 0 && rec.cswk_mark.is_none() {
        Some("cswk_mark")
    } else {
        None
    }
}

/// Drops or flags records that lack the mark of a weighted component.
pub fn apply_missing_policy(
    records: Vec<StudentModuleOutcome>,
    policy: MissingPolicy,
) -> (Vec<StudentModuleOutcome>, IngestReport) {
    let mut report = IngestReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let Some(field) = missing_component(&rec) else {
            kept.push(rec);
            continue;
        };
        let detail = format!(
            "{field} absent for module {} (exam {}%, coursework {}%)",
            rec.module_code,
            rec.weighting.exam_weight(),
            rec.weighting.coursework_weight()
        );
        match policy {
            MissingPolicy::DropRecord => {
                report.issues.push(ValidationIssue {
                    row_number: i + 1,
                    field: field.into(),
                    category: IssueCategory::Missing,
                    detail,
                    severity: Severity::Reject,
                });
                report.rejected_count += 1;
            }
            MissingPolicy::FlagOnly => {
                report.issues.push(ValidationIssue {
                    row_number: i + 1,
                    field: field.into(),
                    category: IssueCategory::Missing,
                    detail,
                    severity: Severity::Warn,
                });
                kept.push(rec);
            }
        }
    }
    report.accepted_count = kept.len();
    (kept, report)
}

/// Collapses exact duplicates of `(student_id, module_code, year_level)` and
/// rejects every record of a key whose duplicates disagree.
pub fn deduplicate(records: Vec<StudentModuleOutcome>) -> (Vec<StudentModuleOutcome>, IngestReport) {
    let mut groups: HashMap<(&str, &str, u8), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry((r.student_id.as_str(), r.module_code.as_str(), r.year_level))
            .or_default()
            .push(i);
    }
    let mut keep = vec![true; records.len()];
    let mut issues = Vec::new();
    for idxs in groups.values().filter(|v| v.len() > 1) {
        let first = &records[idxs[0]];
        let identical = idxs[1..].iter().all(|&j| records[j] == *first);
        if identical {
            for &j in &idxs[1..] {
                keep[j] = false;
                issues.push(ValidationIssue {
                    row_number: j + 1,
                    field: "*".into(),
                    category: IssueCategory::DataIntegration,
                    detail: format!("exact duplicate of record {}", idxs[0] + 1),
                    severity: Severity::Warn,
                });
            }
        } else {
            for &j in idxs {
                keep[j] = false;
                issues.push(ValidationIssue {
                    row_number: j + 1,
                    field: "module_mark".into(),
                    category: IssueCategory::DataIntegration,
                    detail: format!(
                        "conflicting duplicate for student {} module {} year {}",
                        first.student_id, first.module_code, first.year_level
                    ),
                    severity: Severity::Reject,
                });
            }
        }
    }
    issues.sort_by_key(|i| i.row_number);
    let total = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    let report = IngestReport {
        accepted_count: kept.len(),
        rejected_count: total - kept.len(),
        issues,
    };
    (kept, report)
}

/// Full cleaning pass: parse, apply the missing policy, deduplicate.
pub fn ingest<R: Read>(
    input: R,
    policy: MissingPolicy,
) -> Result<(Vec<StudentModuleOutcome>, IngestReport)> {
    let (records, mut report) = parse_transcript_csv(input)?;
    let (records, missing) = apply_missing_policy(records, policy);
    report.merge_stage(missing);
    let (records, dedup) = deduplicate(records);
    report.merge_stage(dedup);
    Ok((records, report))
}

/// [`ingest`] for either schema. When the refined column is present, each
/// surviving record keeps the refined mark of its source row.
pub fn ingest_any<R: Read>(
    input: R,
    policy: MissingPolicy,
) -> Result<(Vec<StudentModuleOutcome>, Option<Vec<f64>>, IngestReport)> {
    let (records, refined, mut report) = parse_any_csv(input)?;
    let by_key: Option<HashMap<(String, String, u8), f64>> = refined.map(|marks| {
        let mut m = HashMap::new();
        for (r, v) in records.iter().zip(marks) {
            m.entry((r.student_id.clone(), r.module_code.clone(), r.year_level)).or_insert(v);
        }
        m
    });
    let (records, missing) = apply_missing_policy(records, policy);
    report.merge_stage(missing);
    let (records, dedup) = deduplicate(records);
    report.merge_stage(dedup);
    let refined = by_key.map(|m| {
        records
            .iter()
            .map(|r| m[&(r.student_id.clone(), r.module_code.clone(), r.year_level)])
            .collect()
    });
    Ok((records, refined, report))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|m| m.to_string()).unwrap_or_default()
}

fn row_fields(r: &StudentModuleOutcome) -> [String; 9] {
    [
        r.student_id.clone(),
        r.department.clone(),
        r.year_level.to_string(),
        r.module_code.clone(),
        r.module_mark.to_string(),
        fmt_opt(r.exam_mark),
        fmt_opt(r.cswk_mark),
        r.weighting.exam_weight().to_string(),
        r.weighting.coursework_weight().to_string(),
    ]
}

/// Writes records in the canonical schema. Marks use the shortest
/// round-tripping decimal form, so re-ingesting reproduces them exactly.
pub fn write_transcript_csv<W: Write>(out: W, records: &[StudentModuleOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSCRIPT_COLUMNS)?;
    for r in records {
        w.write_record(row_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical schema plus a trailing `refined_module_mark` column.
pub fn write_refined_csv<W: Write>(out: W, records: &[RefinedOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSCRIPT_COLUMNS.iter().copied().chain([REFINED_COLUMN]))?;
    for r in records {
        let fields = row_fields(&r.outcome);
        w.write_record(fields.iter().map(String::as_str).chain([r.refined_module_mark.to_string().as_str()]))?;
    }
    w.flush()?;
    Ok(())
}
