use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use carprep_core::fixtures::{
    average_column, MarginMismatch, PublishedConfusionTable, AVERAGE_MARKS, CONFUSION_EXCLUDING_CAR,
    CONFUSION_INCLUDING_CAR,
};
use carprep_core::forest::{
    build_feature_table, compare_with_without_car, CarComparison, ConfusionMatrix, EvaluationSettings, FeatureTable,
};
use carprep_core::ingest::{ingest_any, write_refined_csv, write_transcript_csv, IngestReport, Severity};
use carprep_core::refine::{run_refinement_pipeline, RatioClassTable, RefineOptions, ScopeFit};
use carprep_core::stats::{
    class_sample, department_mean_sample, group_mean_table, two_sample_t, AssessmentMethodClass, GroupMeanTable,
    TTestResult, TTestVariant,
};
use carprep_core::{Error, MarkField, RefinedOutcome, StudentModuleOutcome};

use crate::config::{Format, RunConfig, TTestSamples};
use crate::render;
use crate::UsageError;

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes the primary result to `--output`, or standard output.
fn emit(cfg: &RunConfig, body: &str) -> anyhow::Result<()> {
    match &cfg.output {
        Some(p) => write_file(p, body.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// `<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

struct Loaded {
    records: Vec<StudentModuleOutcome>,
    refined: Option<Vec<f64>>,
    report: IngestReport,
}

fn load(cfg: &RunConfig) -> anyhow::Result<Loaded> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| UsageError("no input file given".into()))?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (records, refined, report) =
        ingest_any(BufReader::new(file), cfg.missing_policy).with_context(|| format!("reading {}", path.display()))?;
    Ok(Loaded {
        records,
        refined,
        report,
    })
}

fn warn_rejects(report: &IngestReport) {
    if report.rejected_count > 0 {
        eprintln!(
            "warning: {} input row(s) rejected; run `carprep validate` for details",
            report.rejected_count
        );
    }
}

pub fn generate(cfg: &RunConfig, spec_output: Option<&Path>) -> anyhow::Result<u8> {
    let mut spec = cfg.cohort.clone();
    spec.seed = cfg.seed;
    spec.validate().map_err(|e| UsageError(format!("invalid cohort spec: {e}")))?;
    let output = cfg
        .output
        .as_ref()
        .ok_or_else(|| UsageError("generate needs --output for the cohort CSV".into()))?;
    let records = carprep_core::synthgen::generate_cohort(&spec)?;
    let mut csv = Vec::new();
    write_transcript_csv(&mut csv, &records)?;
    write_file(output, &csv)?;
    let spec_path = spec_output.map_or_else(|| sibling(output, "spec.json"), Path::to_path_buf);
    write_file(&spec_path, json(&spec)?.as_bytes())?;
    let students: usize = spec.departments.iter().map(|d| d.student_count).sum();
    println!(
        "wrote {} records for {} students to {} and the spec to {}",
        records.len(),
        students,
        output.display(),
        spec_path.display()
    );
    Ok(0)
}

pub fn validate(cfg: &RunConfig, cleaned_output: Option<&Path>) -> anyhow::Result<u8> {
    let loaded = load(cfg)?;
    if let Some(path) = cleaned_output {
        let mut buf = Vec::new();
        write_transcript_csv(&mut buf, &loaded.records)?;
        write_file(path, &buf)?;
    }
    let body = match cfg.format {
        Format::Json => json(&loaded.report)?,
        Format::Csv => render::issues_csv(&loaded.report)?,
        Format::Text => render::ingest_text(&loaded.report),
    };
    emit(cfg, &body)?;
    let rejects = loaded.report.issues.iter().any(|i| i.severity == Severity::Reject);
    Ok(u8::from(rejects))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cell {
    pub mean: f64,
    /// Records behind the mean; unknown for published averages.
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupRow {
    pub department: String,
    pub exam_based: Option<Cell>,
    pub coursework_based: Option<Cell>,
    pub mixed: Option<Cell>,
}

impl GroupRow {
    pub fn cell(&self, class: AssessmentMethodClass) -> Option<Cell> {
        match class {
            AssessmentMethodClass::ExamBased => self.exam_based,
            AssessmentMethodClass::CourseworkBased => self.coursework_based,
            AssessmentMethodClass::Mixed => self.mixed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub comparison: String,
    pub class_a: AssessmentMethodClass,
    pub class_b: AssessmentMethodClass,
    pub result: Option<TTestResult>,
    /// Why no test was run, when `result` is absent.
    pub not_applicable: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub source: String,
    pub samples: TTestSamples,
    pub variant: TTestVariant,
    pub groups: Vec<GroupRow>,
    pub comparisons: Vec<Comparison>,
}

const COMPARISONS: [(AssessmentMethodClass, AssessmentMethodClass); 3] = [
    (AssessmentMethodClass::ExamBased, AssessmentMethodClass::CourseworkBased),
    (AssessmentMethodClass::Mixed, AssessmentMethodClass::ExamBased),
    (AssessmentMethodClass::Mixed, AssessmentMethodClass::CourseworkBased),
];

fn comparisons(sample: impl Fn(AssessmentMethodClass) -> Vec<f64>, variant: TTestVariant) -> Vec<Comparison> {
    COMPARISONS
        .iter()
        .map(|&(a, b)| {
            let (sa, sb) = (sample(a), sample(b));
            let missing: Vec<&str> = [(a, &sa), (b, &sb)]
                .iter()
                .filter(|(_, s)| s.is_empty())
                .map(|(c, _)| c.label())
                .collect();
            let (result, not_applicable) = if !missing.is_empty() {
                (None, Some(format!("no {} marks", missing.join(" or "))))
            } else {
                match two_sample_t(&sa, &sb, variant) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            Comparison {
                comparison: format!("{} vs {}", a.label(), b.label()),
                class_a: a,
                class_b: b,
                result,
                not_applicable,
            }
        })
        .collect()
}

fn group_rows(table: &GroupMeanTable) -> Vec<GroupRow> {
    table
        .iter()
        .map(|(dept, cells)| {
            let cell = |c| {
                cells.get(&c).map(|g| Cell {
                    mean: g.mean,
                    count: Some(g.count),
                })
            };
            GroupRow {
                department: dept.clone(),
                exam_based: cell(AssessmentMethodClass::ExamBased),
                coursework_based: cell(AssessmentMethodClass::CourseworkBased),
                mixed: cell(AssessmentMethodClass::Mixed),
            }
        })
        .collect()
}

fn stats_from_records(records: &[StudentModuleOutcome], cfg: &RunConfig) -> StatsReport {
    let table = group_mean_table(records);
    let comparisons = match cfg.t_test_samples {
        TTestSamples::Records => comparisons(|c| class_sample(records, c), cfg.t_test),
        TTestSamples::DepartmentMeans => comparisons(|c| department_mean_sample(&table, c), cfg.t_test),
    };
    StatsReport {
        source: "records".into(),
        samples: cfg.t_test_samples,
        variant: cfg.t_test,
        groups: group_rows(&table),
        comparisons,
    }
}

fn stats_from_fixture(cfg: &RunConfig) -> StatsReport {
    let groups = AVERAGE_MARKS
        .iter()
        .map(|d| {
            let cell = |mean| Some(Cell { mean, count: None });
            GroupRow {
                department: d.department.into(),
                exam_based: cell(d.exam_based),
                coursework_based: cell(d.coursework_based),
                mixed: cell(d.mixed),
            }
        })
        .collect();
    StatsReport {
        source: "published department averages".into(),
        samples: TTestSamples::DepartmentMeans,
        variant: cfg.t_test,
        groups,
        comparisons: comparisons(average_column, cfg.t_test),
    }
}

fn render_stats(cfg: &RunConfig, report: &StatsReport) -> anyhow::Result<String> {
    Ok(match cfg.format {
        Format::Json => json(report)?,
        Format::Csv => render::stats_csv(report)?,
        Format::Text => render::stats_text(report),
    })
}

pub fn stats(cfg: &RunConfig, from_fixture: bool) -> anyhow::Result<u8> {
    let report = if from_fixture {
        stats_from_fixture(cfg)
    } else {
        let loaded = load(cfg)?;
        warn_rejects(&loaded.report);
        if loaded.records.is_empty() {
            return Err(Error::EmptySelection {
                selection: "accepted records".into(),
            }
            .into());
        }
        stats_from_records(&loaded.records, cfg)
    };
    emit(cfg, &render_stats(cfg, &report)?)?;
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementSummary {
    pub options: RefineOptions,
    /// The input already carried refined marks, and those were refined again.
    pub refined_input: bool,
    pub n_records: usize,
    pub ratio_classes: RatioClassTable,
    pub fits: Vec<ScopeFit>,
    pub warnings: Vec<String>,
}

fn run_refine(
    cfg: &RunConfig,
    mut records: Vec<StudentModuleOutcome>,
    refined: Option<Vec<f64>>,
) -> anyhow::Result<(Vec<RefinedOutcome>, RefinementSummary)> {
    let refined_input = refined.is_some();
    let originals: Option<Vec<f64>> = refined.map(|marks| {
        records
            .iter_mut()
            .zip(marks)
            .map(|(r, m)| std::mem::replace(&mut r.module_mark, m))
            .collect()
    });
    let run = run_refinement_pipeline(&records, &cfg.refine)?;
    let mut out = run.records;
    if let Some(orig) = originals {
        for (r, m) in out.iter_mut().zip(orig) {
            r.outcome.module_mark = m;
        }
    }
    let summary = RefinementSummary {
        options: cfg.refine,
        refined_input,
        n_records: out.len(),
        ratio_classes: run.ratio_classes,
        fits: run.fits,
        warnings: run.warnings,
    };
    Ok((out, summary))
}

pub fn refine(cfg: &RunConfig, model_output: Option<&Path>) -> anyhow::Result<u8> {
    let loaded = load(cfg)?;
    warn_rejects(&loaded.report);
    let (records, summary) = run_refine(cfg, loaded.records, loaded.refined)?;
    let mut csv = Vec::new();
    write_refined_csv(&mut csv, &records)?;

    let model_path = model_output
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_deref().map(|p| sibling(p, "model.json")));
    if let Some(p) = &model_path {
        write_file(p, json(&summary)?.as_bytes())?;
    }
    let text = match cfg.format {
        Format::Json => json(&summary)?,
        Format::Csv => render::fits_csv(&summary.fits)?,
        Format::Text => render::refinement_text(&summary),
    };
    match &cfg.output {
        Some(p) => {
            write_file(p, &csv)?;
            print!("{text}");
        }
        None => {
            std::io::stdout().lock().write_all(&csv)?;
            eprint!("{text}");
        }
    }
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub settings: EvaluationSettings,
    pub mark_field: MarkField,
    pub feature_names: Vec<String>,
    pub students: usize,
    pub skipped_students: usize,
    pub runs: Vec<CarComparison>,
    pub median_auc_delta: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn feature_table(
    cfg: &RunConfig,
    records: Vec<StudentModuleOutcome>,
    refined: Option<Vec<f64>>,
) -> anyhow::Result<FeatureTable> {
    let features = cfg.features();
    let table = match (cfg.mark_field, refined) {
        (MarkField::Raw, _) => build_feature_table(&records, &features)?,
        (MarkField::Refined, Some(marks)) => {
            let refined: Vec<RefinedOutcome> = records
                .into_iter()
                .zip(marks)
                .map(|(outcome, refined_module_mark)| RefinedOutcome {
                    outcome,
                    refined_module_mark,
                })
                .collect();
            build_feature_table(&refined, &features)?
        }
        (MarkField::Refined, None) => {
            return Err(UsageError("input has no refined_module_mark column; run `carprep refine` first".into()).into())
        }
    };
    if table.rows.is_empty() {
        return Err(Error::EmptySelection {
            selection: format!(
                "students with marks in years {:?} and target year {}",
                cfg.predictor_years, cfg.target_year
            ),
        }
        .into());
    }
    if table.distinct_labels() < 2 {
        return Err(Error::Training("fewer than two degree bands in the data".into()).into());
    }
    Ok(table)
}

fn run_evaluation(cfg: &RunConfig, table: &FeatureTable) -> anyhow::Result<EvaluationSummary> {
    cfg.check()?;
    let settings = cfg.evaluation();
    let runs = (0..cfg.repeats as u64)
        .map(|k| compare_with_without_car(table, &settings, cfg.seed.wrapping_add(k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvaluationSummary {
        settings,
        mark_field: cfg.mark_field,
        feature_names: table.feature_names.clone(),
        students: table.rows.len(),
        skipped_students: table.skipped_students,
        median_auc_delta: median(runs.iter().map(|r| r.auc_delta).collect()),
        runs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureTable {
    pub title: &'static str,
    pub confusion: ConfusionMatrix,
    pub printed_trace: u32,
    pub printed_total: u32,
    /// Printed diagonal over printed total.
    pub classification_accuracy: f64,
    pub auc: f64,
    pub error_rate: f64,
    pub margin_mismatches: Vec<MarginMismatch>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureSummary {
    pub without_car: FixtureTable,
    pub with_car: FixtureTable,
    pub auc_delta: f64,
}

fn fixture_table(t: &PublishedConfusionTable) -> FixtureTable {
    FixtureTable {
        title: t.title,
        confusion: t.to_confusion_matrix(),
        printed_trace: t.printed_trace(),
        printed_total: t.grand_total,
        classification_accuracy: t.printed_accuracy(),
        auc: t.auc,
        error_rate: t.error_rate,
        margin_mismatches: t.margin_mismatches(),
    }
}

pub fn evaluate(cfg: &RunConfig, from_fixture: bool) -> anyhow::Result<u8> {
    if from_fixture {
        let summary = FixtureSummary {
            without_car: fixture_table(&CONFUSION_EXCLUDING_CAR),
            with_car: fixture_table(&CONFUSION_INCLUDING_CAR),
            auc_delta: CONFUSION_INCLUDING_CAR.auc - CONFUSION_EXCLUDING_CAR.auc,
        };
        for t in [&summary.without_car, &summary.with_car] {
            if !t.margin_mismatches.is_empty() {
                eprintln!(
                    "warning: {}: {} printed total(s) disagree with the printed cells",
                    t.title,
                    t.margin_mismatches.len()
                );
            }
        }
        let body = match cfg.format {
            Format::Json => json(&summary)?,
            Format::Csv => render::fixture_csv(&summary)?,
            Format::Text => render::fixture_text(&summary),
        };
        emit(cfg, &body)?;
        return Ok(0);
    }
    cfg.check()?;
    let loaded = load(cfg)?;
    warn_rejects(&loaded.report);
    let table = feature_table(cfg, loaded.records, loaded.refined)?;
    let summary = run_evaluation(cfg, &table)?;
    let body = match cfg.format {
        Format::Json => json(&summary)?,
        Format::Csv => render::evaluation_csv(&summary)?,
        Format::Text => render::evaluation_text(&summary),
    };
    emit(cfg, &body)?;
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub ingest: IngestReport,
    pub stats: StatsReport,
    pub refinement: RefinementSummary,
    pub evaluation: EvaluationSummary,
}

pub fn report(cfg: &RunConfig) -> anyhow::Result<u8> {
    cfg.check()?;
    let loaded = load(cfg)?;
    if loaded.records.is_empty() {
        return Err(Error::EmptySelection {
            selection: "accepted records".into(),
        }
        .into());
    }
    let stats = stats_from_records(&loaded.records, cfg);
    let (refined, refinement) = run_refine(cfg, loaded.records, loaded.refined)?;
    let (records, marks): (Vec<_>, Vec<_>) = refined
        .into_iter()
        .map(|r| (r.outcome, r.refined_module_mark))
        .unzip();
    let table = feature_table(cfg, records, Some(marks))?;
    let evaluation = run_evaluation(cfg, &table)?;
    let report = PipelineReport {
        ingest: loaded.report,
        stats,
        refinement,
        evaluation,
    };
    let body = match cfg.format {
        Format::Json => json(&report)?,
        Format::Csv => render::evaluation_csv(&report.evaluation)?,
        Format::Text => render::report_text(&report),
    };
    emit(cfg, &body)?;
    Ok(0)
}
