//! Text and CSV renderings of command results.

use std::fmt::Write as _;

use carprep_core::forest::EvaluationReport;
use carprep_core::ingest::IngestReport;
use carprep_core::refine::{RefinementModel, ScopeFit};
use carprep_core::stats::AssessmentMethodClass;

use crate::commands::{EvaluationSummary, FixtureSummary, FixtureTable, PipelineReport, RefinementSummary, StatsReport};

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn ingest_text(r: &IngestReport) -> String {
    let mut s = format!(
        "accepted {}, rejected {}, issues {}\n",
        r.accepted_count,
        r.rejected_count,
        r.issues.len()
    );
    for i in &r.issues {
        let _ = writeln!(s, "{i}");
    }
    s
}

pub fn issues_csv(r: &IngestReport) -> anyhow::Result<String> {
    let rows = r
        .issues
        .iter()
        .map(|i| {
            vec![
                i.row_number.to_string(),
                i.field.clone(),
                format!("{:?}", i.category),
                format!("{:?}", i.severity),
                i.detail.clone(),
            ]
        })
        .collect();
    csv_string(&["row_number", "field", "category", "severity", "detail"], rows)
}

pub fn stats_text(r: &StatsReport) -> String {
    let dept_w = r.groups.iter().map(|g| g.department.len()).max().unwrap_or(0).max(10);
    let mut s = String::from("Average module mark\n");
    let _ = write!(s, "{:<dept_w$}", "Department");
    for c in AssessmentMethodClass::TABLE_ORDER {
        let _ = write!(s, "  {:>18}", c.label());
    }
    s.push('\n');
    for g in &r.groups {
        let _ = write!(s, "{:<dept_w$}", g.department);
        for c in AssessmentMethodClass::TABLE_ORDER {
            let cell = match g.cell(c) {
                Some(cell) => match cell.count {
                    Some(n) => format!("{:.2} (n={n})", cell.mean),
                    None => format!("{:.2}", cell.mean),
                },
                None => "-".into(),
            };
            let _ = write!(s, "  {cell:>18}");
        }
        s.push('\n');
    }
    let samples = match r.samples {
        crate::config::TTestSamples::Records => "module marks",
        crate::config::TTestSamples::DepartmentMeans => "department means",
    };
    let _ = writeln!(s, "\nTwo-sample t-tests ({:?}, {samples}; source: {})", r.variant, r.source);
    for c in &r.comparisons {
        match (&c.result, &c.not_applicable) {
            (Some(t), _) => {
                let _ = writeln!(
                    s,
                    "{:<24} t = {:.4}  df = {:.4}  p = {:.6}  (means {:.2} vs {:.2}, n {} vs {})",
                    c.comparison, t.t_statistic, t.degrees_of_freedom, t.p_value_two_sided, t.mean_a, t.mean_b, t.n_a, t.n_b
                );
            }
            (None, reason) => {
                let _ = writeln!(
                    s,
                    "{:<24} not applicable ({})",
                    c.comparison,
                    reason.as_deref().unwrap_or("no data")
                );
            }
        }
    }
    s
}

/// Long-format group means, one row per populated cell.
pub fn stats_csv(r: &StatsReport) -> anyhow::Result<String> {
    let mut rows = Vec::new();
    for g in &r.groups {
        for c in AssessmentMethodClass::TABLE_ORDER {
            if let Some(cell) = g.cell(c) {
                rows.push(vec![
                    g.department.clone(),
                    c.label().to_string(),
                    cell.mean.to_string(),
                    cell.count.map(|n| n.to_string()).unwrap_or_default(),
                ]);
            }
        }
    }
    csv_string(&["department", "method", "mean_mark", "count"], rows)
}

fn model_line(name: &str, m: &RefinementModel) -> String {
    format!(
        "  {name:<9} b0 = {:.6}  b1 = {:.6}  b2 = {:.6}  R^2 = {:.6}\n",
        m.b0, m.b1, m.b2, m.r_squared
    )
}

pub fn refinement_text(r: &RefinementSummary) -> String {
    let mut s = String::new();
    if r.refined_input {
        s.push_str("input already refined: refining refined_module_mark again\n");
    }
    for f in &r.fits {
        let _ = writeln!(
            s,
            "scope {}: {:?} model selected, {} observations",
            f.scope, f.selected.model_kind, f.selected.n_observations
        );
        match (&f.linear, &f.quadratic) {
            (None, None) => s.push_str(&model_line("pinned", &f.selected)),
            (lin, quad) => {
                if let Some(m) = lin {
                    s.push_str(&model_line("linear", m));
                }
                if let Some(m) = quad {
                    s.push_str(&model_line("quadratic", m));
                }
            }
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s, "refined {} records", r.n_records);
    s
}

pub fn fits_csv(fits: &[ScopeFit]) -> anyhow::Result<String> {
    let mut rows = Vec::new();
    for f in fits {
        let candidates = [("linear", f.linear.as_ref()), ("quadratic", f.quadratic.as_ref())];
        let pinned = f.linear.is_none() && f.quadratic.is_none();
        let listed: Vec<(&str, &RefinementModel)> = if pinned {
            vec![("pinned", &f.selected)]
        } else {
            candidates.iter().filter_map(|(n, m)| m.map(|m| (*n, m))).collect()
        };
        for (name, m) in listed {
            rows.push(vec![
                f.scope.clone(),
                name.to_string(),
                (pinned || *m == f.selected).to_string(),
                m.b0.to_string(),
                m.b1.to_string(),
                m.b2.to_string(),
                m.r_squared.to_string(),
                m.n_observations.to_string(),
            ]);
        }
    }
    csv_string(
        &["scope", "model", "selected", "b0", "b1", "b2", "r_squared", "n_observations"],
        rows,
    )
}

fn report_block(s: &mut String, title: &str, r: &EvaluationReport) {
    let _ = writeln!(s, "{title}");
    s.push_str(&r.confusion.to_table_text());
    let _ = writeln!(
        s,
        "CA {:.4}  AUC {:.4}  error rate {:.4}",
        r.classification_accuracy, r.auc, r.error_rate
    );
}

pub fn evaluation_text(e: &EvaluationSummary) -> String {
    let mut s = format!(
        "{} students ({} skipped), features {}, {:?} marks, {:?} AUC averaging\n",
        e.students,
        e.skipped_students,
        e.feature_names.join(", "),
        e.mark_field,
        e.settings.averaging
    );
    for run in &e.runs {
        let _ = writeln!(
            s,
            "\nseed {}: {} training / {} test students",
            run.seed, run.with_car.n_train, run.with_car.n_test
        );
        report_block(&mut s, "Excluding CAR", &run.without_car);
        report_block(&mut s, "Including CAR", &run.with_car);
        let _ = writeln!(s, "AUC delta {:+.4}", run.auc_delta);
    }
    if e.runs.len() > 1 {
        let _ = writeln!(s, "\nmedian AUC delta over {} seeds {:+.4}", e.runs.len(), e.median_auc_delta);
    }
    s
}

pub fn evaluation_csv(e: &EvaluationSummary) -> anyhow::Result<String> {
    let mut rows = Vec::new();
    for run in &e.runs {
        for (variant, r) in [("without_car", &run.without_car), ("with_car", &run.with_car)] {
            rows.push(vec![
                run.seed.to_string(),
                variant.to_string(),
                r.n_train.to_string(),
                r.n_test.to_string(),
                r.classification_accuracy.to_string(),
                r.auc.to_string(),
                r.error_rate.to_string(),
            ]);
        }
    }
    csv_string(
        &["seed", "variant", "n_train", "n_test", "classification_accuracy", "auc", "error_rate"],
        rows,
    )
}

fn fixture_block(s: &mut String, t: &FixtureTable) {
    let _ = writeln!(s, "{}", t.title);
    s.push_str(&t.confusion.to_table_text());
    let _ = writeln!(
        s,
        "CA {:.4} ({}/{})  AUC {:.4}  error rate {:.4}",
        t.classification_accuracy, t.printed_trace, t.printed_total, t.auc, t.error_rate
    );
    for m in &t.margin_mismatches {
        let place = match m.band {
            Some(b) => format!("{:?} total for {}", m.axis, b.label()).to_lowercase(),
            None => "grand total".to_string(),
        };
        let _ = writeln!(
            s,
            "warning: printed {place} is {} but the cells sum to {}",
            m.printed, m.cell_sum
        );
    }
}

pub fn fixture_text(f: &FixtureSummary) -> String {
    let mut s = String::new();
    fixture_block(&mut s, &f.without_car);
    s.push('\n');
    fixture_block(&mut s, &f.with_car);
    let _ = writeln!(s, "\nAUC delta {:+.4}", f.auc_delta);
    s
}

pub fn fixture_csv(f: &FixtureSummary) -> anyhow::Result<String> {
    let rows = [("without_car", &f.without_car), ("with_car", &f.with_car)]
        .iter()
        .map(|(v, t)| {
            vec![
                v.to_string(),
                t.printed_trace.to_string(),
                t.printed_total.to_string(),
                t.classification_accuracy.to_string(),
                t.auc.to_string(),
                t.error_rate.to_string(),
                t.margin_mismatches.len().to_string(),
            ]
        })
        .collect();
    csv_string(
        &["variant", "trace", "total", "classification_accuracy", "auc", "error_rate", "margin_mismatches"],
        rows,
    )
}

pub fn report_text(r: &PipelineReport) -> String {
    let mut s = String::from("== Ingest ==\n");
    let _ = writeln!(
        s,
        "accepted {}, rejected {}, issues {}",
        r.ingest.accepted_count,
        r.ingest.rejected_count,
        r.ingest.issues.len()
    );
    s.push_str("\n== Marks by assessment method ==\n");
    s.push_str(&stats_text(&r.stats));
    s.push_str("\n== Refinement ==\n");
    s.push_str(&refinement_text(&r.refinement));
    s.push_str("\n== Degree-band prediction ==\n");
    s.push_str(&evaluation_text(&r.evaluation));
    s
}
