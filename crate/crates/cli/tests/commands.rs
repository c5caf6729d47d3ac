use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn carprep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carprep"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_cohort(dir: &Path, name: &str) {
    let o = carprep(dir, &["--seed", "3", "generate", "--students", "60", "--output", name]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

const HEADER: &str = "student_id,department,year_level,module_code,module_mark,exam_mark,cswk_mark,exam_weight,cswk_weight\n";

#[test]
fn generate_is_deterministic_and_validates_cleanly() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "a.csv");
    small_cohort(d.path(), "b.csv");
    let a = std::fs::read(d.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.csv")).unwrap());
    let spec = read_json(&d.path().join("a.spec.json"));
    assert_eq!(spec["seed"], 3);
    assert_eq!(spec["departments"][0]["student_count"], 60);

    let o = carprep(d.path(), &["validate", "a.csv", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["issues"].as_array().unwrap().len(), 0);
    assert_eq!(report["rejected_count"], 0);
}

#[test]
fn generate_rejects_empty_cohort() {
    let d = tempfile::tempdir().unwrap();
    let o = carprep(d.path(), &["generate", "--students", "0", "--output", "x.csv"]);
    assert_eq!(code(&o), 2);
    assert!(!d.path().join("x.csv").exists());
}

#[test]
fn generate_uses_cohort_from_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"cohort": {"departments": [{"code": "MA", "student_count": 5,
        "modules_per_student_per_year": 2, "cw_weight_classes": [0, 100], "years": [1]}],
        "seed": 0, "noise_sd": 1, "ability_mean": 60, "ability_sd": 5,
        "effect_linear": 0, "effect_quadratic": 0}}"#;
    std::fs::write(d.path().join("run.json"), cfg).unwrap();
    let o = carprep(d.path(), &["--config", "run.json", "generate", "--output", "ma.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("ma.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 5 * 2);
    assert!(text.lines().nth(1).unwrap().starts_with("MA-00000,MA,1,"));
}

#[test]
fn validate_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("bad.csv"),
        format!("{HEADER}s1,CS,1,M1,55,55,,100,0\ns2,CS,1,M1,105,,,100,0\n"),
    )
    .unwrap();
    let o = carprep(d.path(), &["validate", "bad.csv", "--format", "json"]);
    assert_eq!(code(&o), 1);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let issues = report["issues"].as_array().unwrap();
    assert_eq!(issues.len(), 1);
    assert_eq!(issues[0]["category"], "DataEntry");
    assert_eq!(issues[0]["row_number"], 2);

    std::fs::write(d.path().join("headless.csv"), "s1,CS,1,M1,55,55,,100,0\n").unwrap();
    assert_eq!(code(&carprep(d.path(), &["validate", "headless.csv"])), 2);
    assert_eq!(code(&carprep(d.path(), &["validate", "missing.csv"])), 2);
    assert_eq!(code(&carprep(d.path(), &["validate"])), 2);
}

#[test]
fn validate_writes_cleaned_csv() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("dup.csv"),
        format!("{HEADER}s1,CS,1,M1,55,55,,100,0\ns1,CS,1,M1,55,55,,100,0\n"),
    )
    .unwrap();
    let o = carprep(d.path(), &["validate", "dup.csv", "--cleaned-output", "clean.csv"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("accepted 1, rejected 1, issues 1"));
    let clean = std::fs::read_to_string(d.path().join("clean.csv")).unwrap();
    assert_eq!(clean, format!("{HEADER}s1,CS,1,M1,55,55,,100,0\n"));
}

#[test]
fn stats_from_fixture_reproduces_quoted_t() {
    let d = tempfile::tempdir().unwrap();
    let o = carprep(d.path(), &["stats", "--from-fixture", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let first = &v["comparisons"][0];
    assert_eq!(first["comparison"], "Exam vs Coursework");
    assert!((first["result"]["t"].as_f64().unwrap() + 5.06).abs() < 0.01);
    assert_eq!(first["result"]["df"], 10.0);
    assert_eq!(v["groups"].as_array().unwrap().len(), 6);
}

#[test]
fn stats_text_column_order() {
    let d = tempfile::tempdir().unwrap();
    let o = carprep(d.path(), &["stats", "--from-fixture"]);
    let text = stdout(&o);
    let header = text.lines().nth(1).unwrap();
    let pos: Vec<usize> = ["Exam", "Coursework", "Mixed"].iter().map(|h| header.find(h).unwrap()).collect();
    assert!(pos[0] < pos[1] && pos[1] < pos[2], "{header}");
}

#[test]
fn stats_on_all_exam_cohort_reports_not_applicable() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("exam.csv"),
        format!("{HEADER}s1,CS,1,M1,55,55,,100,0\ns2,CS,1,M1,65,65,,100,0\ns3,CS,1,M2,60,60,,100,0\n"),
    )
    .unwrap();
    let o = carprep(d.path(), &["stats", "exam.csv", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &v["groups"][0];
    assert!(row["exam_based"].is_object());
    assert!(row["coursework_based"].is_null() && row["mixed"].is_null());
    for c in v["comparisons"].as_array().unwrap() {
        assert!(c["result"].is_null());
        assert!(c["not_applicable"].is_string());
    }
    let text = stdout(&carprep(d.path(), &["stats", "exam.csv"]));
    assert_eq!(text.matches("not applicable").count(), 3);
}

#[test]
fn refine_with_published_coefficients() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    let o = carprep(d.path(), &["refine", "c.csv", "--published-coefficients", "--output", "r.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("r.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("{},refined_module_mark", HEADER.trim_end()));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 10);
        let mm: f64 = f[4].parse().unwrap();
        let c = f[8].parse::<f64>().unwrap() / 100.0;
        let rmm: f64 = f[9].parse().unwrap();
        let want = if c == 0.0 { mm } else { mm - (12.77 * c + -5.873 * c * c) };
        assert_eq!(rmm, want, "{line}");
    }
    let model = read_json(&d.path().join("r.model.json"));
    assert_eq!(model["fits"][0]["scope"], "published");
    assert_eq!(model["fits"][0]["selected"]["b1"], 12.77);
}

#[test]
fn refine_on_own_output_is_flat() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    let first = carprep(d.path(), &["refine", "c.csv", "--output", "r1.csv"]);
    assert_eq!(code(&first), 0);
    assert!(stdout(&first).contains("Quadratic model selected"));
    let second = carprep(d.path(), &["refine", "r1.csv", "--output", "r2.csv", "--model-output", "m2.json"]);
    assert_eq!(code(&second), 0);
    let model = read_json(&d.path().join("m2.json"));
    assert_eq!(model["refined_input"], true);
    for key in ["linear", "quadratic"] {
        let m = &model["fits"][0][key];
        assert!(m["b1"].as_f64().unwrap().abs() <= 1e-8);
        assert!(m["b2"].as_f64().unwrap().abs() <= 1e-8);
    }
    let r2 = std::fs::read_to_string(d.path().join("r2.csv")).unwrap();
    assert_eq!(r2.lines().next().unwrap().matches("refined_module_mark").count(), 1);
}

#[test]
fn refine_fit_failure_exits_1() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.csv"), format!("{HEADER}s1,CS,1,M1,120,,,100,0\n")).unwrap();
    let o = carprep(d.path(), &["refine", "bad.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn evaluate_from_fixture_prints_published_accuracies() {
    let d = tempfile::tempdir().unwrap();
    let o = carprep(d.path(), &["evaluate", "--from-fixture"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("CA 0.5211 (148/284)"), "{text}");
    assert!(text.contains("CA 0.6232 (177/284)"));
    assert!(text.contains("AUC 0.9304  error rate 0.0696"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disagree"));
}

#[test]
fn evaluate_on_generated_cohort() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    let o = carprep(
        d.path(),
        &["evaluate", "c.csv", "--trees", "20", "--repeats", "3", "--test-fraction", "0.5", "--format", "json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    assert_eq!(runs[0]["seed"], 42);
    assert_eq!(runs[2]["seed"], 44);
    for r in runs {
        for variant in ["with_car", "without_car"] {
            let rep = &r[variant];
            assert_eq!(rep["n_test"], 30);
            let auc = rep["auc"].as_f64().unwrap();
            assert_eq!(rep["error_rate"].as_f64().unwrap(), 1.0 - auc);
        }
    }
    assert_eq!(v["settings"]["forest"]["tree_count"], 20);
}

#[test]
fn evaluate_refined_field_needs_refined_input() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    assert_eq!(code(&carprep(d.path(), &["evaluate", "c.csv", "--mark-field", "refined"])), 2);
}

#[test]
fn evaluate_single_band_exits_1() {
    let d = tempfile::tempdir().unwrap();
    let mut body = String::from(HEADER);
    for s in 0..10 {
        for y in 1..=3 {
            body.push_str(&format!("s{s},CS,{y},M{y},{},,,100,0\n", 72 + s));
        }
    }
    std::fs::write(d.path().join("firsts.csv"), body).unwrap();
    let o = carprep(d.path(), &["evaluate", "firsts.csv", "--trees", "5"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_merging_and_errors() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    std::fs::write(
        d.path().join("run.json"),
        r#"{"input": "c.csv", "seed": 9, "forest": {"tree_count": 10}, "test_fraction": 0.4, "format": "json"}"#,
    )
    .unwrap();
    let o = carprep(d.path(), &["--config", "run.json", "evaluate", "--trees", "12"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["runs"][0]["seed"], 9);
    assert_eq!(v["settings"]["forest"]["tree_count"], 12);
    assert_eq!(v["settings"]["test_fraction"], 0.4);

    std::fs::write(d.path().join("typo.json"), r#"{"test_fractoin": 0.4}"#).unwrap();
    assert_eq!(code(&carprep(d.path(), &["--config", "typo.json", "stats", "c.csv"])), 2);
    assert_eq!(code(&carprep(d.path(), &["--config", "none.json", "stats", "c.csv"])), 2);
    assert_eq!(code(&carprep(d.path(), &["evaluate", "c.csv", "--test-fraction", "1.5"])), 2);
    assert_eq!(code(&carprep(d.path(), &["frobnicate"])), 2);
}

#[test]
fn report_runs_whole_pipeline() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    let o = carprep(d.path(), &["report", "c.csv", "--trees", "20", "--format", "json", "--output", "report.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&d.path().join("report.json"));
    for key in ["ingest", "stats", "refinement", "evaluation"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["refinement"]["fits"][0]["selected"]["model_kind"], "quadratic");
    let text = stdout(&carprep(d.path(), &["report", "c.csv", "--trees", "20"]));
    for section in ["== Ingest ==", "== Refinement ==", "== Degree-band prediction =="] {
        assert!(text.contains(section));
    }
}

#[test]
fn csv_formats_are_parseable() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path(), "c.csv");
    let cases: [&[&str]; 4] = [
        &["stats", "c.csv", "--format", "csv"],
        &["evaluate", "c.csv", "--trees", "10", "--format", "csv"],
        &["evaluate", "--from-fixture", "--format", "csv"],
        &["refine", "c.csv", "--output", "r.csv", "--format", "csv"],
    ];
    for args in cases {
        let o = carprep(d.path(), args);
        assert_eq!(code(&o), 0);
        let text = stdout(&o);
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.len() >= 2, "{args:?}: {text}");
        assert!(widths.iter().all(|w| *w == widths[0]), "{args:?}: {text}");
    }
}
