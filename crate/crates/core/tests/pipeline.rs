use carprep_core::forest::{
    build_feature_table, compare_with_without_car, EvaluationSettings, FeatureConfig, ForestParams,
};
use carprep_core::ingest::{ingest, parse_refined_csv, write_refined_csv, write_transcript_csv, MissingPolicy};
use carprep_core::refine::{fit_polynomial, run_refinement_pipeline, RefineOptions};
use carprep_core::synthgen::{generate_cohort, CohortSpec, DepartmentProfile, CS_WEIGHT_CLASSES};
use carprep_core::{compute_car, AssessmentWeighting, Car, MarkField, StudentModuleOutcome};

fn small_cohort(seed: u64, students: usize) -> CohortSpec {
    CohortSpec {
        departments: vec![DepartmentProfile {
            code: "CS".into(),
            student_count: students,
            modules_per_student_per_year: 8,
            cw_weight_classes: CS_WEIGHT_CLASSES.to_vec(),
            years: vec![1, 2, 3],
        }],
        seed,
        ..CohortSpec::default()
    }
}

fn refined_points(records: &[carprep_core::RefinedOutcome]) -> Vec<(Car, f64)> {
    records
        .iter()
        .map(|r| (compute_car(r.outcome.weighting), r.refined_module_mark))
        .collect()
}

#[test]
fn generated_csv_ingests_cleanly() {
    let records = generate_cohort(&small_cohort(5, 40)).unwrap();
    let mut buf = Vec::new();
    write_transcript_csv(&mut buf, &records).unwrap();
    let (back, report) = ingest(buf.as_slice(), MissingPolicy::DropRecord).unwrap();
    assert!(report.issues.is_empty(), "{:?}", &report.issues[..report.issues.len().min(3)]);
    assert_eq!(report.accepted_count, records.len());
    assert_eq!(back, records);
}

#[test]
fn refit_after_refinement_is_flat() {
    for seed in 0..5 {
        let records = generate_cohort(&small_cohort(seed, 100)).unwrap();
        let run = run_refinement_pipeline(&records, &RefineOptions::default()).unwrap();
        let degree = run.fits[0].selected.model_kind.degree();
        let refit = fit_polynomial(&refined_points(&run.records), degree).unwrap();
        assert!(refit.b1.abs() <= 1e-8, "b1 {}", refit.b1);
        assert!(refit.b2.abs() <= 1e-8, "b2 {}", refit.b2);
        assert!((refit.b0 - run.fits[0].selected.b0).abs() < 1e-8);
    }
}

#[test]
fn refined_csv_round_trip() {
    let records = generate_cohort(&small_cohort(9, 20)).unwrap();
    let run = run_refinement_pipeline(&records, &RefineOptions { published_coefficients: true, ..Default::default() }).unwrap();
    let mut buf = Vec::new();
    write_refined_csv(&mut buf, &run.records).unwrap();
    let (back, report) = parse_refined_csv(buf.as_slice()).unwrap();
    assert!(!report.has_rejects());
    assert_eq!(back, run.records);
}

#[test]
fn refinement_removes_generated_effect() {
    let records = generate_cohort(&small_cohort(3, 400)).unwrap();
    let raw: Vec<(Car, f64)> = records.iter().map(|r| (r.car(), r.module_mark)).collect();
    let before = fit_polynomial(&raw, 2).unwrap();
    assert!(before.b1 > 5.0, "generated effect should be visible, b1 = {}", before.b1);
    let run = run_refinement_pipeline(&records, &RefineOptions::default()).unwrap();
    let after = fit_polynomial(&refined_points(&run.records), 2).unwrap();
    assert!(after.b1.abs() < 1e-8 && after.b2.abs() < 1e-8);
}

fn constant_car_cohort() -> Vec<StudentModuleOutcome> {
    let w = AssessmentWeighting::from_coursework(30).unwrap();
    let mut out = Vec::new();
    for s in 0..120usize {
        let ability = 35.0 + (s * 37 % 50) as f64;
        for year in 1..=3u8 {
            for m in 0..4usize {
                let wobble = ((s * 13 + m * 7 + usize::from(year) * 3) % 11) as f64 - 5.0;
                out.push(StudentModuleOutcome {
                    student_id: format!("S{s:04}"),
                    department: "CS".into(),
                    year_level: year,
                    module_code: format!("M{year}{m}"),
                    module_mark: (ability + wobble).clamp(0.0, 100.0),
                    exam_mark: None,
                    cswk_mark: None,
                    weighting: w,
                });
            }
        }
    }
    out
}

#[test]
fn masking_a_constant_car_column_changes_nothing() {
    let table = build_feature_table(&constant_car_cohort(), &FeatureConfig::default()).unwrap();
    let car = table.rows[0].features[2];
    assert!((car - 0.3).abs() < 1e-12);
    assert!(table.rows.iter().all(|r| r.features[2] == car));
    let settings = EvaluationSettings {
        forest: ForestParams { tree_count: 25, ..Default::default() },
        ..Default::default()
    };
    let cmp = compare_with_without_car(&table, &settings, 11).unwrap();
    assert_eq!(cmp.with_car, cmp.without_car);
    assert_eq!(cmp.auc_delta, 0.0);
}

#[test]
fn comparison_is_deterministic_and_consistent() {
    let records = generate_cohort(&small_cohort(21, 150)).unwrap();
    let cfg = FeatureConfig { mark_field: MarkField::Raw, ..Default::default() };
    let table = build_feature_table(&records, &cfg).unwrap();
    let settings = EvaluationSettings {
        forest: ForestParams { tree_count: 30, ..Default::default() },
        ..Default::default()
    };
    let a = compare_with_without_car(&table, &settings, 4).unwrap();
    let b = compare_with_without_car(&table, &settings, 4).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for r in [&a.with_car, &a.without_car] {
        assert_eq!(r.error_rate, 1.0 - r.auc);
        assert_eq!(r.classification_accuracy, r.confusion.trace() as f64 / r.confusion.total() as f64);
        assert_eq!(r.confusion.total() as usize, r.n_test);
        assert_eq!(r.n_test + r.n_train, table.rows.len());
    }
}
