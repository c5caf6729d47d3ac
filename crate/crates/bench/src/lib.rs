//! Inputs shared by the benchmarks.

use carprep_core::forest::{build_feature_table, FeatureConfig, FeatureTable};
use carprep_core::synthgen::{generate_cohort, CohortSpec};
use carprep_core::{Car, StudentModuleOutcome};

/// Default-shaped cohort with `students` students and a fixed seed.
pub fn cohort(students: usize) -> Vec<StudentModuleOutcome> {
    let mut spec = CohortSpec::default();
    spec.departments[0].student_count = students;
    generate_cohort(&spec).expect("default spec is valid")
}

pub fn car_points(records: &[StudentModuleOutcome]) -> Vec<(Car, f64)> {
    records.iter().map(|r| (r.car(), r.module_mark)).collect()
}

pub fn feature_table(students: usize) -> FeatureTable {
    build_feature_table(&cohort(students), &FeatureConfig::default()).expect("generated cohort has every year")
}
