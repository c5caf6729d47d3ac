//! Per-student feature tables for degree-band prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{classify_band, BandingScheme, DegreeBand, MarkField, MarkRecord};

pub const CAR_FEATURE: &str = "mean_car";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub predictor_years: Vec<u8>,
    pub target_year: u8,
    pub include_car: bool,
    pub mark_field: MarkField,
    pub banding: BandingScheme,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            predictor_years: vec![1, 2],
            target_year: 3,
            include_car: true,
            mark_field: MarkField::Raw,
            banding: BandingScheme::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub student_id: String,
    pub features: Vec<f64>,
    pub label: DegreeBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub car_column: Option<usize>,
    pub rows: Vec<FeatureRow>,
    /// Students dropped for lacking a predictor or target year.
    pub skipped_students: usize,
}

#[derive(Default)]
struct StudentAcc {
    by_year: BTreeMap<u8, (f64, usize)>,
    car_sum: f64,
    module_count: usize,
}

/// One row per student (ordered by id) holding the predictor-year averages,
/// optionally the mean CAR over all of the student's modules, and the band of
/// the target-year average as label.
pub fn build_feature_table<R: MarkRecord>(records: &[R], cfg: &FeatureConfig) -> Result<FeatureTable> {
    if cfg.predictor_years.is_empty() {
        return Err(Error::Config("no predictor years".into()));
    }
    if cfg.predictor_years.contains(&cfg.target_year) {
        return Err(Error::Config(format!(
            "target year {} is also a predictor year",
            cfg.target_year
        )));
    }
    let mut students: BTreeMap<&str, StudentAcc> = BTreeMap::new();
    for rec in records {
        let o = rec.outcome();
        let mark = rec.mark(cfg.mark_field).ok_or_else(|| {
            Error::InvalidValue(format!(
                "record {}/{} has no {:?} mark",
                o.student_id, o.module_code, cfg.mark_field
            ))
        })?;
        let acc = students.entry(o.student_id.as_str()).or_default();
        let y = acc.by_year.entry(o.year_level).or_insert((0.0, 0));
        y.0 += mark;
        y.1 += 1;
        acc.car_sum += o.car().value();
        acc.module_count += 1;
    }

    let mut feature_names: Vec<String> = cfg
        .predictor_years
        .iter()
        .map(|y| format!("year{y}_average"))
        .collect();
    let car_column = cfg.include_car.then(|| {
        feature_names.push(CAR_FEATURE.to_string());
        feature_names.len() - 1
    });

    let mut rows = Vec::new();
    let mut skipped = 0;
    for (id, acc) in students {
        let avg = |y: u8| acc.by_year.get(&y).map(|(s, n)| s / *n as f64);
        let predictors: Option<Vec<f64>> = cfg.predictor_years.iter().map(|&y| avg(y)).collect();
        let (Some(mut features), Some(target)) = (predictors, avg(cfg.target_year)) else {
            skipped += 1;
            continue;
        };
        if cfg.include_car {
            features.push(acc.car_sum / acc.module_count as f64);
        }
        rows.push(FeatureRow {
            student_id: id.to_string(),
            features,
            label: classify_band(target, &cfg.banding),
        });
    }
    Ok(FeatureTable {
        feature_names,
        car_column,
        rows,
        skipped_students: skipped,
    })
}

impl FeatureTable {
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<DegreeBand> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Features with `column` replaced by a constant, so it can carry no
    /// information while the table shape stays the same.
    pub fn masked_features(&self, column: usize) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut f = r.features.clone();
                f[column] = 0.0;
                f
            })
            .collect()
    }

    pub fn distinct_labels(&self) -> usize {
        let mut seen = [false; DegreeBand::COUNT];
        for r in &self.rows {
            seen[r.label.index()] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}
