//! Run configuration: defaults, then a JSON file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use carprep_core::forest::{AucAveraging, EvaluationSettings, FeatureConfig, ForestParams};
use carprep_core::ingest::MissingPolicy;
use carprep_core::refine::RefineOptions;
use carprep_core::stats::TTestVariant;
use carprep_core::synthgen::CohortSpec;
use carprep_core::{BandingScheme, MarkField};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Text,
}

/// Which observations feed the t-tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TTestSamples {
    /// Every module mark of the class.
    #[default]
    Records,
    /// One mean per department.
    DepartmentMeans,
}

/// Every knob of a run. Unknown keys in the JSON file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub format: Format,
    pub missing_policy: MissingPolicy,
    pub banding: BandingScheme,
    pub refine: RefineOptions,
    pub forest: ForestParams,
    pub test_fraction: f64,
    pub averaging: AucAveraging,
    pub mark_field: MarkField,
    pub predictor_years: Vec<u8>,
    pub target_year: u8,
    /// Number of consecutive seeds, starting at `seed`, that `evaluate` runs.
    pub repeats: usize,
    pub t_test: TTestVariant,
    pub t_test_samples: TTestSamples,
    /// Cohort for `generate`; its seed is replaced by `seed`.
    pub cohort: CohortSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let features = FeatureConfig::default();
        let eval = EvaluationSettings::default();
        Self {
            input: None,
            output: None,
            seed: DEFAULT_SEED,
            format: Format::default(),
            missing_policy: MissingPolicy::default(),
            banding: features.banding,
            refine: RefineOptions::default(),
            forest: ForestParams::default(),
            test_fraction: eval.test_fraction,
            averaging: eval.averaging,
            mark_field: features.mark_field,
            predictor_years: features.predictor_years,
            target_year: features.target_year,
            repeats: 1,
            t_test: TTestVariant::default(),
            t_test_samples: TTestSamples::default(),
            cohort: CohortSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
            .context("loading configuration")
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            predictor_years: self.predictor_years.clone(),
            target_year: self.target_year,
            include_car: true,
            mark_field: self.mark_field,
            banding: self.banding.clone(),
        }
    }

    pub fn evaluation(&self) -> EvaluationSettings {
        EvaluationSettings {
            forest: self.forest,
            test_fraction: self.test_fraction,
            averaging: self.averaging,
        }
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(UsageError(format!("test_fraction {} not in (0, 1)", self.test_fraction)).into());
        }
        if self.forest.tree_count == 0 {
            return Err(UsageError("tree_count must be at least 1".into()).into());
        }
        if self.forest.min_leaf == 0 {
            return Err(UsageError("min_leaf must be at least 1".into()).into());
        }
        if self.repeats == 0 {
            return Err(UsageError("repeats must be at least 1".into()).into());
        }
        Ok(())
    }
}
