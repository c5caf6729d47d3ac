//! Degree-band prediction with random forests.

pub mod ensemble;
pub mod eval;
pub mod features;
pub mod tree;

pub use ensemble::{train_forest, ForestModel, ForestParams};
pub use eval::{
    auc_binary, auc_multiclass, compare_with_without_car, holdout_split, train_and_evaluate_table, AucAveraging,
    CarComparison, ConfusionMatrix, EvaluationReport, EvaluationSettings,
};
pub use features::{build_feature_table, FeatureConfig, FeatureTable};
