//! Random forest: bootstrap-resampled CART trees with per-node feature
//! subsampling, trained in parallel on per-tree random streams.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Node, TreeSettings};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub tree_count: usize,
    /// Features tried per node; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            tree_count: 100,
            max_features: None,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_max_features(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub n_features: usize,
    pub n_classes: usize,
    pub tree_count: usize,
    pub max_features: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

/// Trains a forest on row-major features `x` and class indices `y`.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    if x.is_empty() {
        return Err(Error::Training("no training rows".into()));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n_features = x[0].len();
    if n_features == 0 {
        return Err(Error::Training("rows have no features".into()));
    }
    if let Some(bad) = x.iter().find(|r| r.len() != n_features) {
        return Err(Error::LengthMismatch {
            expected: n_features,
            actual: bad.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("features must be finite".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Training(format!("label {bad} >= class count {n_classes}")));
    }
    let mut present = vec![false; n_classes];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Training("training data contains a single class".into()));
    }
    if params.tree_count == 0 {
        return Err(Error::Training("tree_count must be >= 1".into()));
    }
    if params.min_leaf == 0 {
        return Err(Error::Training("min_leaf must be >= 1".into()));
    }
    if let Some(m) = params.max_features {
        if m == 0 || m > n_features {
            return Err(Error::Training(format!("max_features {m} not in 1..={n_features}")));
        }
    }

    let settings = TreeSettings {
        n_classes,
        max_features: params.resolved_max_features(n_features),
        min_leaf: params.min_leaf,
    };
    let n = x.len();
    let trees: Vec<DecisionTree> = (0..params.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[domain::TREE, t as u64]);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(x, y, samples, settings, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        n_features,
        n_classes,
        tree_count: params.tree_count,
        max_features: settings.max_features,
        min_leaf: params.min_leaf,
        bootstrap: params.bootstrap,
        seed,
        trees,
    })
}

impl ForestModel {
    /// Mean over trees of each tree's leaf class frequencies.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::LengthMismatch {
                expected: self.n_features,
                actual: row.len(),
            });
        }
        let mut proba = vec![0.0; self.n_classes];
        for tree in &self.trees {
            let counts = tree.leaf_counts(row);
            let total: u64 = counts.iter().sum();
            for (p, &c) in proba.iter_mut().zip(counts) {
                *p += c as f64 / total as f64;
            }
        }
        let k = self.trees.len() as f64;
        proba.iter_mut().for_each(|p| *p /= k);
        Ok(proba)
    }

    pub fn predict_proba_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(text)?;
        if model.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported forest format version {}",
                model.format_version
            )));
        }
        if model.trees.len() != model.tree_count {
            return Err(Error::Schema("tree_count disagrees with stored trees".into()));
        }
        for tree in &model.trees {
            for node in &tree.nodes {
                match node {
                    Node::Split { feature, left, right, .. } => {
                        if *feature >= model.n_features || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                            return Err(Error::Schema("split node out of range".into()));
                        }
                    }
                    Node::Leaf { counts } => {
                        if counts.len() != model.n_classes || counts.iter().sum::<u64>() == 0 {
                            return Err(Error::Schema("malformed leaf".into()));
                        }
                    }
                }
            }
        }
        Ok(model)
    }
}
