//! CART classification trees with Gini impurity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Smallest impurity decrease accepted as an improvement.
pub const MIN_IMPURITY_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training-sample count per class.
    Leaf { counts: Vec<u64> },
}

/// A tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeSettings {
    pub n_classes: usize,
    pub max_features: usize,
    pub min_leaf: usize,
}

/// Gini impurity `1 - sum p_k^2` of a class-count vector.
pub fn gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    settings: TreeSettings,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.settings.n_classes];
        for &s in samples {
            c[self.y[s]] += 1;
        }
        c
    }

    fn best_split(&self, samples: &[usize], parent: &[u64], rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let n_features = self.x[0].len();
        let n = samples.len();
        let parent_gini = gini(parent);
        let mut order: Vec<usize> = (0..n_features).collect();
        let mut best: Option<Candidate> = None;
        let mut evaluated = 0;
        // Lazy Fisher-Yates: features constant in this node do not use up the budget.
        for i in 0..n_features {
            if evaluated == self.settings.max_features {
                break;
            }
            let j = rng.random_range(i..n_features);
            order.swap(i, j);
            let f = order[i];

            let mut pairs: Vec<(f64, usize)> = samples.iter().map(|&s| (self.x[s][f], self.y[s])).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            evaluated += 1;

            let mut left = vec![0u64; self.settings.n_classes];
            let mut right = parent.to_vec();
            for k in 0..n - 1 {
                let label = pairs[k].1;
                left[label] += 1;
                right[label] -= 1;
                let (a, b) = (pairs[k].0, pairs[k + 1].0);
                if a == b {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.settings.min_leaf || nr < self.settings.min_leaf {
                    continue;
                }
                let weighted = (nl as f64 * gini(&left) + nr as f64 * gini(&right)) / n as f64;
                let decrease = parent_gini - weighted;
                if decrease > MIN_IMPURITY_DECREASE && best.as_ref().is_none_or(|c| decrease > c.decrease) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&samples);
        let idx = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || samples.len() < 2 * self.settings.min_leaf {
            self.nodes.push(Node::Leaf { counts });
            return idx;
        }
        let Some(split) = self.best_split(&samples, &counts, rng) else {
            self.nodes.push(Node::Leaf { counts });
            return idx;
        };
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.x[s][split.feature] <= split.threshold);
        let left = self.build(l, rng);
        let right = self.build(r, rng);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        idx
    }
}

impl DecisionTree {
    /// Grows a tree on the rows named by `samples` (duplicates allowed).
    pub(crate) fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        samples: Vec<usize>,
        settings: TreeSettings,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            settings,
            nodes: Vec::new(),
        };
        b.build(samples, rng);
        DecisionTree { nodes: b.nodes }
    }

    pub fn leaf_counts(&self, row: &[f64]) -> &[u64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn gini_definition() {
        assert_eq!(gini(&[5, 5]), 0.5);
        assert_eq!(gini(&[7, 0]), 0.0);
        assert_eq!(gini(&[0, 0]), 0.0);
        assert!((gini(&[1, 1, 1]) - 2.0 / 3.0).abs() < 1e-15);
    }

    fn settings(max_features: usize, min_leaf: usize) -> TreeSettings {
        TreeSettings {
            n_classes: 2,
            max_features,
            min_leaf,
        }
    }

    #[test]
    fn separable_single_feature() {
        let x: Vec<Vec<f64>> = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0, 0, 0, 1, 1, 1];
        let t = DecisionTree::fit(&x, &y, (0..6).collect(), settings(1, 1), &mut substream(1, &[]));
        assert_eq!(t.nodes.len(), 3);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.0),
            _ => panic!("root should split"),
        }
        for (row, label) in x.iter().zip(&y) {
            let c = t.leaf_counts(row);
            assert_eq!(c[*label], 3);
        }
    }

    #[test]
    fn min_leaf_and_constant_features() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let y = vec![0, 1, 0, 1, 0, 1];
        // min_leaf 3 allows only the 3/3 split
        let t = DecisionTree::fit(&x, &y, (0..6).collect(), settings(1, 3), &mut substream(2, &[]));
        for n in &t.nodes {
            if let Node::Leaf { counts } = n {
                assert!(counts.iter().sum::<u64>() >= 3);
            }
        }
        // the constant first column is never split on
        assert!(t.nodes.iter().all(|n| !matches!(n, Node::Split { feature: 0, .. })));
    }

    #[test]
    fn no_split_when_labels_unseparable() {
        let x = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let y = vec![0, 1, 0, 1];
        let t = DecisionTree::fit(&x, &y, (0..4).collect(), settings(1, 1), &mut substream(3, &[]));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.leaf_counts(&[1.0]), &[2, 2]);
    }
}
