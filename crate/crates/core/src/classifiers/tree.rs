//! CART-style classification tree grown greedily on Gini impurity.

use rand::Rng;

use super::{argmax, ClassifierError, LabeledMatrix};

/// Score differences below this are treated as ties, so float noise in
/// the incremental sums cannot change which split wins.
const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: Vec<u64>,
        predicted_class: usize,
    },
}

impl TreeNode {
    fn leaf(class_counts: Vec<u64>) -> Self {
        let predicted_class = argmax(&class_counts);
        TreeNode::Leaf {
            class_counts,
            predicted_class,
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
                TreeNode::Leaf {
                    predicted_class, ..
                } => return *predicted_class,
            }
        }
    }

    /// Number of internal nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
            TreeNode::Leaf { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSubsample {
    All,
    /// Draw this many distinct features at every node.
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_split: usize,
    pub feature_subsample: FeatureSubsample,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 20,
            min_split: 2,
            feature_subsample: FeatureSubsample::All,
        }
    }
}

/// `1 - Σ p_i²` over the class proportions.
pub fn gini_impurity(class_counts: &[u64]) -> Result<f64, ClassifierError> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(ClassifierError::EmptyNode);
    }
    let total = total as f64;
    Ok(1.0
        - class_counts
            .iter()
            .map(|&c| (c as f64 / total).powi(2))
            .sum::<f64>())
}

/// `n * gini` for a node with `n` rows, i.e. `n - Σ c_i² / n`.
fn weighted_gini(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|c| c * c).sum();
    n as f64 - sq as f64 / n as f64
}

pub fn train_tree(
    data: &LabeledMatrix,
    config: &TreeConfig,
    rng: &mut impl Rng,
) -> Result<TreeNode, ClassifierError> {
    let indices: Vec<usize> = (0..data.n_rows()).collect();
    train_tree_on(data, &indices, config, rng)
}

/// Trains on the rows listed in `indices`; repeats count with multiplicity
/// (bootstrap samples).
pub fn train_tree_on(
    data: &LabeledMatrix,
    indices: &[usize],
    config: &TreeConfig,
    rng: &mut impl Rng,
) -> Result<TreeNode, ClassifierError> {
    if indices.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if let FeatureSubsample::Count(0) = config.feature_subsample {
        return Err(ClassifierError::InvalidConfig(
            "feature_subsample must be at least 1".into(),
        ));
    }
    let mut builder = Builder {
        data,
        config,
        rng,
        scratch: Vec::with_capacity(indices.len()),
    };
    let mut indices = indices.to_vec();
    Ok(builder.grow(&mut indices, 0))
}

struct Builder<'a, R> {
    data: &'a LabeledMatrix,
    config: &'a TreeConfig,
    rng: &'a mut R,
    scratch: Vec<(f64, usize)>,
}

struct Split {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, indices: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.data.n_classes()];
        for &i in indices {
            counts[self.data.label(i)] += 1;
        }
        counts
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let n = self.data.n_cols();
        match self.config.feature_subsample {
            FeatureSubsample::Count(k) if k < n => {
                let mut picked = rand::seq::index::sample(self.rng, n, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        }
    }

    fn grow(&mut self, indices: &mut [usize], depth: usize) -> TreeNode {
        let counts = self.counts(indices);
        let n = indices.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.config.max_depth || n < self.config.min_split {
            return TreeNode::leaf(counts);
        }

        let parent_score = weighted_gini(&counts, n as u64);
        let Some(split) = self.best_split(indices, &counts) else {
            return TreeNode::leaf(counts);
        };
        if split.score >= parent_score - SCORE_EPS {
            return TreeNode::leaf(counts);
        }

        let mut boundary = 0;
        for k in 0..n {
            if self.data.value(indices[k], split.feature) <= split.threshold {
                indices.swap(k, boundary);
                boundary += 1;
            }
        }
        let (left, right) = indices.split_at_mut(boundary);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Lowest size-weighted child Gini over the candidate features, scanning
    /// midpoints between consecutive distinct values. The first candidate
    /// wins ties (features ascending, thresholds ascending).
    fn best_split(&mut self, indices: &[usize], counts: &[u64]) -> Option<Split> {
        let n = indices.len() as u64;
        let mut best: Option<Split> = None;
        for feature in self.candidate_features() {
            let mut column = std::mem::take(&mut self.scratch);
            column.clear();
            column.extend(
                indices
                    .iter()
                    .map(|&i| (self.data.value(i, feature), self.data.label(i))),
            );
            column.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = vec![0u64; counts.len()];
            let mut right = counts.to_vec();
            for k in 0..column.len() - 1 {
                let (v, label) = column[k];
                left[label] += 1;
                right[label] -= 1;
                let next = column[k + 1].0;
                if v == next {
                    continue;
                }
                let n_left = k as u64 + 1;
                let score = weighted_gini(&left, n_left) + weighted_gini(&right, n - n_left);
                if best.as_ref().is_none_or(|b| score < b.score - SCORE_EPS) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Split {
                        score,
                        feature,
                        threshold,
                    });
                }
            }
            self.scratch = column;
        }
        best
    }
}
