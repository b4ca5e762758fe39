//! Bootstrap-aggregated forest of Gini trees with majority voting.

use rand::Rng;
use rayon::prelude::*;

use super::tree::{train_tree_on, FeatureSubsample, TreeConfig, TreeNode};
use super::{argmax, check_input, ClassifierError, LabeledMatrix};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    /// Train each tree on a with-replacement resample of the rows.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeConfig {
                max_depth: 20,
                min_split: 2,
                // floor(sqrt(48))
                feature_subsample: FeatureSubsample::Count(6),
            },
            bootstrap: true,
        }
    }
}

/// Shape of the data a model was trained on. No wall-clock timestamp is
/// kept so that model files are byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingMeta {
    pub n_features: usize,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub max_depth: usize,
    pub min_split: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub meta: TrainingMeta,
}

/// Tree `i` draws its bootstrap rows and per-node feature samples from a
/// stream derived from `(seed, i)`, so the result does not depend on how
/// rayon schedules the trees.
pub fn train_forest(
    data: &LabeledMatrix,
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestModel, ClassifierError> {
    if data.n_rows() == 0 {
        return Err(ClassifierError::EmptyDataset);
    }
    if config.n_trees == 0 {
        return Err(ClassifierError::InvalidConfig(
            "n_trees must be at least 1".into(),
        ));
    }
    let n = data.n_rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let indices: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            train_tree_on(data, &indices, &config.tree, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ForestModel {
        trees,
        max_depth: config.tree.max_depth,
        min_split: config.tree.min_split,
        feature_subsample: config.tree.feature_subsample,
        bootstrap: config.bootstrap,
        class_names: data.class_names().to_vec(),
        seed,
        meta: TrainingMeta {
            n_features: data.n_cols(),
            n_rows: n,
        },
    })
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Majority vote; returns the winning class (lowest id on ties) and the
    /// fraction of trees voting for each class.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        check_input(x, self.meta.n_features)?;
        let mut votes = vec![0usize; self.n_classes()];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1;
        }
        let total = self.trees.len() as f64;
        let fractions = votes.iter().map(|&v| v as f64 / total).collect();
        Ok((argmax(&votes), fractions))
    }
}

pub fn predict_forest(
    model: &ForestModel,
    x: &[f64],
) -> Result<(usize, Vec<f64>), ClassifierError> {
    model.predict(x)
}
