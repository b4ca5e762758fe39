//! From-scratch supervised learners: a Gini decision tree, a bagged random
//! forest and a one-hidden-layer perceptron. Training is deterministic for
//! a given seed, and models serialize to a checksummed binary format.

mod forest;
mod mlp;
mod persist;
mod tree;

pub use forest::{predict_forest, train_forest, ForestConfig, ForestModel, TrainingMeta};
pub use mlp::{predict_mlp, train_mlp, Gradients, MlpConfig, MlpModel};
pub use persist::{load_model, save_model, Model, FORMAT_VERSION, MAGIC};
pub use tree::{gini_impurity, train_tree, train_tree_on, FeatureSubsample, TreeConfig, TreeNode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data is empty")]
    EmptyDataset,
    #[error("class counts sum to zero")]
    EmptyNode,
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("invalid training matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("model format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

/// Dense row-major training matrix with integer class targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    values: Vec<f64>,
    n_cols: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledMatrix {
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, ClassifierError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(ClassifierError::InvalidMatrix(
                "rows differ in width".into(),
            ));
        }
        Self::from_flat(rows.concat(), n_cols, labels, class_names)
    }

    pub fn from_flat(
        values: Vec<f64>,
        n_cols: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, ClassifierError> {
        if class_names.len() < 2 {
            return Err(ClassifierError::InvalidMatrix(
                "need at least two classes".into(),
            ));
        }
        if values.len() != n_cols * labels.len() {
            return Err(ClassifierError::InvalidMatrix(format!(
                "{} values do not fill {} rows of width {n_cols}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(ClassifierError::InvalidMatrix(format!(
                "class id {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteInput);
        }
        Ok(Self {
            values,
            n_cols,
            labels,
            class_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

/// Anything that maps a feature vector to a class index and per-class scores.
pub trait Predictor: Sync {
    fn class_names(&self) -> &[String];
    fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError>;
}

impl Predictor for ForestModel {
    fn class_names(&self) -> &[String] {
        &self.class_names
    }
    fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        ForestModel::predict(self, x)
    }
}

impl Predictor for MlpModel {
    fn class_names(&self) -> &[String] {
        &self.class_names
    }
    fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        MlpModel::predict(self, x)
    }
}

impl Predictor for Model {
    fn class_names(&self) -> &[String] {
        Model::class_names(self)
    }
    fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        Model::predict(self, x)
    }
}

/// Index of the largest element; ties go to the lowest index.
pub(crate) fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_input(x: &[f64], expected: usize) -> Result<(), ClassifierError> {
    if x.len() != expected {
        return Err(ClassifierError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFiniteInput);
    }
    Ok(())
}
