//! From-scratch classifiers for the method comparison: L2-penalized
//! logistic regression, a depth-capped CART decision tree, and a random
//! forest over such trees.
//!
//! All three consume feature matrices as `ndarray` views with one row per
//! instance and expose probability prediction for the positive (valid)
//! class. Training is deterministic given inputs (and, for the forest, the
//! master RNG stream).

mod forest;
mod logistic;
mod tree;

pub use forest::{fit_random_forest, ForestConfig, ForestModel};
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};
pub use tree::{fit_decision_tree, Condition, Rule, TreeConfig, TreeModel};

use thiserror::Error;

/// Training / prediction failures shared by the classifier family.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("training labels contain only one class")]
    SingleClass,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature matrix has {got} columns, model expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("row count {rows} does not match label count {labels}")]
    RowLabelMismatch { rows: usize, labels: usize },
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
}

use crate::model::Label;
use ndarray::ArrayView2;

/// Shared input validation: non-empty, labels aligned, both classes
/// present, all values finite.
fn validate_training_input(
    x: ArrayView2<'_, f64>,
    y: &[Label],
) -> Result<(), ClassifierError> {
    if x.nrows() == 0 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if x.nrows() != y.len() {
        return Err(ClassifierError::RowLabelMismatch { rows: x.nrows(), labels: y.len() });
    }
    let positives = y.iter().filter(|&&l| l == Label::Valid).count();
    if positives == 0 || positives == y.len() {
        return Err(ClassifierError::SingleClass);
    }
    for ((row, column), &v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(ClassifierError::NonFiniteFeature { row, column });
        }
    }
    Ok(())
}
