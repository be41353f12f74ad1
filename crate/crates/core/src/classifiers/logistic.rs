//! L2-penalized logistic regression on standardized features.
//!
//! Training minimizes `mean log-loss + ||w||^2 / (2C)` with the intercept
//! unpenalized, using the shared quasi-Newton minimizer with infinite
//! bounds. Features are standardized to zero mean and unit (population)
//! standard deviation using training-set statistics stored on the model;
//! constant columns get SD 1 so they standardize to exactly zero.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{validate_training_input, ClassifierError};
use crate::model::Label;
use crate::optim::{minimize, Bounds, Options};

/// Hyperparameters of the logistic trainer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    /// Inverse penalty strength; the penalty term is `||w||^2 / (2C)`.
    pub c: f64,
    /// Iteration cap for the quasi-Newton minimizer.
    pub max_iter: usize,
    /// Gradient infinity-norm tolerance.
    pub grad_tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { c: 1e6, max_iter: 5000, grad_tol: 1e-9 }
    }
}

/// A fitted logistic model plus the standardization that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    intercept: f64,
    means: Vec<f64>,
    sds: Vec<f64>,
    c: f64,
    /// Whether the minimizer met its gradient tolerance within the cap.
    pub converged: bool,
    /// Minimizer iterations consumed.
    pub iterations: usize,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// Coefficients on the standardized scale, one per input column.
    pub fn standardized_coefficients(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    fn logit_of_row(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for j in 0..row.len() {
            z += self.weights[j] * (row[j] - self.means[j]) / self.sds[j];
        }
        z
    }

    /// Positive-class probability for each row.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ClassifierError> {
        if x.ncols() != self.n_features() {
            return Err(ClassifierError::SchemaMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(x.rows()
            .into_iter()
            .map(|row| sigmoid(self.logit_of_row(row.as_slice().expect("contiguous row"))))
            .collect())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(u))` without overflow.
#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Fits the penalized logistic regression. The returned model stores the
/// training standardization, so prediction consumes raw features.
pub fn fit_logistic(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    config: &LogisticConfig,
) -> Result<LogisticModel, ClassifierError> {
    validate_training_input(x, y)?;
    let (n, p) = (x.nrows(), x.ncols());

    // Population-SD standardization; constant columns pinned to SD 1.
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means[j] = mean;
        sds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let mut z = vec![0.0; n * p];
    for (i, row) in x.rows().into_iter().enumerate() {
        for j in 0..p {
            z[i * p + j] = (row[j] - means[j]) / sds[j];
        }
    }
    let signs: Vec<f64> =
        y.iter().map(|&l| if l == Label::Valid { 1.0 } else { -1.0 }).collect();

    // Parameter vector [w_0..w_{p-1}, b]; objective is strictly convex in w
    // thanks to the ridge term, so the optimum is unique.
    let c = config.c;
    let objective = |v: &[f64], grad: &mut [f64]| -> f64 {
        let (w, b) = (&v[..p], v[p]);
        let mut loss = 0.0;
        grad.fill(0.0);
        for i in 0..n {
            let row = &z[i * p..(i + 1) * p];
            let mut zi = b;
            for j in 0..p {
                zi += w[j] * row[j];
            }
            let t = signs[i] * zi;
            loss += softplus(-t);
            // d loss_i / d z_i = -sign_i * sigmoid(-t)
            let r = -signs[i] * sigmoid(-t);
            for j in 0..p {
                grad[j] += r * row[j];
            }
            grad[p] += r;
        }
        let n_f = n as f64;
        loss /= n_f;
        for g in grad.iter_mut() {
            *g /= n_f;
        }
        let mut penalty = 0.0;
        for j in 0..p {
            penalty += w[j] * w[j];
            grad[j] += w[j] / c;
        }
        loss + penalty / (2.0 * c)
    };

    let opts = Options {
        max_iterations: config.max_iter,
        grad_tol: config.grad_tol,
        obj_rel_tol: 1e-14,
        history: 10,
    };
    let solution = minimize(objective, &vec![0.0; p + 1], &Bounds::unbounded(p + 1), &opts);

    Ok(LogisticModel {
        weights: solution.x[..p].to_vec(),
        intercept: solution.x[p],
        means,
        sds,
        c,
        converged: solution.converged,
        iterations: solution.iterations,
    })
}
