//! Random forest over weighted CART trees.
//!
//! Each tree draws a bootstrap sample of size `n` (recorded as per-row
//! multiplicities), grows to purity or the leaf-size floor with a fresh
//! feature subset of size `mtry` at every node, and predicts the in-bag
//! class fraction at its leaf. The forest probability is the arithmetic
//! mean over trees in index order. Every tree owns a dedicated RNG
//! substream keyed by its index, so growth parallelizes across threads
//! without changing any result.

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, TreeConfig, TreeModel};
use super::{validate_training_input, ClassifierError};
use crate::model::Label;
use crate::rng::{substream, StreamPurpose};

/// Hyperparameters of the forest trainer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per node; `None` uses `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Per-tree growth limits (unbounded depth by default).
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            tree: TreeConfig {
                max_depth: None,
                min_samples_split: 2.0,
                min_samples_leaf: 1.0,
            },
        }
    }
}

/// A fitted forest, including each tree's bootstrap multiplicities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    /// `in_bag[t][i]` = times row `i` was drawn into tree `t`'s bootstrap.
    in_bag: Vec<Vec<u32>>,
    n_features: usize,
    mtry: usize,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    /// Bootstrap multiplicities per tree, aligned with training rows.
    pub fn in_bag(&self) -> &[Vec<u32>] {
        &self.in_bag
    }

    /// Positive-class probability per row: mean of tree probabilities in
    /// tree-index order.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ClassifierError> {
        if x.ncols() != self.n_features {
            return Err(ClassifierError::SchemaMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let n = x.nrows();
        let mut sums = vec![0.0; n];
        for tree in &self.trees {
            for (i, row) in x.rows().into_iter().enumerate() {
                sums[i] += tree.predict_row(row.as_slice().expect("contiguous row"));
            }
        }
        let t = self.trees.len() as f64;
        Ok(sums.into_iter().map(|s| s / t).collect())
    }

    /// Serializes the full model (trees and in-bag records) as JSON.
    pub fn save_json<W: std::io::Write>(&self, writer: W) -> Result<(), serde_json::Error> {
        serde_json::to_writer(writer, self)
    }

    /// Restores a model serialized by [`ForestModel::save_json`].
    pub fn load_json<R: std::io::Read>(reader: R) -> Result<Self, serde_json::Error> {
        serde_json::from_reader(reader)
    }
}

/// Trains the forest. `seed_stream` identifies the forest's RNG family: each
/// tree `t` consumes the substream `(seed, stream, purpose)` with its index
/// mixed into the stream id, so results are independent of thread schedule.
pub fn fit_random_forest(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    config: &ForestConfig,
    seed: u64,
    stream: u64,
) -> Result<ForestModel, ClassifierError> {
    validate_training_input(x, y)?;
    assert!(config.n_trees > 0, "forest needs at least one tree");
    let n = x.nrows();
    let p = x.ncols();
    let mtry = config.mtry.unwrap_or_else(|| (p as f64).sqrt().floor() as usize).clamp(1, p);

    let grown: Vec<(TreeModel, Vec<u32>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng =
                substream(seed, stream.wrapping_add(t as u64), StreamPurpose::TreeGrowth);
            let mut multiplicity = vec![0u32; n];
            for _ in 0..n {
                multiplicity[rng.random_range(0..n)] += 1;
            }
            let weights: Vec<f64> = multiplicity.iter().map(|&m| f64::from(m)).collect();
            let tree = grow_tree(x, y, &weights, &config.tree, Some(mtry), Some(&mut rng));
            (tree, multiplicity)
        })
        .collect();

    let mut trees = Vec::with_capacity(config.n_trees);
    let mut in_bag = Vec::with_capacity(config.n_trees);
    for (tree, bag) in grown {
        trees.push(tree);
        in_bag.push(bag);
    }
    Ok(ForestModel { trees, in_bag, n_features: p, mtry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auroc;
    use crate::rng::{substream as sub, StreamPurpose as SP, StreamRng};
    use ndarray::Array2;
    use rand::Rng;

    fn rng(seed: u64) -> StreamRng {
        sub(seed, 0, SP::Auxiliary)
    }

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
    }

    fn matrix(rows: &[Vec<f64>]) -> Array2<f64> {
        let p = rows[0].len();
        Array2::from_shape_vec((rows.len(), p), rows.concat()).unwrap()
    }

    fn random_classification(
        n: usize,
        p: usize,
        r: &mut StreamRng,
    ) -> (Array2<f64>, Vec<Label>) {
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
        let y: Vec<Label> = rows
            .iter()
            .map(|row| {
                if row[0] + 0.8 * row[1] + 0.1 * (r.random::<f64>() - 0.5) > 0.9 {
                    Label::Valid
                } else {
                    Label::Invalid
                }
            })
            .collect();
        (matrix(&rows), y)
    }

    #[test]
    fn single_tree_forest_memorizes_in_bag_points() {
        // Distinct feature values let every leaf reach purity, so each
        // in-bag training point predicts its own class with probability 1.
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<Label> = (0..20)
            .map(|i| if i % 3 == 0 { Label::Valid } else { Label::Invalid })
            .collect();
        let x = matrix(&rows);
        let config = ForestConfig { n_trees: 1, ..ForestConfig::default() };
        let forest = fit_random_forest(x.view(), &y, &config, 9, 0).unwrap();
        let probs = forest.predict_proba(x.view()).unwrap();
        for (i, &mult) in forest.in_bag()[0].iter().enumerate() {
            if mult > 0 {
                let expected = f64::from(y[i].as_u8());
                assert_eq!(probs[i], expected, "in-bag row {i}");
            }
        }
    }

    #[test]
    fn forest_probability_is_the_mean_of_tree_probabilities() {
        let mut r = rng(50);
        let (x, y) = random_classification(50, 4, &mut r);
        let config = ForestConfig { n_trees: 25, ..ForestConfig::default() };
        let forest = fit_random_forest(x.view(), &y, &config, 31, 0).unwrap();
        let probs = forest.predict_proba(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let mean: f64 = forest
                .trees()
                .iter()
                .map(|t| t.predict_row(row.as_slice().unwrap()))
                .sum::<f64>()
                / 25.0;
            assert_eq!(probs[i], mean, "row {i}");
        }
    }

    #[test]
    fn training_is_deterministic_under_parallel_growth() {
        let mut r = rng(51);
        let (x, y) = random_classification(120, 6, &mut r);
        let config = ForestConfig { n_trees: 40, ..ForestConfig::default() };
        let f1 = fit_random_forest(x.view(), &y, &config, 77, 3).unwrap();
        let f2 = fit_random_forest(x.view(), &y, &config, 77, 3).unwrap();
        assert_eq!(f1.in_bag(), f2.in_bag());
        assert_eq!(
            f1.predict_proba(x.view()).unwrap(),
            f2.predict_proba(x.view()).unwrap()
        );
        let f3 = fit_random_forest(x.view(), &y, &config, 78, 3).unwrap();
        assert_ne!(
            f1.predict_proba(x.view()).unwrap(),
            f3.predict_proba(x.view()).unwrap(),
            "different seeds should disagree somewhere"
        );
    }

    #[test]
    fn bootstrap_records_are_complete() {
        let mut r = rng(52);
        let (x, y) = random_classification(60, 3, &mut r);
        let config = ForestConfig { n_trees: 10, ..ForestConfig::default() };
        let forest = fit_random_forest(x.view(), &y, &config, 5, 0).unwrap();
        assert_eq!(forest.in_bag().len(), 10);
        for bag in forest.in_bag() {
            assert_eq!(bag.len(), 60);
            assert_eq!(bag.iter().map(|&m| m as usize).sum::<usize>(), 60);
        }
        assert_eq!(forest.mtry(), 1, "floor(sqrt(3)) = 1");
    }

    #[test]
    fn json_roundtrip_preserves_the_model() {
        let mut r = rng(53);
        let (x, y) = random_classification(80, 5, &mut r);
        let config = ForestConfig { n_trees: 12, ..ForestConfig::default() };
        let forest = fit_random_forest(x.view(), &y, &config, 13, 1).unwrap();
        let mut buffer = Vec::new();
        forest.save_json(&mut buffer).unwrap();
        let restored = ForestModel::load_json(buffer.as_slice()).unwrap();
        assert_eq!(restored.in_bag(), forest.in_bag());
        assert_eq!(
            restored.predict_proba(x.view()).unwrap(),
            forest.predict_proba(x.view()).unwrap()
        );
    }

    #[test]
    fn forest_finds_real_signal() {
        let mut r = rng(54);
        let (x, y) = random_classification(300, 5, &mut r);
        let (xt, yt) = random_classification(300, 5, &mut r);
        let config = ForestConfig { n_trees: 100, ..ForestConfig::default() };
        let forest = fit_random_forest(x.view(), &y, &config, 21, 0).unwrap();
        let probs = forest.predict_proba(xt.view()).unwrap();
        let score = auroc(&probs, &yt).unwrap();
        assert!(score > 0.9, "test AUROC {score}");
    }

    #[test]
    fn input_validation_matches_the_family_contract() {
        let x = matrix(&[vec![1.0], vec![2.0]]);
        assert_eq!(
            fit_random_forest(x.view(), &labels(&[1, 1]), &ForestConfig::default(), 1, 0)
                .unwrap_err(),
            ClassifierError::SingleClass
        );
        let mut r = rng(55);
        let (x, y) = random_classification(30, 2, &mut r);
        let config = ForestConfig { n_trees: 5, ..ForestConfig::default() };
        let forest = fit_random_forest(x.view(), &y, &config, 2, 0).unwrap();
        let wide = matrix(&[vec![0.0, 1.0, 2.0]]);
        assert_eq!(
            forest.predict_proba(wide.view()).unwrap_err(),
            ClassifierError::SchemaMismatch { expected: 2, got: 3 }
        );
    }
}
