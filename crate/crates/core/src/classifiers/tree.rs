//! Deterministic CART-style decision tree with weighted Gini splits.
//!
//! Growth is greedy: at each node every candidate feature is scanned (or a
//! random subset when the forest requests it), thresholds are midpoints
//! between consecutive distinct values, and the split maximizing the Gini
//! impurity decrease wins. Zero-gain splits are allowed (an XOR pattern is
//! only separable through one), and equal gains break toward the lowest
//! feature index, then the lowest threshold, so growth is reproducible.
//! Row weights carry bootstrap multiplicities: sample counts, purity,
//! leaf-size limits, and leaf probabilities all use total weight.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{validate_training_input, ClassifierError};
use crate::model::Label;
use crate::rng::StreamRng;

/// Structural limits for tree growth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    /// Maximum split depth; `None` grows until purity or the size limits.
    pub max_depth: Option<usize>,
    /// Minimum total weight a node needs to be considered for splitting.
    pub min_samples_split: f64,
    /// Minimum total weight each child must keep.
    pub min_samples_leaf: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: Some(4), min_samples_split: 2.0, min_samples_leaf: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Node {
    Leaf {
        /// Weighted fraction of positive-class samples at the leaf.
        probability: f64,
        /// Total training weight that reached the leaf.
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// A fitted tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeModel {
    root: Node,
    n_features: usize,
}

/// One comparison along a root-to-leaf path: `x[feature] <= threshold` when
/// `below`, otherwise `x[feature] > threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    pub below: bool,
    pub threshold: f64,
}

/// One leaf of the rule list: the conjunction of its path conditions, the
/// leaf probability, and the implied hard class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub probability: f64,
    pub predicted_class: Label,
}

impl Rule {
    /// Whether a feature row satisfies every condition.
    pub fn matches(&self, row: &[f64]) -> bool {
        self.conditions.iter().all(|c| {
            if c.below {
                row[c.feature] <= c.threshold
            } else {
                row[c.feature] > c.threshold
            }
        })
    }

    /// Renders the rule with caller-supplied column names.
    pub fn display_with_names(&self, names: &[String]) -> String {
        let class = match self.predicted_class {
            Label::Valid => "valid",
            Label::Invalid => "invalid",
        };
        if self.conditions.is_empty() {
            return format!("always -> {class} (p={:.3})", self.probability);
        }
        let clauses: Vec<String> = self
            .conditions
            .iter()
            .map(|c| {
                let op = if c.below { "<=" } else { ">" };
                format!("{} {op} {:.6}", names[c.feature], c.threshold)
            })
            .collect();
        format!("if {} -> {class} (p={:.3})", clauses.join(" and "), self.probability)
    }
}

impl TreeModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Depth of the deepest split path (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => walk(left) + walk(right),
            }
        }
        walk(&self.root)
    }

    /// Root split feature and threshold, if the tree splits at all.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.root {
            Node::Leaf { .. } => None,
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
        }
    }

    pub(crate) fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { probability, .. } => return *probability,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Positive-class probability for each row.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ClassifierError> {
        if x.ncols() != self.n_features {
            return Err(ClassifierError::SchemaMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(x.rows()
            .into_iter()
            .map(|row| self.predict_row(row.as_slice().expect("contiguous row")))
            .collect())
    }

    /// The tree as an exhaustive, mutually exclusive rule list (one rule per
    /// leaf, in left-to-right order).
    pub fn rules(&self) -> Vec<Rule> {
        let mut rules = Vec::with_capacity(self.n_leaves());
        let mut path = Vec::new();
        fn walk(node: &Node, path: &mut Vec<Condition>, out: &mut Vec<Rule>) {
            match node {
                Node::Leaf { probability, .. } => out.push(Rule {
                    conditions: path.clone(),
                    probability: *probability,
                    predicted_class: if *probability >= 0.5 {
                        Label::Valid
                    } else {
                        Label::Invalid
                    },
                }),
                Node::Split { feature, threshold, left, right } => {
                    path.push(Condition { feature: *feature, below: true, threshold: *threshold });
                    walk(left, path, out);
                    path.pop();
                    path.push(Condition {
                        feature: *feature,
                        below: false,
                        threshold: *threshold,
                    });
                    walk(right, path, out);
                    path.pop();
                }
            }
        }
        walk(&self.root, &mut path, &mut rules);
        rules
    }
}

/// Working buffers for one node's rows.
struct Grower<'x, 'w> {
    x: ArrayView2<'x, f64>,
    y01: Vec<f64>,
    weights: &'w [f64],
    config: TreeConfig,
    mtry: Option<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    child_impurity: f64,
}

impl Grower<'_, '_> {
    /// Weighted total and positive weight over `rows`.
    fn tallies(&self, rows: &[usize]) -> (f64, f64) {
        let mut w = 0.0;
        let mut wp = 0.0;
        for &i in rows {
            w += self.weights[i];
            wp += self.weights[i] * self.y01[i];
        }
        (w, wp)
    }

    /// Best split over one feature, or `None` when the feature is constant
    /// on these rows or no cut satisfies the leaf-size limits. Returns the
    /// weighted child impurity (lower is better; parent terms are shared).
    fn scan_feature(
        &self,
        feature: usize,
        rows: &[usize],
        total_w: f64,
        total_wp: f64,
        sorted: &mut Vec<(f64, f64, f64)>,
    ) -> Option<(f64, f64)> {
        sorted.clear();
        sorted.extend(rows.iter().map(|&i| {
            (self.x[(i, feature)], self.weights[i], self.weights[i] * self.y01[i])
        }));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let mut best: Option<(f64, f64)> = None;
        let mut w_left = 0.0;
        let mut wp_left = 0.0;
        for k in 0..sorted.len() - 1 {
            w_left += sorted[k].1;
            wp_left += sorted[k].2;
            if sorted[k].0 == sorted[k + 1].0 {
                continue;
            }
            let w_right = total_w - w_left;
            if w_left < self.config.min_samples_leaf || w_right < self.config.min_samples_leaf
            {
                continue;
            }
            let wp_right = total_wp - wp_left;
            // Weighted Gini of both children: sum_c 2 p_c (1 - p_c) w_c.
            let gini = |w: f64, wp: f64| {
                let p = wp / w;
                2.0 * p * (1.0 - p) * w
            };
            let impurity = gini(w_left, wp_left) + gini(w_right, wp_right);
            let threshold = 0.5 * (sorted[k].0 + sorted[k + 1].0);
            if best.map_or(true, |(bi, _)| impurity < bi) {
                best = Some((impurity, threshold));
            }
        }
        best
    }

    fn grow(&self, rows: Vec<usize>, depth: usize, rng: &mut Option<&mut StreamRng>) -> Node {
        let (w, wp) = self.tallies(&rows);
        let probability = wp / w;
        let leaf = |probability, weight| Node::Leaf { probability, weight };
        let pure = wp == 0.0 || wp == w;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || w < self.config.min_samples_split {
            return leaf(probability, w);
        }

        let p = self.x.ncols();
        let mut best: Option<BestSplit> = None;
        let mut sorted = Vec::with_capacity(rows.len());
        let consider = |feature: usize,
                            best: &mut Option<BestSplit>,
                            sorted: &mut Vec<(f64, f64, f64)>|
         -> bool {
            let Some((child_impurity, threshold)) =
                self.scan_feature(feature, &rows, w, wp, sorted)
            else {
                return false;
            };
            let better = match best {
                None => true,
                Some(b) => {
                    child_impurity < b.child_impurity
                        || (child_impurity == b.child_impurity
                            && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if better {
                *best = Some(BestSplit { feature, threshold, child_impurity });
            }
            true
        };
        match (self.mtry, rng.as_deref_mut()) {
            (Some(mtry), Some(rng)) => {
                // Walk a random permutation until `mtry` non-constant
                // features have been scanned (constant features do not
                // count, mirroring the usual forest splitter).
                let mut permutation: Vec<usize> = (0..p).collect();
                for i in (1..p).rev() {
                    let j = rng.random_range(0..=i);
                    permutation.swap(i, j);
                }
                let mut informative = 0;
                for &feature in &permutation {
                    if consider(feature, &mut best, &mut sorted) {
                        informative += 1;
                        if informative == mtry {
                            break;
                        }
                    }
                }
            }
            _ => {
                for feature in 0..p {
                    consider(feature, &mut best, &mut sorted);
                }
            }
        }

        let Some(split) = best else {
            return leaf(probability, w);
        };
        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for &i in &rows {
            if self.x[(i, split.feature)] <= split.threshold {
                left_rows.push(i);
            } else {
                right_rows.push(i);
            }
        }
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(left_rows, depth + 1, rng)),
            right: Box::new(self.grow(right_rows, depth + 1, rng)),
        }
    }
}

/// Grows a tree with explicit row weights and optional per-node feature
/// subsampling; the forest trainer calls this with bootstrap multiplicities.
pub(crate) fn grow_tree<'x, 'w>(
    x: ArrayView2<'x, f64>,
    y: &[Label],
    weights: &'w [f64],
    config: &TreeConfig,
    mtry: Option<usize>,
    mut rng: Option<&mut StreamRng>,
) -> TreeModel {
    let y01: Vec<f64> = y.iter().map(|&l| f64::from(l.as_u8())).collect();
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| weights[i] > 0.0).collect();
    assert!(!rows.is_empty(), "tree growth needs positive total weight");
    let grower = Grower { x, y01, weights, config: *config, mtry };
    let root = grower.grow(rows, 0, &mut rng);
    TreeModel { root, n_features: x.ncols() }
}

/// Fits the depth-capped deterministic tree on uniformly weighted data.
pub fn fit_decision_tree(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    config: &TreeConfig,
) -> Result<TreeModel, ClassifierError> {
    validate_training_input(x, y)?;
    let weights = vec![1.0; x.nrows()];
    Ok(grow_tree(x, y, &weights, config, None, None))
}
