//! CART-style regression trees — the kernel under all three ensembles.
//!
//! One tree grower serves two split objectives:
//!
//! * `VarianceReduction` — classic CART: each candidate split is scored by
//!   the reduction in the sum of squared errors, computed as
//!   `S_L²/n_L + S_R²/n_R − S²/n` over target sums, and leaves carry the
//!   target mean.
//! * `XgbGain { lambda, gamma }` — second-order boosting: samples carry
//!   gradient/hessian pairs, a split scores
//!   `½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`, leaves carry the
//!   closed-form weight `w = −G/(H+λ)`, and splits whose gain is ≤ 0 are
//!   rejected (variance trees accept their best split regardless).
//!
//! Both objectives run the identical scan: per-sample pairs `(a, b)` are
//! `(y, 1)` for variance and `(g, h)` for gradients. Accumulation order is
//! fixed (sorted feature order with stable ties), so given `g = −residual`
//! and unit hessians the two objectives inspect bit-identical sums — the
//! foundation for the boosted-tree/second-order equivalence the ensembles
//! module relies on.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values of each candidate feature; ties in gain break to the smaller
//! feature index, then the smaller threshold. Routing is `value ≤
//! threshold` to the left child. Feature subsampling (`mtry`) draws from a
//! per-node stream `rng::stream_rng(seed, node_id)` with node ids assigned
//! in preorder, which keeps fitting deterministic for a given seed no
//! matter how callers schedule trees across threads.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Split objective; see the module docs for the formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitObjective {
    VarianceReduction,
    XgbGain { lambda: f64, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum depth of a split node; 0 means unlimited.
    pub max_depth: usize,
    /// A node with fewer samples becomes a leaf.
    pub min_samples_split: usize,
    /// Minimum samples on each side of a split.
    pub min_samples_leaf: usize,
    /// Candidate features per split; 0 means all.
    pub mtry: usize,
    pub objective: SplitObjective,
}

impl Default for TreeParams {
    fn default() -> TreeParams {
        TreeParams {
            max_depth: 0,
            min_samples_split: 2,
            min_samples_leaf: 1,
            mtry: 0,
            objective: SplitObjective::VarianceReduction,
        }
    }
}

/// Per-sample targets: raw values for variance trees, gradient/hessian
/// pairs for second-order trees.
#[derive(Debug, Clone, Copy)]
pub enum TreeTargets<'a> {
    Values(&'a [f64]),
    GradHess { grad: &'a [f64], hess: &'a [f64] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Number of split nodes in the subtree.
    pub fn split_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.split_count() + right.split_count(),
        }
    }
}

/// Fit one regression tree on `x` with the given targets.
///
/// Deterministic for fixed `(x, targets, params, seed)`; `seed` only feeds
/// the per-node `mtry` feature subsets.
pub fn fit_tree(x: &Matrix, targets: &TreeTargets, params: &TreeParams, seed: u64) -> Result<TreeNode> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput {
            context: "fit_tree".to_string(),
        });
    }
    if params.min_samples_split < 2 {
        return Err(Error::InvalidParameter {
            name: "min_samples_split".to_string(),
            detail: format!("must be >= 2, got {}", params.min_samples_split),
        });
    }
    if params.min_samples_leaf < 1 {
        return Err(Error::InvalidParameter {
            name: "min_samples_leaf".to_string(),
            detail: "must be >= 1".to_string(),
        });
    }
    if params.mtry > x.n_cols() {
        return Err(Error::InvalidParameter {
            name: "mtry".to_string(),
            detail: format!("{} exceeds feature count {}", params.mtry, x.n_cols()),
        });
    }

    let (a, b): (&[f64], Vec<f64>) = match (params.objective, targets) {
        (SplitObjective::VarianceReduction, TreeTargets::Values(y)) => (y, vec![1.0; n]),
        (SplitObjective::XgbGain { .. }, TreeTargets::GradHess { grad, hess }) => {
            if hess.len() != grad.len() {
                return Err(Error::LengthMismatch {
                    left: grad.len(),
                    right: hess.len(),
                });
            }
            (grad, hess.to_vec())
        }
        _ => {
            return Err(Error::InvalidParameter {
                name: "objective".to_string(),
                detail: "variance_reduction takes Values, xgb_gain takes GradHess".to_string(),
            })
        }
    };
    if a.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: a.len(),
        });
    }

    let mut fitter = Fitter {
        x,
        a,
        b: &b,
        params,
        seed,
        next_id: 0,
    };
    Ok(fitter.grow((0..n).collect(), 0))
}

struct Fitter<'a> {
    x: &'a Matrix,
    a: &'a [f64],
    b: &'a [f64],
    params: &'a TreeParams,
    seed: u64,
    next_id: u64,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Fitter<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let node_id = self.next_id;
        self.next_id += 1;
        let n = rows.len();

        // Node totals, accumulated in row order.
        let mut a_sum = 0.0;
        let mut b_sum = 0.0;
        for &r in &rows {
            a_sum += self.a[r];
            b_sum += self.b[r];
        }

        let depth_reached = self.params.max_depth != 0 && depth >= self.params.max_depth;
        let pure = self.is_pure(&rows);
        if n < self.params.min_samples_split || depth_reached || pure {
            return self.leaf(&rows, a_sum, b_sum, pure);
        }

        let best = self.best_split(&rows, node_id, a_sum, b_sum);
        let accepted = match (best, self.params.objective) {
            (None, _) => None,
            // Second-order trees reject non-improving splits.
            (Some(s), SplitObjective::XgbGain { .. }) if s.gain <= 0.0 => None,
            (Some(s), _) => Some(s),
        };
        let Some(split) = accepted else {
            return self.leaf(&rows, a_sum, b_sum, pure);
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.x.get(r, split.feature) <= split.threshold);
        // Left ids precede right ids (preorder), matching recursion order.
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn leaf(&self, rows: &[usize], a_sum: f64, b_sum: f64, pure: bool) -> TreeNode {
        let value = match self.params.objective {
            SplitObjective::VarianceReduction => {
                if pure {
                    // A pure node returns its target verbatim, keeping
                    // memorization bit-exact (no sum/len round trip).
                    self.a[rows[0]]
                } else {
                    a_sum / b_sum
                }
            }
            SplitObjective::XgbGain { lambda, .. } => -(a_sum / (b_sum + lambda)),
        };
        TreeNode::Leaf {
            value,
            n: rows.len(),
        }
    }

    /// All (a, b) pairs bit-identical? For variance trees this is "y is
    /// constant"; for gradient trees it also halts on constant gradients,
    /// where every split's true gain is zero and only rounding noise could
    /// otherwise pick one.
    fn is_pure(&self, rows: &[usize]) -> bool {
        let a0 = self.a[rows[0]].to_bits();
        let b0 = self.b[rows[0]].to_bits();
        rows.iter()
            .all(|&r| self.a[r].to_bits() == a0 && self.b[r].to_bits() == b0)
    }

    fn candidate_features(&self, node_id: u64) -> Vec<usize> {
        let p = self.x.n_cols();
        if self.params.mtry == 0 || self.params.mtry >= p {
            return (0..p).collect();
        }
        let mut rng = stream_rng(self.seed, node_id);
        let mut picked = rand::seq::index::sample(&mut rng, p, self.params.mtry).into_vec();
        picked.sort_unstable();
        picked
    }

    fn best_split(&self, rows: &[usize], node_id: u64, a_sum: f64, b_sum: f64) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<BestSplit> = None;

        for feature in self.candidate_features(node_id) {
            // Stable sort: equal values keep row order, fixing the
            // accumulation sequence regardless of how rows arrived.
            let mut order: Vec<(f64, usize)> = rows
                .iter()
                .map(|&r| (self.x.get(r, feature), r))
                .collect();
            order.sort_by(|p, q| p.0.total_cmp(&q.0));

            let mut a_left = 0.0;
            let mut b_left = 0.0;
            for i in 0..n - 1 {
                let (value, row) = order[i];
                a_left += self.a[row];
                b_left += self.b[row];
                let next = order[i + 1].0;
                if !(next > value) {
                    continue; // not a boundary between distinct values
                }
                let n_left = i + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let a_right = a_sum - a_left;
                let b_right = b_sum - b_left;
                let gain = self.gain(a_left, b_left, a_right, b_right, a_sum, b_sum);
                let improves = best.as_ref().map_or(true, |b| gain > b.gain);
                if improves {
                    best = Some(BestSplit {
                        feature,
                        threshold: midpoint(value, next),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn gain(&self, a_l: f64, b_l: f64, a_r: f64, b_r: f64, a: f64, b: f64) -> f64 {
        match self.params.objective {
            SplitObjective::VarianceReduction => a_l * a_l / b_l + a_r * a_r / b_r - a * a / b,
            SplitObjective::XgbGain { lambda, gamma } => {
                0.5 * (a_l * a_l / (b_l + lambda) + a_r * a_r / (b_r + lambda)
                    - a * a / (b + lambda))
                    - gamma
            }
        }
    }
}

/// Midpoint threshold between two consecutive distinct values. The exact
/// midpoint can round up to `hi` for adjacent floats; fall back to `lo` so
/// `value <= threshold` always reproduces the boundary the scan scored.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) * 0.5;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Route `features` to a leaf: `<= threshold` goes left.
pub fn predict_tree(node: &TreeNode, features: &[f64]) -> f64 {
    let mut cur = node;
    loop {
        match cur {
            TreeNode::Leaf { value, .. } => return *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                cur = if features[*feature] <= *threshold {
                    left
                } else {
                    right
                };
            }
        }
    }
}

/// Relative importance as percentages summing to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub percent: Vec<f64>,
    /// True when the model contains no (positive-gain) splits, in which
    /// case `percent` is all zeros.
    pub no_splits: bool,
}

/// Sum split gains per feature over all trees and normalize to percent.
pub fn importance(trees: &[TreeNode], n_features: usize) -> Importance {
    let mut gains = vec![0.0; n_features];
    for tree in trees {
        let mut stack = vec![tree];
        while let Some(node) = stack.pop() {
            if let TreeNode::Split {
                feature,
                gain,
                left,
                right,
                ..
            } = node
            {
                gains[*feature] += gain;
                stack.push(right);
                stack.push(left);
            }
        }
    }
    let total: f64 = gains.iter().sum();
    if !(total > 0.0) {
        return Importance {
            percent: vec![0.0; n_features],
            no_splits: true,
        };
    }
    Importance {
        percent: gains.iter().map(|g| 100.0 * g / total).collect(),
        no_splits: false,
    }
}
