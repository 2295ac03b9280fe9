//! The three modelling techniques: Random Forest bagging, boosted
//! regression trees, and second-order regularized boosting.
//!
//! All three build on [`crate::trees`]. A Random Forest averages
//! variance-objective trees grown on bootstrap resamples (n draws with
//! replacement, so each tree sees about two thirds of the samples and the
//! rest are out-of-bag). Both boosting variants fit trees stagewise to the
//! current residuals, shrink each tree by the learning rate, and optionally
//! subsample rows without replacement per stage. They differ only in the
//! split objective: BRT trees minimize squared error directly
//! (variance-reduction splits, mean leaves), while XGB trees use the
//! second-order gain with an L2 leaf penalty `lambda` and a split admission
//! threshold `gamma`. Under squared error the gradient is `g = ŷ − y` and
//! the hessian is `h = 1`, so XGB with `lambda = gamma = 0` reproduces BRT
//! stage for stage; this equivalence is load-bearing and covered by tests.
//!
//! Determinism contract: a fixed `(table, params)` pair produces a
//! bit-identical model no matter how many threads Rayon uses. Every tree
//! gets its own RNG stream derived from the ensemble seed and the tree
//! index, trees are aggregated in index order, and all row draws are
//! sorted before use so the per-tree sample order is canonical.
//!
//! The stored parameter block inside an [`EnsembleModel`] carries the tree
//! objective the ensemble actually used (the technique-level `lambda` and
//! `gamma` are copied into the nested tree parameters at fit time), so a
//! saved model is self-describing.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::dataset::{SampleTable, TargetTransform};
use crate::jsonio::{to_canonical_json, write_json_file};
use crate::rng::{mix, stream_rng};
use crate::trees::{
    fit_tree, importance, predict_tree, Importance, SplitObjective, TreeNode, TreeParams,
    TreeTargets,
};
use crate::{Error, Result};

/// Format version written into every model envelope.
pub const MODEL_VERSION: u32 = 1;

/// RNG stream for the bootstrap / subsample draw of one tree. Chosen far
/// above any node id so it can never collide with the per-node feature
/// subset streams used inside `fit_tree`.
const ROW_DRAW_STREAM: u64 = 0x524f_5753; // "ROWS"

/// Modelling technique tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "BRT")]
    Brt,
    #[serde(rename = "XGB")]
    Xgb,
}

impl Technique {
    pub fn name(self) -> &'static str {
        match self {
            Technique::Rf => "RF",
            Technique::Brt => "BRT",
            Technique::Xgb => "XGB",
        }
    }
}

impl std::fmt::Display for Technique {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Technique> {
        match s {
            _ if s.eq_ignore_ascii_case("RF") => Ok(Technique::Rf),
            _ if s.eq_ignore_ascii_case("BRT") => Ok(Technique::Brt),
            _ if s.eq_ignore_ascii_case("XGB") => Ok(Technique::Xgb),
            _ => Err(Error::InvalidParameter {
                name: "technique".to_string(),
                detail: format!("{s:?} is not RF, BRT or XGB"),
            }),
        }
    }
}

fn default_bootstrap() -> bool {
    true
}

/// Random Forest hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfParams {
    pub n_trees: usize,
    #[serde(default)]
    pub tree: TreeParams,
    /// Test hook: `false` trains every tree on the full sample (no
    /// resampling, no out-of-bag estimate).
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> RfParams {
        RfParams {
            n_trees: 100,
            tree: TreeParams::default(),
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Boosted-regression-tree hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BrtParams {
    fn default() -> BrtParams {
        BrtParams {
            n_trees: 100,
            learning_rate: 0.1,
            subsample: 1.0,
            tree: TreeParams {
                max_depth: 3,
                ..TreeParams::default()
            },
            seed: 0,
        }
    }
}

/// Second-order regularized boosting hyper-parameters. Extends the BRT set
/// with the leaf L2 penalty `lambda` and the split admission threshold
/// `gamma`; both are required in serialized form so a parameter block
/// unambiguously names its technique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XgbParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default)]
    pub seed: u64,
}

impl Default for XgbParams {
    fn default() -> XgbParams {
        XgbParams {
            n_trees: 100,
            learning_rate: 0.1,
            subsample: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            tree: TreeParams {
                max_depth: 3,
                ..TreeParams::default()
            },
            seed: 0,
        }
    }
}

/// Technique-specific parameters. Serialized untagged: the variants are
/// distinguished by their required fields (`lambda`/`gamma` mark XGB,
/// `learning_rate` without them marks BRT, neither marks RF), and unknown
/// fields are rejected so the match is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleParams {
    Xgb(XgbParams),
    Brt(BrtParams),
    Rf(RfParams),
}

impl EnsembleParams {
    pub fn technique(&self) -> Technique {
        match self {
            EnsembleParams::Rf(_) => Technique::Rf,
            EnsembleParams::Brt(_) => Technique::Brt,
            EnsembleParams::Xgb(_) => Technique::Xgb,
        }
    }

    pub fn n_trees(&self) -> usize {
        match self {
            EnsembleParams::Rf(p) => p.n_trees,
            EnsembleParams::Brt(p) => p.n_trees,
            EnsembleParams::Xgb(p) => p.n_trees,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            EnsembleParams::Rf(p) => p.seed,
            EnsembleParams::Brt(p) => p.seed,
            EnsembleParams::Xgb(p) => p.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            EnsembleParams::Rf(p) => p.seed = seed,
            EnsembleParams::Brt(p) => p.seed = seed,
            EnsembleParams::Xgb(p) => p.seed = seed,
        }
    }
}

/// A trained ensemble plus everything needed to apply and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleModel {
    pub version: u32,
    pub technique: Technique,
    pub params: EnsembleParams,
    /// Boosting intercept (mean of the training target). Unused by RF,
    /// stored as 0 there.
    pub base_score: f64,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub transform: TargetTransform,
    pub trees: Vec<TreeNode>,
}

impl EnsembleModel {
    /// Predict one sample, in the transformed target space.
    pub fn predict_row(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: features.len(),
            });
        }
        Ok(self.predict_row_unchecked(features))
    }

    fn predict_row_unchecked(&self, features: &[f64]) -> f64 {
        match self.technique {
            Technique::Rf => {
                let sum: f64 = self
                    .trees
                    .iter()
                    .map(|t| predict_tree(t, features))
                    .sum();
                sum / self.trees.len() as f64
            }
            Technique::Brt | Technique::Xgb => {
                let lr = match &self.params {
                    EnsembleParams::Brt(p) => p.learning_rate,
                    EnsembleParams::Xgb(p) => p.learning_rate,
                    EnsembleParams::Rf(_) => unreachable!("technique/params checked on load"),
                };
                let mut acc = self.base_score;
                for tree in &self.trees {
                    acc += lr * predict_tree(tree, features);
                }
                acc
            }
        }
    }

    /// Predict every row of a feature matrix, in the transformed target
    /// space. Row-parallel; each row accumulates its trees in index order,
    /// so the output does not depend on the thread count.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.n_cols(),
            });
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row_unchecked(x.row(i)))
            .collect())
    }

    /// Percentage relative importance over this model's trees.
    pub fn importance(&self) -> Importance {
        importance(&self.trees, self.feature_names.len())
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<EnsembleModel> {
        let model: EnsembleModel =
            serde_json::from_str(text).map_err(|e| Error::Malformed {
                what: "model JSON".to_string(),
                detail: e.to_string(),
            })?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_file(path, self)
    }

    pub fn load(path: &Path) -> Result<EnsembleModel> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        EnsembleModel::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Malformed {
                what: "model JSON".to_string(),
                detail: format!(
                    "version {} is not supported (expected {MODEL_VERSION})",
                    self.version
                ),
            });
        }
        if self.params.technique() != self.technique {
            return Err(Error::Malformed {
                what: "model JSON".to_string(),
                detail: format!(
                    "technique is {} but the parameter block belongs to {}",
                    self.technique,
                    self.params.technique()
                ),
            });
        }
        if self.technique == Technique::Rf && self.trees.is_empty() {
            return Err(Error::Malformed {
                what: "model JSON".to_string(),
                detail: "an RF model must carry at least one tree".to_string(),
            });
        }
        if self.trees.len() > self.params.n_trees() {
            return Err(Error::Malformed {
                what: "model JSON".to_string(),
                detail: format!(
                    "{} trees exceed the declared n_trees {}",
                    self.trees.len(),
                    self.params.n_trees()
                ),
            });
        }
        Ok(())
    }
}

/// Result of [`fit_rf`]: the model plus its out-of-bag error estimates.
/// Both are `None` when no sample was ever out of bag (bootstrap disabled,
/// or tiny n with many trees) and `oob_r2` is additionally `None` when the
/// covered targets have zero variance.
#[derive(Debug, Clone)]
pub struct RfFit {
    pub model: EnsembleModel,
    pub oob_r2: Option<f64>,
    pub oob_mse: Option<f64>,
}

/// Result of [`fit_brt`] / [`fit_xgb`]: the model plus the training MSE
/// measured after each stage (the loss curve; `train_mse[m]` is the MSE
/// with trees `0..=m` applied).
#[derive(Debug, Clone)]
pub struct BoostFit {
    pub model: EnsembleModel,
    pub train_mse: Vec<f64>,
}

fn check_nonempty(table: &SampleTable, context: &str) -> Result<()> {
    if table.n_samples() == 0 {
        return Err(Error::EmptyInput {
            context: context.to_string(),
        });
    }
    Ok(())
}

fn check_unit_interval(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 || value > 1.0 {
        return Err(Error::InvalidParameter {
            name: name.to_string(),
            detail: format!("must lie in (0, 1], got {value}"),
        });
    }
    Ok(())
}

/// Validate the shared boosting fields and return the per-stage subsample
/// size.
fn boost_checks(
    table: &SampleTable,
    context: &str,
    learning_rate: f64,
    subsample: f64,
    tree: &TreeParams,
) -> Result<usize> {
    check_nonempty(table, context)?;
    check_unit_interval("learning_rate", learning_rate)?;
    check_unit_interval("subsample", subsample)?;
    let n = table.n_samples();
    let drawn = subsample * n as f64;
    if drawn < tree.min_samples_split as f64 {
        return Err(Error::InvalidParameter {
            name: "subsample".to_string(),
            detail: format!(
                "subsample * n = {drawn} is below min_samples_split = {}",
                tree.min_samples_split
            ),
        });
    }
    Ok((drawn.floor() as usize).clamp(1, n))
}

/// Draw `k` distinct sorted row indices out of `n`.
fn draw_rows_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rows = rand::seq::index::sample(rng, n, k).into_vec();
    rows.sort_unstable();
    rows
}

/// Fit a Random Forest: `n_trees` variance-objective trees on bootstrap
/// resamples, predictions averaged. Out-of-bag predictions (average over
/// the trees whose bootstrap excluded a sample) give the internal error
/// estimate.
pub fn fit_rf(table: &SampleTable, params: &RfParams) -> Result<RfFit> {
    check_nonempty(table, "fit_rf")?;
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter {
            name: "n_trees".to_string(),
            detail: "a Random Forest needs at least one tree".to_string(),
        });
    }
    let n = table.n_samples();
    let targets = &table.y;

    // (tree, out-of-bag (row, prediction) pairs), in tree index order.
    let fits: Result<Vec<(TreeNode, Vec<(usize, f64)>)>> = (0..params.n_trees)
        .into_par_iter()
        .map(|m| {
            let master = mix(params.seed, m as u64);
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = stream_rng(master, ROW_DRAW_STREAM);
                let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                rows.sort_unstable();
                rows
            } else {
                (0..n).collect()
            };
            let x_sub = table.x.select_rows(&rows);
            let y_sub: Vec<f64> = rows.iter().map(|&r| targets[r]).collect();
            let tree = fit_tree(&x_sub, &TreeTargets::Values(&y_sub), &params.tree, master)?;

            let mut in_bag = vec![false; n];
            for &r in &rows {
                in_bag[r] = true;
            }
            let oob: Vec<(usize, f64)> = (0..n)
                .filter(|&i| !in_bag[i])
                .map(|i| (i, predict_tree(&tree, table.x.row(i))))
                .collect();
            Ok((tree, oob))
        })
        .collect();
    let fits = fits?;

    // Accumulate out-of-bag sums sequentially in tree order so the result
    // is independent of the thread schedule.
    let mut oob_sum = vec![0.0f64; n];
    let mut oob_count = vec![0usize; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for (tree, oob) in fits {
        for (i, pred) in oob {
            oob_sum[i] += pred;
            oob_count[i] += 1;
        }
        trees.push(tree);
    }

    let covered: Vec<usize> = (0..n).filter(|&i| oob_count[i] > 0).collect();
    let (oob_r2, oob_mse) = if covered.is_empty() {
        (None, None)
    } else {
        let preds: Vec<f64> = covered
            .iter()
            .map(|&i| oob_sum[i] / oob_count[i] as f64)
            .collect();
        let truth: Vec<f64> = covered.iter().map(|&i| targets[i]).collect();
        let mse = preds
            .iter()
            .zip(&truth)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / covered.len() as f64;
        (oob_r_squared(&preds, &truth), Some(mse))
    };

    let model = EnsembleModel {
        version: MODEL_VERSION,
        technique: Technique::Rf,
        params: EnsembleParams::Rf(RfParams {
            tree: TreeParams {
                objective: SplitObjective::VarianceReduction,
                ..params.tree.clone()
            },
            ..params.clone()
        }),
        base_score: 0.0,
        feature_names: table.feature_names.clone(),
        target_name: table.target_name.clone(),
        transform: table.transform,
        trees,
    };
    Ok(RfFit {
        model,
        oob_r2,
        oob_mse,
    })
}

/// 1 − SS_res/SS_tot over the out-of-bag subset; `None` when the covered
/// targets have no variance (the ratio is undefined there).
fn oob_r_squared(preds: &[f64], truth: &[f64]) -> Option<f64> {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return None;
    }
    let ss_res: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Some(1.0 - ss_res / ss_tot)
}

/// One boosting pass, shared by BRT and XGB so both draw identical
/// subsamples and tree seeds from the same ensemble seed. `make_targets`
/// turns the residuals of the drawn rows into split targets for this
/// technique's objective.
fn boost_loop(
    table: &SampleTable,
    n_trees: usize,
    learning_rate: f64,
    subsample_k: usize,
    tree_params: &TreeParams,
    seed: u64,
    context: &str,
) -> Result<(f64, Vec<TreeNode>, Vec<f64>)> {
    let n = table.n_samples();
    let base_score = table.y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut trees = Vec::with_capacity(n_trees);
    let mut train_mse = Vec::with_capacity(n_trees);

    let second_order = matches!(tree_params.objective, SplitObjective::XgbGain { .. });

    for m in 0..n_trees {
        let master = mix(seed, m as u64);
        let mut rng = stream_rng(master, ROW_DRAW_STREAM);
        let rows = draw_rows_without_replacement(n, subsample_k, &mut rng);
        let x_sub = table.x.select_rows(&rows);

        let tree = if second_order {
            // Squared error: g = ŷ − y, h = 1.
            let grad: Vec<f64> = rows.iter().map(|&r| pred[r] - table.y[r]).collect();
            let hess = vec![1.0f64; rows.len()];
            fit_tree(
                &x_sub,
                &TreeTargets::GradHess {
                    grad: &grad,
                    hess: &hess,
                },
                tree_params,
                master,
            )
        } else {
            let residuals: Vec<f64> = rows.iter().map(|&r| table.y[r] - pred[r]).collect();
            fit_tree(&x_sub, &TreeTargets::Values(&residuals), tree_params, master)
        }
        .map_err(|e| match e {
            Error::InvalidParameter { name, detail } => Error::InvalidParameter {
                name,
                detail: format!("{context}, stage {m}: {detail}"),
            },
            other => other,
        })?;

        for i in 0..n {
            pred[i] += learning_rate * predict_tree(&tree, table.x.row(i));
        }
        let mse = pred
            .iter()
            .zip(&table.y)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / n as f64;
        train_mse.push(mse);
        trees.push(tree);
    }
    Ok((base_score, trees, train_mse))
}

/// Fit boosted regression trees: stagewise variance-objective trees on the
/// current residuals, each shrunk by the learning rate.
pub fn fit_brt(table: &SampleTable, params: &BrtParams) -> Result<BoostFit> {
    let tree_params = TreeParams {
        objective: SplitObjective::VarianceReduction,
        ..params.tree.clone()
    };
    let k = boost_checks(
        table,
        "fit_brt",
        params.learning_rate,
        params.subsample,
        &tree_params,
    )?;
    let (base_score, trees, train_mse) = boost_loop(
        table,
        params.n_trees,
        params.learning_rate,
        k,
        &tree_params,
        params.seed,
        "fit_brt",
    )?;
    let model = EnsembleModel {
        version: MODEL_VERSION,
        technique: Technique::Brt,
        params: EnsembleParams::Brt(BrtParams {
            tree: tree_params,
            ..params.clone()
        }),
        base_score,
        feature_names: table.feature_names.clone(),
        target_name: table.target_name.clone(),
        transform: table.transform,
        trees,
    };
    Ok(BoostFit { model, train_mse })
}

/// Fit second-order regularized boosting: stagewise trees on the squared
/// error gradients with the XGB gain objective and `-G/(H+lambda)` leaves.
pub fn fit_xgb(table: &SampleTable, params: &XgbParams) -> Result<BoostFit> {
    for (name, value) in [("lambda", params.lambda), ("gamma", params.gamma)] {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidParameter {
                name: name.to_string(),
                detail: format!("must be finite and >= 0, got {value}"),
            });
        }
    }
    let tree_params = TreeParams {
        objective: SplitObjective::XgbGain {
            lambda: params.lambda,
            gamma: params.gamma,
        },
        ..params.tree.clone()
    };
    let k = boost_checks(
        table,
        "fit_xgb",
        params.learning_rate,
        params.subsample,
        &tree_params,
    )?;
    let (base_score, trees, train_mse) = boost_loop(
        table,
        params.n_trees,
        params.learning_rate,
        k,
        &tree_params,
        params.seed,
        "fit_xgb",
    )?;
    let model = EnsembleModel {
        version: MODEL_VERSION,
        technique: Technique::Xgb,
        params: EnsembleParams::Xgb(XgbParams {
            tree: tree_params,
            ..params.clone()
        }),
        base_score,
        feature_names: table.feature_names.clone(),
        target_name: table.target_name.clone(),
        transform: table.transform,
        trees,
    };
    Ok(BoostFit { model, train_mse })
}

/// Fit whichever technique the parameter block names and return just the
/// model (diagnostics dropped). This is the entry point the tuning and CLI
/// layers use.
pub fn fit(table: &SampleTable, params: &EnsembleParams) -> Result<EnsembleModel> {
    match params {
        EnsembleParams::Rf(p) => Ok(fit_rf(table, p)?.model),
        EnsembleParams::Brt(p) => Ok(fit_brt(table, p)?.model),
        EnsembleParams::Xgb(p) => Ok(fit_xgb(table, p)?.model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    /// Synthetic regression table: `p` noisy features, y driven by the
    /// first two plus noise.
    fn make_table(n: usize, p: usize, seed: u64) -> SampleTable {
        let mut rng = stream_rng(seed, 1);
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let features: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let noise: f64 = rng.random_range(-0.1..0.1);
            y.push(features[0] * features[0] + 2.0 * features[1] + noise);
            rows.push(features);
        }
        SampleTable {
            feature_names: (0..p).map(|j| format!("f{j}")).collect(),
            x: Matrix::from_rows(&rows).expect("test matrix is rectangular"),
            y,
            target_name: "y".to_string(),
            transform: TargetTransform::Identity,
            cell_index: (0..n).map(|i| (i, 0)).collect(),
        }
    }

    fn shallow_tree(depth: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            ..TreeParams::default()
        }
    }

    #[test]
    fn rf_single_tree_without_bootstrap_equals_the_tree() {
        let table = make_table(80, 3, 11);
        let params = RfParams {
            n_trees: 1,
            tree: shallow_tree(4),
            bootstrap: false,
            seed: 5,
        };
        let fit = fit_rf(&table, &params).expect("rf fit succeeds");
        let lone = fit_tree(
            &table.x,
            &TreeTargets::Values(&table.y),
            &params.tree,
            mix(5, 0),
        )
        .expect("single tree fits");
        for i in 0..table.n_samples() {
            let ens = fit.model.predict_row(table.x.row(i)).expect("dims match");
            let tree = predict_tree(&lone, table.x.row(i));
            assert_eq!(
                ens, tree,
                "a one-tree forest without bootstrap must reproduce its tree exactly"
            );
        }
        assert!(
            fit.oob_r2.is_none() && fit.oob_mse.is_none(),
            "no bootstrap means no out-of-bag samples, so both OOB estimates are undefined"
        );
    }

    #[test]
    fn rf_constant_target_predicts_constant_with_undefined_oob_r2() {
        let mut table = make_table(60, 2, 3);
        table.y = vec![7.0; 60];
        let params = RfParams {
            n_trees: 20,
            tree: TreeParams::default(),
            bootstrap: true,
            seed: 1,
        };
        let fit = fit_rf(&table, &params).expect("rf fit succeeds");
        let preds = fit.model.predict(&table.x).expect("dims match");
        for p in preds {
            assert_eq!(p, 7.0, "constant target must predict exactly 7");
        }
        assert!(
            fit.oob_r2.is_none(),
            "R^2 is undefined for a zero-variance target"
        );
        assert_eq!(
            fit.oob_mse,
            Some(0.0),
            "every tree memorizes the constant, so OOB MSE is exactly 0"
        );
    }

    #[test]
    fn rf_bootstrap_leaves_about_a_third_out_of_bag() {
        let n = 1000;
        let table = make_table(n, 2, 9);
        let params = RfParams {
            n_trees: 1,
            tree: shallow_tree(2),
            bootstrap: true,
            seed: 42,
        };
        // Reproduce the draw the fit makes for tree 0 and count unique rows.
        let master = mix(params.seed, 0);
        let mut rng = stream_rng(master, ROW_DRAW_STREAM);
        let mut in_bag = vec![false; n];
        for _ in 0..n {
            in_bag[rng.random_range(0..n)] = true;
        }
        let unique = in_bag.iter().filter(|&&b| b).count();
        let fraction = unique as f64 / n as f64;
        assert!(
            (fraction - 0.632).abs() < 0.05,
            "bootstrap unique fraction {fraction} should sit near 1 - 1/e ≈ 0.632"
        );
        // And the fit must be able to produce an OOB estimate from the rest.
        let fit = fit_rf(&table, &params).expect("rf fit succeeds");
        assert!(
            fit.oob_mse.is_some(),
            "with n = 1000 and one tree, some samples are certainly out of bag"
        );
    }

    #[test]
    fn rf_is_deterministic_across_thread_counts() {
        let table = make_table(150, 4, 21);
        let params = RfParams {
            n_trees: 24,
            tree: TreeParams {
                max_depth: 6,
                mtry: 2,
                ..TreeParams::default()
            },
            bootstrap: true,
            seed: 77,
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("pool builds");
            pool.install(|| fit_rf(&table, &params).expect("rf fit succeeds"))
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(
            one.model, eight.model,
            "the model must be bit-identical no matter the thread count"
        );
        assert_eq!(
            one.oob_r2, eight.oob_r2,
            "OOB accumulation order is fixed, so the estimate is too"
        );
    }

    #[test]
    fn rf_oob_mse_trend_is_non_increasing_in_ensemble_size() {
        // Median over 5 seeds of the OOB MSE at increasing tree counts.
        let sizes = [5usize, 20, 60];
        let mut median_at_size = Vec::new();
        for &n_trees in &sizes {
            let mut values = Vec::new();
            for seed in 0..5u64 {
                let table = make_table(300, 3, 100 + seed);
                let params = RfParams {
                    n_trees,
                    tree: shallow_tree(6),
                    bootstrap: true,
                    seed,
                };
                let fit = fit_rf(&table, &params).expect("rf fit succeeds");
                values.push(fit.oob_mse.expect("n = 300 always leaves OOB samples"));
            }
            values.sort_by(f64::total_cmp);
            median_at_size.push(values[2]);
        }
        assert!(
            median_at_size[0] >= median_at_size[1] && median_at_size[1] >= median_at_size[2],
            "median OOB MSE should not increase with more trees: {median_at_size:?}"
        );
    }

    #[test]
    fn brt_single_full_strength_stage_memorizes() {
        let table = make_table(50, 3, 8);
        let params = BrtParams {
            n_trees: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            tree: TreeParams::default(),
            seed: 0,
        };
        let fit = fit_brt(&table, &params).expect("brt fit succeeds");
        let preds = fit.model.predict(&table.x).expect("dims match");
        for (p, y) in preds.iter().zip(&table.y) {
            assert!(
                (p - y).abs() < 1e-12,
                "one deep lr=1 stage must drive every residual to zero, got |{p} - {y}|"
            );
        }
        assert!(
            fit.train_mse[0] < 1e-24,
            "training MSE after the memorizing stage should be ~0, got {}",
            fit.train_mse[0]
        );
    }

    #[test]
    fn boosting_with_zero_trees_predicts_the_mean() {
        let table = make_table(40, 2, 15);
        let mean = table.y.iter().sum::<f64>() / table.y.len() as f64;
        let params = BrtParams {
            n_trees: 0,
            learning_rate: 0.1,
            subsample: 1.0,
            tree: shallow_tree(3),
            seed: 0,
        };
        let fit = fit_brt(&table, &params).expect("brt fit succeeds");
        assert!(fit.train_mse.is_empty(), "no stages, no loss curve entries");
        let preds = fit.model.predict(&table.x).expect("dims match");
        for p in preds {
            assert_eq!(p, mean, "zero trees must predict exactly the target mean");
        }
    }

    #[test]
    fn brt_training_mse_is_monotone_without_subsampling() {
        let table = make_table(200, 4, 33);
        let params = BrtParams {
            n_trees: 60,
            learning_rate: 0.3,
            subsample: 1.0,
            tree: shallow_tree(3),
            seed: 4,
        };
        let fit = fit_brt(&table, &params).expect("brt fit succeeds");
        for w in fit.train_mse.windows(2) {
            assert!(
                w[1] <= w[0],
                "training MSE must never increase at subsample = 1: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn xgb_training_mse_is_monotone_without_subsampling() {
        let table = make_table(200, 4, 34);
        let params = XgbParams {
            n_trees: 60,
            learning_rate: 0.3,
            subsample: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            tree: shallow_tree(3),
            seed: 4,
        };
        let fit = fit_xgb(&table, &params).expect("xgb fit succeeds");
        for w in fit.train_mse.windows(2) {
            assert!(
                w[1] <= w[0],
                "training MSE must never increase at subsample = 1: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn xgb_without_regularization_matches_brt_stage_for_stage() {
        let table = make_table(300, 5, 55);
        let tree = shallow_tree(3);
        let brt = BrtParams {
            n_trees: 25,
            learning_rate: 0.1,
            subsample: 0.6,
            tree: tree.clone(),
            seed: 9,
        };
        let xgb = XgbParams {
            n_trees: 25,
            learning_rate: 0.1,
            subsample: 0.6,
            lambda: 0.0,
            gamma: 0.0,
            tree,
            seed: 9,
        };
        let b = fit_brt(&table, &brt).expect("brt fit succeeds");
        let x = fit_xgb(&table, &xgb).expect("xgb fit succeeds");
        assert_eq!(
            b.train_mse.len(),
            x.train_mse.len(),
            "both runs must record one loss entry per stage"
        );
        // Stage-for-stage: the loss curves and per-sample predictions agree.
        for (m, (mb, mx)) in b.train_mse.iter().zip(&x.train_mse).enumerate() {
            assert!(
                (mb - mx).abs() <= 1e-9,
                "stage {m}: BRT MSE {mb} and XGB MSE {mx} must agree to 1e-9"
            );
        }
        let pb = b.model.predict(&table.x).expect("dims match");
        let px = x.model.predict(&table.x).expect("dims match");
        for (i, (a, b)) in pb.iter().zip(&px).enumerate() {
            assert!(
                (a - b).abs() <= 1e-9,
                "sample {i}: lambda = gamma = 0 second-order boosting must equal BRT, got {a} vs {b}"
            );
        }
    }

    #[test]
    fn xgb_first_stage_leaves_equal_brt_residual_means() {
        // Structural version of the reduction: with a full-sample draw the
        // two stage-1 trees are the same shape with the same leaf values.
        let table = make_table(120, 3, 70);
        let tree = shallow_tree(2);
        let b = fit_brt(
            &table,
            &BrtParams {
                n_trees: 1,
                learning_rate: 0.1,
                subsample: 1.0,
                tree: tree.clone(),
                seed: 2,
            },
        )
        .expect("brt fit succeeds");
        let x = fit_xgb(
            &table,
            &XgbParams {
                n_trees: 1,
                learning_rate: 0.1,
                subsample: 1.0,
                lambda: 0.0,
                gamma: 0.0,
                tree,
                seed: 2,
            },
        )
        .expect("xgb fit succeeds");
        // Recorded gains differ by the objectives' constant factor, so compare
        // everything else: structure, split choices, and leaf values.
        fn same_tree(a: &TreeNode, b: &TreeNode) -> bool {
            match (a, b) {
                (TreeNode::Leaf { value: va, n: na }, TreeNode::Leaf { value: vb, n: nb }) => {
                    na == nb && (va - vb).abs() <= 1e-9
                }
                (
                    TreeNode::Split {
                        feature: fa,
                        threshold: ta,
                        left: la,
                        right: ra,
                        ..
                    },
                    TreeNode::Split {
                        feature: fb,
                        threshold: tb,
                        left: lb,
                        right: rb,
                        ..
                    },
                ) => fa == fb && ta == tb && same_tree(la, lb) && same_tree(ra, rb),
                _ => false,
            }
        }
        assert_eq!(b.model.trees.len(), x.model.trees.len());
        for (bt, xt) in b.model.trees.iter().zip(&x.model.trees) {
            assert!(
                same_tree(bt, xt),
                "with h = 1 and lambda = 0 the stage-1 trees must pick the same \
                 splits and leaf values"
            );
        }
    }

    #[test]
    fn huge_gamma_suppresses_every_split() {
        let table = make_table(100, 3, 77);
        let mean = table.y.iter().sum::<f64>() / table.y.len() as f64;
        let params = XgbParams {
            n_trees: 5,
            learning_rate: 0.5,
            subsample: 1.0,
            lambda: 0.0,
            gamma: 1e12,
            tree: shallow_tree(4),
            seed: 0,
        };
        let fit = fit_xgb(&table, &params).expect("xgb fit succeeds");
        for tree in &fit.model.trees {
            assert_eq!(
                tree.split_count(),
                0,
                "no split can clear a gain threshold of 1e12"
            );
        }
        // Root leaves fit -G/H of the residuals; after the first stage the
        // mean residual is 0, so predictions stay at the mean.
        let preds = fit.model.predict(&table.x).expect("dims match");
        for p in preds {
            assert!(
                (p - mean).abs() < 1e-9,
                "all-leaf trees must keep predictions at the target mean"
            );
        }
    }

    #[test]
    fn huge_lambda_pins_predictions_near_the_mean() {
        let table = make_table(100, 3, 78);
        let mean = table.y.iter().sum::<f64>() / table.y.len() as f64;
        let params = XgbParams {
            n_trees: 10,
            learning_rate: 0.5,
            subsample: 1.0,
            lambda: 1e15,
            gamma: 0.0,
            tree: shallow_tree(3),
            seed: 0,
        };
        let fit = fit_xgb(&table, &params).expect("xgb fit succeeds");
        let preds = fit.model.predict(&table.x).expect("dims match");
        for p in preds {
            assert!(
                (p - mean).abs() < 1e-6,
                "lambda -> infinity shrinks every leaf toward 0, got {p} vs mean {mean}"
            );
        }
    }

    #[test]
    fn predict_matches_brute_force_accumulation() {
        let table = make_table(90, 4, 91);
        let params = XgbParams {
            n_trees: 30,
            learning_rate: 0.1,
            subsample: 0.8,
            lambda: 0.5,
            gamma: 0.01,
            tree: shallow_tree(3),
            seed: 13,
        };
        let fit = fit_xgb(&table, &params).expect("xgb fit succeeds");
        let preds = fit.model.predict(&table.x).expect("dims match");
        for i in 0..table.n_samples() {
            // Independent accumulation order: trees last-to-first.
            let mut acc = 0.0;
            for tree in fit.model.trees.iter().rev() {
                acc += params.learning_rate * predict_tree(tree, table.x.row(i));
            }
            acc += fit.model.base_score;
            assert!(
                (acc - preds[i]).abs() <= 1e-12,
                "sample {i}: reversed accumulation differs from predict: {acc} vs {}",
                preds[i]
            );
        }
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let table = make_table(30, 3, 5);
        let fit = fit_rf(
            &table,
            &RfParams {
                n_trees: 2,
                tree: shallow_tree(2),
                bootstrap: true,
                seed: 0,
            },
        )
        .expect("rf fit succeeds");
        let err = fit.model.predict_row(&[1.0, 2.0]).unwrap_err();
        assert!(
            matches!(err, Error::DimensionMismatch { expected: 3, got: 2 }),
            "a 2-feature row against a 3-feature model must name both sizes, got {err}"
        );
    }

    #[test]
    fn model_json_round_trips_bit_exactly() {
        let table = make_table(60, 3, 44);
        let fit = fit_brt(
            &table,
            &BrtParams {
                n_trees: 8,
                learning_rate: 0.2,
                subsample: 0.7,
                tree: shallow_tree(3),
                seed: 3,
            },
        )
        .expect("brt fit succeeds");
        let json = fit.model.to_json().expect("model serializes");
        let back = EnsembleModel::from_json(&json).expect("model deserializes");
        assert_eq!(back, fit.model, "JSON round-trip must lose nothing");
        let again = back.to_json().expect("model re-serializes");
        assert_eq!(
            json, again,
            "canonical JSON must be byte-stable across a round-trip"
        );
    }

    #[test]
    fn params_json_discriminates_all_three_techniques() {
        let rf = EnsembleParams::Rf(RfParams::default());
        let brt = EnsembleParams::Brt(BrtParams::default());
        let xgb = EnsembleParams::Xgb(XgbParams::default());
        for (params, technique) in [
            (&rf, Technique::Rf),
            (&brt, Technique::Brt),
            (&xgb, Technique::Xgb),
        ] {
            let json = serde_json::to_string(params).expect("params serialize");
            let back: EnsembleParams = serde_json::from_str(&json).expect("params deserialize");
            assert_eq!(
                back.technique(),
                technique,
                "untagged parameter JSON {json} must come back as {technique}"
            );
            assert_eq!(&back, params, "parameter round-trip must be lossless");
        }
    }

    #[test]
    fn from_json_rejects_technique_params_mismatch() {
        let table = make_table(30, 2, 1);
        let fit = fit_rf(
            &table,
            &RfParams {
                n_trees: 2,
                tree: shallow_tree(2),
                bootstrap: true,
                seed: 0,
            },
        )
        .expect("rf fit succeeds");
        let json = fit
            .model
            .to_json()
            .expect("model serializes")
            .replace("\"technique\":\"RF\"", "\"technique\":\"BRT\"");
        let err = EnsembleModel::from_json(&json).unwrap_err();
        assert!(
            matches!(err, Error::Malformed { .. }),
            "an RF parameter block under a BRT tag must be rejected, got {err}"
        );
    }

    #[test]
    fn save_and_load_preserve_the_model() {
        let dir = tempfile::tempdir().expect("tempdir creates");
        let path = dir.path().join("model.json");
        let table = make_table(50, 3, 23);
        let fit = fit_xgb(
            &table,
            &XgbParams {
                n_trees: 5,
                learning_rate: 0.3,
                subsample: 1.0,
                lambda: 1.0,
                gamma: 0.0,
                tree: shallow_tree(3),
                seed: 6,
            },
        )
        .expect("xgb fit succeeds");
        fit.model.save(&path).expect("model saves");
        let back = EnsembleModel::load(&path).expect("model loads");
        assert_eq!(back, fit.model, "save/load must preserve the model exactly");
        let p1 = fit.model.predict(&table.x).expect("dims match");
        let p2 = back.predict(&table.x).expect("dims match");
        assert_eq!(p1, p2, "a reloaded model must predict bit-identically");
    }

    #[test]
    fn subsample_below_min_split_is_rejected() {
        let table = make_table(10, 2, 2);
        let params = BrtParams {
            n_trees: 3,
            learning_rate: 0.1,
            subsample: 0.1,
            tree: TreeParams {
                min_samples_split: 4,
                ..TreeParams::default()
            },
            seed: 0,
        };
        let err = fit_brt(&table, &params).unwrap_err();
        assert!(
            matches!(err, Error::InvalidParameter { ref name, .. } if name == "subsample"),
            "subsample * n = 1 under min_samples_split = 4 must fail, got {err}"
        );
    }

    #[test]
    fn invalid_learning_rates_are_rejected() {
        let table = make_table(20, 2, 2);
        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            let params = BrtParams {
                n_trees: 1,
                learning_rate: bad,
                subsample: 1.0,
                tree: shallow_tree(2),
                seed: 0,
            };
            assert!(
                fit_brt(&table, &params).is_err(),
                "learning_rate {bad} lies outside (0, 1] and must be rejected"
            );
        }
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let table = make_table(20, 2, 2);
        let params = XgbParams {
            n_trees: 1,
            learning_rate: 0.1,
            subsample: 1.0,
            lambda: -1.0,
            gamma: 0.0,
            tree: shallow_tree(2),
            seed: 0,
        };
        let err = fit_xgb(&table, &params).unwrap_err();
        assert!(
            matches!(err, Error::InvalidParameter { ref name, .. } if name == "lambda"),
            "negative lambda must be rejected by name, got {err}"
        );
    }

    #[test]
    fn boosting_is_deterministic_across_thread_counts() {
        let table = make_table(150, 4, 61);
        let params = XgbParams {
            n_trees: 20,
            learning_rate: 0.1,
            subsample: 0.7,
            lambda: 1.0,
            gamma: 0.0,
            tree: shallow_tree(3),
            seed: 19,
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("pool builds");
            pool.install(|| fit_xgb(&table, &params).expect("xgb fit succeeds"))
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(
            one.model, eight.model,
            "boosting must be bit-identical no matter the thread count"
        );
        assert_eq!(one.train_mse, eight.train_mse, "and so must its loss curve");
    }
}
