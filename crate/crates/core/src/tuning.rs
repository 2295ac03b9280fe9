//! Accuracy metrics, k-fold cross-validated evaluation, exhaustive grid
//! search, and percentage-difference reporting against a baseline model.
//!
//! Metrics follow their textbook forms: RMSE = √(Σ(pᵢ−tᵢ)²/n),
//! MAE = Σ|pᵢ−tᵢ|/n, and the coefficient of determination
//! R² = 1 − SS_res/SS_tot. The power-mean inequality guarantees
//! MAE ≤ RMSE on every pair of vectors, and R² is undefined (an error)
//! when the truth has zero variance.
//!
//! Cross-validation partitions samples into `k` index folds (seeded
//! shuffle, sizes within one of each other), trains on `k−1` folds and
//! predicts the held-out one. The `aggregate` metrics are computed from
//! the pooled out-of-fold predictions — the concatenation covering every
//! sample exactly once — never by averaging per-fold metrics, which would
//! weight small folds unfairly. Per-fold metrics are kept for dispersion
//! reporting. All evaluation happens in the transformed target space (for
//! a log-transformed target, log space), so metric magnitudes are
//! comparable across models of the same target.
//!
//! Reproducibility: the evaluation `seed` drives both the fold assignment
//! and the per-fold model seeds; the seed recorded inside the parameter
//! block is ignored here so that every grid point sees identical folds and
//! identically seeded fits. Given the same `(table, params, k, seed)` the
//! whole report is bit-identical regardless of thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{train_test_folds, SampleTable};
use crate::ensembles::{
    fit, BrtParams, EnsembleParams, RfParams, Technique, XgbParams,
};
use crate::jsonio::fmt_real;
use crate::rng::mix;
use crate::trees::TreeParams;
use crate::{Error, Result};

/// RNG domain separating per-fold fit seeds from the fold shuffle.
const FIT_STREAM: u64 = 0x4649_5453; // "FITS"

/// Report format version written into every evaluation JSON.
pub const REPORT_VERSION: u32 = 1;

/// The three accuracy measures used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

fn check_lengths(pred: &[f64], truth: &[f64], context: &str) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth, "rmse")?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth, "mae")?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Coefficient of determination, 1 − SS_res/SS_tot. Errors when the truth
/// is constant (SS_tot = 0 leaves the ratio undefined).
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth, "r2")?;
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance {
            name: "truth".to_string(),
        });
    }
    let ss_res: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// All three metrics at once.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        rmse: rmse(pred, truth)?,
        mae: mae(pred, truth)?,
        r2: r2(pred, truth)?,
    })
}

/// Percentage R² difference of a candidate over a baseline,
/// 100·(candidate − baseline)/baseline.
pub fn baseline_delta(candidate_r2: f64, baseline_r2: f64) -> Result<f64> {
    if !(baseline_r2 > 0.0) {
        return Err(Error::NonPositiveBaseline { value: baseline_r2 });
    }
    Ok(100.0 * (candidate_r2 - baseline_r2) / baseline_r2)
}

/// Outcome of one cross-validated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// Metrics of each held-out fold, in fold order.
    pub per_fold: Vec<Metrics>,
    /// Metrics over the pooled out-of-fold predictions.
    pub aggregate: Metrics,
    /// The pooled out-of-fold prediction for every sample, by sample index.
    pub oof_pred: Vec<f64>,
}

/// Evaluate one parameter set by k-fold cross-validation.
///
/// `seed` controls the fold shuffle and the per-fold fit seeds; the seed
/// stored inside `params` is ignored so identical `(table, k, seed)` pairs
/// always compare grid points on identical folds.
pub fn cross_validate(
    table: &SampleTable,
    params: &EnsembleParams,
    k: usize,
    seed: u64,
) -> Result<CvOutcome> {
    let n = table.n_samples();
    let folds = train_test_folds(n, k, seed)?;
    let fit_base = mix(seed, FIT_STREAM);

    let per_fold_results: Result<Vec<(Vec<usize>, Vec<f64>, Metrics)>> = folds
        .par_iter()
        .enumerate()
        .map(|(fold, test_rows)| {
            let in_test: Vec<bool> = {
                let mut mask = vec![false; n];
                for &r in test_rows {
                    mask[r] = true;
                }
                mask
            };
            let train_rows: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let mut fold_params = params.clone();
            fold_params.set_seed(mix(fit_base, fold as u64));

            let run = || -> Result<(Vec<f64>, Metrics)> {
                let train = table.subset_rows(&train_rows);
                let model = fit(&train, &fold_params)?;
                let test_x = table.x.select_rows(test_rows);
                let preds = model.predict(&test_x)?;
                let truth: Vec<f64> = test_rows.iter().map(|&r| table.y[r]).collect();
                let fold_metrics = metrics(&preds, &truth)?;
                Ok((preds, fold_metrics))
            };
            let (preds, fold_metrics) = run().map_err(|e| e.in_fold(fold))?;
            Ok((test_rows.clone(), preds, fold_metrics))
        })
        .collect();
    let per_fold_results = per_fold_results?;

    let mut oof_pred = vec![f64::NAN; n];
    let mut per_fold = Vec::with_capacity(k);
    for (test_rows, preds, fold_metrics) in per_fold_results {
        for (&row, &p) in test_rows.iter().zip(&preds) {
            oof_pred[row] = p;
        }
        per_fold.push(fold_metrics);
    }
    let aggregate = metrics(&oof_pred, &table.y)?;
    Ok(CvOutcome {
        per_fold,
        aggregate,
        oof_pred,
    })
}

/// A hyper-parameter grid: parameter name → candidate values. Values may
/// be numbers, or for `max_depth` the string `"unlimited"`, and for `mtry`
/// the strings `"sqrt"` (√p, rounded down, at least 1) and `"all"` (p).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchGrid(pub BTreeMap<String, Vec<Value>>);

/// The grids used when a configuration names no explicit grid. Sized to
/// finish in minutes at desk scale.
pub fn default_grid(technique: Technique) -> SearchGrid {
    let mut map = BTreeMap::new();
    let ints = |values: &[u64]| -> Vec<Value> { values.iter().map(|&v| Value::from(v)).collect() };
    let reals = |values: &[f64]| -> Vec<Value> { values.iter().map(|&v| Value::from(v)).collect() };
    match technique {
        Technique::Rf => {
            map.insert("n_trees".to_string(), ints(&[100, 300]));
            map.insert(
                "max_depth".to_string(),
                vec![Value::from(10), Value::from(20), Value::from("unlimited")],
            );
            map.insert(
                "mtry".to_string(),
                vec![Value::from("sqrt"), Value::from("all"), Value::from(3)],
            );
            map.insert("min_samples_leaf".to_string(), ints(&[1, 5]));
        }
        Technique::Brt | Technique::Xgb => {
            map.insert("n_trees".to_string(), ints(&[100, 300]));
            map.insert("learning_rate".to_string(), reals(&[0.05, 0.1]));
            map.insert("max_depth".to_string(), ints(&[3, 6]));
            map.insert("subsample".to_string(), reals(&[0.5, 1.0]));
            if technique == Technique::Xgb {
                map.insert("lambda".to_string(), reals(&[0.0, 1.0]));
                map.insert("gamma".to_string(), reals(&[0.0]));
            }
        }
    }
    SearchGrid(map)
}

/// Canonical parameter order per technique: tuples compare position by
/// position in this order, so "lexicographically smallest" is
/// well-defined no matter how the grid map is keyed.
fn canonical_keys(technique: Technique) -> &'static [&'static str] {
    match technique {
        Technique::Rf => &[
            "n_trees",
            "max_depth",
            "mtry",
            "min_samples_leaf",
            "min_samples_split",
        ],
        Technique::Brt => &[
            "n_trees",
            "learning_rate",
            "max_depth",
            "subsample",
            "min_samples_leaf",
            "min_samples_split",
        ],
        Technique::Xgb => &[
            "n_trees",
            "learning_rate",
            "max_depth",
            "subsample",
            "lambda",
            "gamma",
            "min_samples_leaf",
            "min_samples_split",
        ],
    }
}

fn bad_grid_value(key: &str, value: &Value) -> Error {
    Error::InvalidParameter {
        name: key.to_string(),
        detail: format!("grid value {value} is not usable for this parameter"),
    }
}

/// Resolve one grid value to a number. The returned value doubles as the
/// tuple-ordering key; `max_depth: "unlimited"` resolves to +∞ so it
/// compares as the deepest option even though it is stored as the 0
/// sentinel.
fn resolve_value(key: &str, value: &Value, p: usize) -> Result<f64> {
    let as_uint = || value.as_u64().map(|v| v as f64);
    match key {
        "n_trees" | "min_samples_leaf" | "min_samples_split" => {
            as_uint().ok_or_else(|| bad_grid_value(key, value))
        }
        "max_depth" => match value.as_str() {
            Some("unlimited") => Ok(f64::INFINITY),
            Some(_) => Err(bad_grid_value(key, value)),
            None => match as_uint() {
                Some(0.0) => Ok(f64::INFINITY),
                Some(v) => Ok(v),
                None => Err(bad_grid_value(key, value)),
            },
        },
        "mtry" => match value.as_str() {
            Some("sqrt") => Ok(((p as f64).sqrt().floor()).max(1.0)),
            Some("all") => Ok(p as f64),
            Some(_) => Err(bad_grid_value(key, value)),
            None => match as_uint() {
                Some(0.0) => Ok(p as f64),
                Some(v) => Ok(v.min(p as f64)),
                None => Err(bad_grid_value(key, value)),
            },
        },
        "learning_rate" | "subsample" | "lambda" | "gamma" => value
            .as_f64()
            .ok_or_else(|| bad_grid_value(key, value)),
        _ => Err(Error::InvalidParameter {
            name: key.to_string(),
            detail: "unknown grid parameter".to_string(),
        }),
    }
}

fn apply_value(params: &mut EnsembleParams, key: &str, resolved: f64) -> Result<()> {
    fn tree(params: &mut EnsembleParams) -> &mut TreeParams {
        match params {
            EnsembleParams::Rf(p) => &mut p.tree,
            EnsembleParams::Brt(p) => &mut p.tree,
            EnsembleParams::Xgb(p) => &mut p.tree,
        }
    }
    let not_for_technique = || Error::InvalidParameter {
        name: key.to_string(),
        detail: "this parameter does not apply to the requested technique".to_string(),
    };
    match key {
        "n_trees" => match params {
            EnsembleParams::Rf(p) => p.n_trees = resolved as usize,
            EnsembleParams::Brt(p) => p.n_trees = resolved as usize,
            EnsembleParams::Xgb(p) => p.n_trees = resolved as usize,
        },
        "max_depth" => {
            tree(params).max_depth = if resolved.is_infinite() {
                0
            } else {
                resolved as usize
            }
        }
        "mtry" => tree(params).mtry = resolved as usize,
        "min_samples_leaf" => tree(params).min_samples_leaf = resolved as usize,
        "min_samples_split" => tree(params).min_samples_split = resolved as usize,
        "learning_rate" => match params {
            EnsembleParams::Brt(p) => p.learning_rate = resolved,
            EnsembleParams::Xgb(p) => p.learning_rate = resolved,
            EnsembleParams::Rf(_) => return Err(not_for_technique()),
        },
        "subsample" => match params {
            EnsembleParams::Brt(p) => p.subsample = resolved,
            EnsembleParams::Xgb(p) => p.subsample = resolved,
            EnsembleParams::Rf(_) => return Err(not_for_technique()),
        },
        "lambda" => match params {
            EnsembleParams::Xgb(p) => p.lambda = resolved,
            _ => return Err(not_for_technique()),
        },
        "gamma" => match params {
            EnsembleParams::Xgb(p) => p.gamma = resolved,
            _ => return Err(not_for_technique()),
        },
        _ => {
            return Err(Error::InvalidParameter {
                name: key.to_string(),
                detail: "unknown grid parameter".to_string(),
            })
        }
    }
    Ok(())
}

fn base_params(technique: Technique) -> EnsembleParams {
    match technique {
        Technique::Rf => EnsembleParams::Rf(RfParams::default()),
        Technique::Brt => EnsembleParams::Brt(BrtParams::default()),
        Technique::Xgb => EnsembleParams::Xgb(XgbParams::default()),
    }
}

/// Expand a grid into concrete parameter sets, in lexicographic tuple
/// order (canonical key order, each value list sorted ascending and
/// deduplicated, last key varying fastest).
pub fn expand_grid(
    technique: Technique,
    grid: &SearchGrid,
    n_features: usize,
) -> Result<Vec<EnsembleParams>> {
    if grid.0.is_empty() {
        return Err(Error::EmptyGrid {
            technique: technique.name().to_string(),
        });
    }
    for key in grid.0.keys() {
        if !canonical_keys(technique).contains(&key.as_str()) {
            return Err(Error::InvalidParameter {
                name: key.clone(),
                detail: format!("not a grid parameter of {technique}"),
            });
        }
    }
    // Resolve per key, in canonical order.
    let mut axes: Vec<(&str, Vec<f64>)> = Vec::new();
    for &key in canonical_keys(technique) {
        if let Some(values) = grid.0.get(key) {
            if values.is_empty() {
                return Err(Error::InvalidParameter {
                    name: key.to_string(),
                    detail: "grid value list is empty".to_string(),
                });
            }
            let mut resolved = values
                .iter()
                .map(|v| resolve_value(key, v, n_features))
                .collect::<Result<Vec<f64>>>()?;
            resolved.sort_by(f64::total_cmp);
            resolved.dedup();
            axes.push((key, resolved));
        }
    }

    let mut out = Vec::new();
    let mut counters = vec![0usize; axes.len()];
    loop {
        let mut params = base_params(technique);
        for (axis, &counter) in axes.iter().zip(&counters) {
            apply_value(&mut params, axis.0, axis.1[counter])?;
        }
        out.push(params);
        // Odometer increment, last axis fastest.
        let mut i = axes.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            counters[i] += 1;
            if counters[i] < axes[i].1.len() {
                break;
            }
            counters[i] = 0;
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPointResult {
    pub params: EnsembleParams,
    pub per_fold: Vec<Metrics>,
    pub aggregate: Metrics,
}

/// Outcome of a grid search: the winning point plus every evaluated point
/// in expansion order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub best: GridPointResult,
    pub all: Vec<GridPointResult>,
}

/// Exhaustively cross-validate every grid point; the winner has the
/// highest pooled R², ties broken toward the lexicographically smallest
/// parameter tuple (the expansion order makes that the earliest point).
pub fn grid_search(
    table: &SampleTable,
    technique: Technique,
    grid: &SearchGrid,
    k: usize,
    seed: u64,
) -> Result<GridSearchOutcome> {
    let points = expand_grid(technique, grid, table.n_features())?;
    let all: Result<Vec<GridPointResult>> = points
        .into_par_iter()
        .map(|params| {
            let outcome = cross_validate(table, &params, k, seed)?;
            Ok(GridPointResult {
                params,
                per_fold: outcome.per_fold,
                aggregate: outcome.aggregate,
            })
        })
        .collect();
    let all = all?;

    let mut best = 0;
    for (i, point) in all.iter().enumerate().skip(1) {
        if point.aggregate.r2 > all[best].aggregate.r2 {
            best = i;
        }
    }
    Ok(GridSearchOutcome {
        best: all[best].clone(),
        all,
    })
}

/// Per-feature percentage importance entry, largest first in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureImportance {
    pub name: String,
    pub percent: f64,
}

/// The full evaluation record written by training and evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub model_spec: String,
    pub target: String,
    pub technique: Technique,
    pub k: usize,
    pub seed: u64,
    pub per_fold: Vec<Metrics>,
    pub aggregate: Metrics,
    pub best_params: EnsembleParams,
    pub importance: Vec<FeatureImportance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_delta_pct: Option<f64>,
}

/// Flatten grid-search results to CSV, one row per grid point, for
/// spreadsheet inspection alongside the JSON report.
pub fn grid_results_csv(
    model_spec: &str,
    target: &str,
    technique: Technique,
    outcome: &GridSearchOutcome,
) -> String {
    let mut out = String::from(
        "model,target,technique,n_trees,max_depth,mtry,min_samples_leaf,min_samples_split,\
         learning_rate,subsample,lambda,gamma,rmse,mae,r2,best\n",
    );
    for point in &outcome.all {
        let (n_trees, tree, lr, subsample, lambda, gamma) = match &point.params {
            EnsembleParams::Rf(p) => (p.n_trees, &p.tree, None, None, None, None),
            EnsembleParams::Brt(p) => (
                p.n_trees,
                &p.tree,
                Some(p.learning_rate),
                Some(p.subsample),
                None,
                None,
            ),
            EnsembleParams::Xgb(p) => (
                p.n_trees,
                &p.tree,
                Some(p.learning_rate),
                Some(p.subsample),
                Some(p.lambda),
                Some(p.gamma),
            ),
        };
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        let depth = if tree.max_depth == 0 {
            "unlimited".to_string()
        } else {
            tree.max_depth.to_string()
        };
        let mtry = if tree.mtry == 0 {
            "all".to_string()
        } else {
            tree.mtry.to_string()
        };
        out.push_str(&format!(
            "{model_spec},{target},{technique},{n_trees},{depth},{mtry},{},{},{},{},{},{},{},{},{},{}\n",
            tree.min_samples_leaf,
            tree.min_samples_split,
            opt(lr),
            opt(subsample),
            opt(lambda),
            opt(gamma),
            fmt_real(point.aggregate.rmse),
            fmt_real(point.aggregate.mae),
            fmt_real(point.aggregate.r2),
            if point == &outcome.best { "yes" } else { "no" },
        ));
    }
    out
}
