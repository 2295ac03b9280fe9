//! Collinearity screening: Pearson correlation and iterative VIF-based
//! feature elimination.
//!
//! The variance inflation factor of feature `j` is `1 / (1 − R²_j)`, where
//! `R²_j` is the coefficient of determination of the least-squares
//! regression of column `j` on all other columns plus an intercept.
//! `R²_j ≥ 1 − 1e-12` reports as +infinity. [`eliminate_collinear`]
//! removes the worst feature one at a time (never in batch) until every
//! survivor's VIF is below the threshold, recording each removal.
//!
//! Pairwise correlation enters only as a tie-breaker between equal VIFs:
//! the feature with the larger maximum absolute correlation against the
//! other survivors goes first, residual ties falling to the
//! lexicographically smallest name. The `r_threshold` argument documents
//! the screening level the procedure is calibrated to (highly correlated
//! means `|r| ≥ r_threshold`); removal itself is driven by VIF alone.

use serde::Serialize;

use crate::data::Matrix;
use crate::dataset::SampleTable;
use crate::{Error, Result};

pub const DEFAULT_VIF_THRESHOLD: f64 = 10.0;
pub const DEFAULT_R_THRESHOLD: f64 = 0.9;

/// R² at or above this reports an infinite VIF.
const R2_SATURATION: f64 = 1.0 - 1e-12;

/// Pearson correlation coefficient, clamped to [−1, 1].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "n".to_string(),
            detail: format!("pearson_r needs at least 2 points, got {}", x.len()),
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance {
            name: "x".to_string(),
        });
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance {
            name: "y".to_string(),
        });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// VIF for every column of `x`. `feature_names` label error messages and
/// must match the column count.
pub fn vif_scores(x: &Matrix, feature_names: &[String]) -> Result<Vec<f64>> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if feature_names.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: feature_names.len(),
        });
    }
    if p < 2 {
        return Err(Error::TooFewFeatures {
            context: "vif_scores".to_string(),
            needed: 2,
            have: p,
        });
    }
    if n <= p {
        return Err(Error::InvalidParameter {
            name: "n_samples".to_string(),
            detail: format!("need more samples than features, got {n} samples for {p} features"),
        });
    }
    for j in 0..p {
        let col = x.column(j);
        if col.iter().all(|v| *v == col[0]) {
            return Err(Error::ZeroVariance {
                name: feature_names[j].clone(),
            });
        }
    }

    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let r2 = regression_r2(x, j);
        out.push(if r2 >= R2_SATURATION {
            f64::INFINITY
        } else {
            1.0 / (1.0 - r2)
        });
    }
    Ok(out)
}

/// R² of regressing column `target` on all other columns plus an
/// intercept, via normal equations with escalating ridge jitter near
/// singularity. A design too singular to factor even after jitter is
/// perfectly collinear for our purposes and returns 1.0.
fn regression_r2(x: &Matrix, target: usize) -> f64 {
    let n = x.n_rows();
    let p = x.n_cols();
    let m = p; // intercept + (p - 1) predictors

    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    let mut design = vec![0.0; m];
    let mut y_sum = 0.0;
    for r in 0..n {
        design[0] = 1.0;
        let mut k = 1;
        for j in 0..p {
            if j != target {
                design[k] = x.get(r, j);
                k += 1;
            }
        }
        let yv = x.get(r, target);
        y_sum += yv;
        for i in 0..m {
            rhs[i] += design[i] * yv;
            for l in i..m {
                gram[i * m + l] += design[i] * design[l];
            }
        }
    }
    for i in 0..m {
        for l in 0..i {
            gram[i * m + l] = gram[l * m + i];
        }
    }

    let trace: f64 = (0..m).map(|i| gram[i * m + i]).sum();
    let mut jitter = 0.0;
    let beta = loop {
        if let Some(beta) = cholesky_solve(&gram, &rhs, m, jitter) {
            break beta;
        }
        jitter = if jitter == 0.0 {
            1e-10 * trace / m as f64
        } else {
            jitter * 100.0
        };
        if jitter > trace {
            return 1.0;
        }
    };

    let y_mean = y_sum / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for r in 0..n {
        let mut fitted = beta[0];
        let mut k = 1;
        for j in 0..p {
            if j != target {
                fitted += beta[k] * x.get(r, j);
                k += 1;
            }
        }
        let yv = x.get(r, target);
        ss_res += (yv - fitted) * (yv - fitted);
        ss_tot += (yv - y_mean) * (yv - y_mean);
    }
    if ss_tot == 0.0 {
        return 1.0; // constant target column; callers screen this earlier
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

/// Solve `(G + jitter·I) β = b` by Cholesky; `None` if the factorization
/// hits a non-positive or non-finite pivot.
fn cholesky_solve(gram: &[f64], rhs: &[f64], m: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut a = gram.to_vec();
    for i in 0..m {
        a[i * m + i] += jitter;
    }
    // Lower-triangular factor in place.
    for i in 0..m {
        for j in 0..=i {
            let mut sum = a[i * m + j];
            for k in 0..j {
                sum -= a[i * m + k] * a[j * m + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                a[i * m + i] = sum.sqrt();
            } else {
                a[i * m + j] = sum / a[j * m + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut z = vec![0.0; m];
    for i in 0..m {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= a[i * m + k] * z[k];
        }
        z[i] = sum / a[i * m + i];
    }
    let mut beta = vec![0.0; m];
    for i in (0..m).rev() {
        let mut sum = z[i];
        for k in i + 1..m {
            sum -= a[k * m + i] * beta[k];
        }
        beta[i] = sum / a[i * m + i];
    }
    Some(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EliminationStep {
    pub removed: String,
    /// The feature's VIF when it was removed (may be infinite, which
    /// canonical JSON encodes as null).
    pub vif_at_removal: f64,
    /// Its largest absolute pairwise correlation against the survivors.
    pub max_pairwise_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EliminationTrace {
    pub steps: Vec<EliminationStep>,
    pub surviving: Vec<String>,
}

/// Iteratively remove the feature with the largest VIF until all survivors
/// sit below `vif_threshold`.
///
/// Each iteration removes exactly one feature, so at most
/// `n_features − 1` steps run; the final feature is never removed (the
/// loop also stops when a single survivor remains, where VIF is
/// undefined). See the module docs for the tie-breaking rule and the role
/// of `r_threshold`.
pub fn eliminate_collinear(
    table: &SampleTable,
    vif_threshold: f64,
    r_threshold: f64,
) -> Result<EliminationTrace> {
    if !(vif_threshold > 1.0) {
        return Err(Error::InvalidParameter {
            name: "vif_threshold".to_string(),
            detail: format!("must exceed 1 (VIF is never below 1), got {vif_threshold}"),
        });
    }
    if !(0.0..=1.0).contains(&r_threshold) {
        return Err(Error::InvalidParameter {
            name: "r_threshold".to_string(),
            detail: format!("must lie in [0, 1], got {r_threshold}"),
        });
    }
    if table.n_features() < 2 {
        return Err(Error::TooFewFeatures {
            context: "eliminate_collinear".to_string(),
            needed: 2,
            have: table.n_features(),
        });
    }

    let mut survivors: Vec<usize> = (0..table.n_features()).collect();
    let mut steps = Vec::new();
    while survivors.len() >= 2 {
        let sub = table.x.select_columns(&survivors);
        let names: Vec<String> = survivors
            .iter()
            .map(|&c| table.feature_names[c].clone())
            .collect();
        let vifs = vif_scores(&sub, &names)?;

        let worst_vif = vifs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if worst_vif < vif_threshold {
            break;
        }
        let tied: Vec<usize> = (0..vifs.len()).filter(|&i| vifs[i] == worst_vif).collect();

        // max |r| against the other survivors, for the trace and ties.
        let max_abs_r = |i: usize| -> Result<f64> {
            let xi = sub.column(i);
            let mut best = 0.0f64;
            for k in 0..sub.n_cols() {
                if k != i {
                    let r = pearson_r(&xi, &sub.column(k))?.abs();
                    best = best.max(r);
                }
            }
            Ok(best)
        };

        let mut drop_at = tied[0];
        let mut drop_r = max_abs_r(tied[0])?;
        for &i in &tied[1..] {
            let r = max_abs_r(i)?;
            let better = r > drop_r || (r == drop_r && names[i] < names[drop_at]);
            if better {
                drop_at = i;
                drop_r = r;
            }
        }

        steps.push(EliminationStep {
            removed: names[drop_at].clone(),
            vif_at_removal: worst_vif,
            max_pairwise_r: drop_r,
        });
        survivors.remove(drop_at);
    }

    Ok(EliminationTrace {
        steps,
        surviving: survivors
            .iter()
            .map(|&c| table.feature_names[c].clone())
            .collect(),
    })
}
