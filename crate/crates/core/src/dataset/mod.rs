//! Sample assembly: one-hot encoding, sample extraction, target
//! transforms, fold assignment and the model registry.

pub mod registry;

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::grid::{Grid, GridStack};
use crate::jsonio::fmt_real;
use crate::rng::stream_rng;
use crate::{Error, Result};

use registry::ModelSpec;

/// Stream tag for the fold shuffle, keeping it out of the model streams.
const FOLD_STREAM: u64 = 0x464f_4c44;

/// Transform applied to the raw target before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    /// Requires all raw values > 0.
    NaturalLog,
}

impl TargetTransform {
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            TargetTransform::Identity => raw,
            TargetTransform::NaturalLog => raw.ln(),
        }
    }

    /// Map a model-space prediction back to raw target units.
    pub fn invert(self, transformed: f64) -> f64 {
        match self {
            TargetTransform::Identity => transformed,
            TargetTransform::NaturalLog => transformed.exp(),
        }
    }
}

/// A fully valid (nodata-free) table of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    /// Column names of `x`; unique, ordered.
    pub feature_names: Vec<String>,
    pub x: Matrix,
    /// Targets with `transform` already applied.
    pub y: Vec<f64>,
    pub target_name: String,
    pub transform: TargetTransform,
    /// Source cell of each sample, unique, row-major order.
    pub cell_index: Vec<(usize, usize)>,
}

impl SampleTable {
    pub fn n_samples(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    /// New table holding the given sample rows, in the order given.
    pub fn subset_rows(&self, rows: &[usize]) -> SampleTable {
        SampleTable {
            feature_names: self.feature_names.clone(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            target_name: self.target_name.clone(),
            transform: self.transform,
            cell_index: rows.iter().map(|&r| self.cell_index[r]).collect(),
        }
    }

    /// New table keeping only the named features, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<SampleTable> {
        let mut keep = Vec::with_capacity(names.len());
        for name in names {
            let col = self
                .feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::MissingBand {
                    band: name.clone(),
                    context: "select_features".to_string(),
                })?;
            keep.push(col);
        }
        Ok(SampleTable {
            feature_names: names.to_vec(),
            x: self.x.select_columns(&keep),
            y: self.y.clone(),
            target_name: self.target_name.clone(),
            transform: self.transform,
            cell_index: self.cell_index.clone(),
        })
    }

    /// CSV rendering: a header of feature names plus the target name, then
    /// one row per sample with 17-significant-digit reals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.feature_names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str(&self.target_name);
        out.push('\n');
        for row in 0..self.n_samples() {
            for col in 0..self.n_features() {
                out.push_str(&fmt_real(self.x.get(row, col)));
                out.push(',');
            }
            out.push_str(&fmt_real(self.y[row]));
            out.push('\n');
        }
        out
    }
}

/// One-hot encode a categorical grid into one indicator grid per category.
///
/// Indicators are named `{band}_{category}`, hold 1.0 where the cell equals
/// the category and 0.0 at other valid cells, and propagate nodata. Any
/// valid cell value outside `categories` is an error naming the value and
/// cell.
pub fn one_hot(grid: &Grid, categories: &[f64]) -> Result<GridStack> {
    if categories.is_empty() {
        return Err(Error::InvalidParameter {
            name: "categories".to_string(),
            detail: "must not be empty".to_string(),
        });
    }
    for (i, c) in categories.iter().enumerate() {
        if categories[..i].contains(c) {
            return Err(Error::InvalidParameter {
                name: "categories".to_string(),
                detail: format!("category {c} listed twice"),
            });
        }
    }

    let (width, height) = (grid.width(), grid.height());
    let mut indicators: Vec<Grid> = categories
        .iter()
        .map(|c| {
            Grid::filled(
                &format!("{}_{}", grid.name, category_label(*c)),
                grid.transform.clone(),
                width,
                height,
                0.0,
                grid.nodata,
            )
        })
        .collect();

    for row in 0..height {
        for col in 0..width {
            let value = grid.get(row, col);
            if grid.is_nodata(value) {
                for ind in &mut indicators {
                    ind.set(row, col, grid.nodata);
                }
                continue;
            }
            let Some(hit) = categories.iter().position(|c| *c == value) else {
                return Err(Error::UnknownCategory { value, row, col });
            };
            indicators[hit].set(row, col, 1.0);
        }
    }
    GridStack::new(indicators)
}

/// Compact label for a category value: integral values print as integers.
fn category_label(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

/// Extract one sample per cell where the target and every feature named by
/// `spec` are valid; rows are ordered row-major by cell.
pub fn extract_samples(stack: &GridStack, spec: &ModelSpec, target: &Grid) -> Result<SampleTable> {
    let bands: Vec<&Grid> = spec
        .feature_names
        .iter()
        .map(|name| {
            stack.get(name).ok_or_else(|| Error::MissingBand {
                band: name.clone(),
                context: format!("model {}", spec.name),
            })
        })
        .collect::<Result<_>>()?;
    if !bands.is_empty() && !target.aligned_with(&stack.grids()[0]) {
        return Err(Error::Misaligned {
            detail: format!(
                "target {:?} does not align with the predictor stack",
                target.name
            ),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_y = Vec::new();
    let mut cell_index = Vec::new();
    for row in 0..target.height() {
        'cells: for col in 0..target.width() {
            let tv = target.get(row, col);
            if target.is_nodata(tv) {
                continue;
            }
            let mut features = Vec::with_capacity(bands.len());
            for band in &bands {
                let v = band.get(row, col);
                if band.is_nodata(v) {
                    continue 'cells;
                }
                features.push(v);
            }
            rows.push(features);
            raw_y.push(tv);
            cell_index.push((row, col));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput {
            context: format!("extract_samples for model {}", spec.name),
        });
    }

    if spec.transform == TargetTransform::NaturalLog {
        let bad = raw_y.iter().filter(|v| **v <= 0.0).count();
        if bad > 0 {
            return Err(Error::NonPositiveTarget { count: bad });
        }
    }
    let y = raw_y.iter().map(|v| spec.transform.apply(*v)).collect();

    Ok(SampleTable {
        feature_names: spec.feature_names.clone(),
        x: Matrix::from_rows(&rows)?,
        y,
        target_name: spec.target.band_name().to_string(),
        transform: spec.transform,
        cell_index,
    })
}

/// Partition `0..n` into `k` disjoint folds via a seeded uniform shuffle.
/// Fold sizes differ by at most one (the first `n % k` folds take the
/// extra sample); each fold is sorted ascending. Deterministic in
/// `(n, k, seed)`.
pub fn train_test_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter {
            name: "k".to_string(),
            detail: format!("fold count must be >= 2, got {k}"),
        });
    }
    if k > n {
        return Err(Error::TooManyFolds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut stream_rng(seed, FOLD_STREAM));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let mut member: Vec<usize> = order[start..start + size].to_vec();
        member.sort_unstable();
        folds.push(member);
        start += size;
    }
    Ok(folds)
}
