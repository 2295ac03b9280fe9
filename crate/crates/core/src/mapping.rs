//! Map products: per-cell prediction maps, absolute-error maps, the summed
//! total-carbon map, and PNG quicklooks.
//!
//! A prediction map walks every cell of an aligned stack, gathers the
//! model's predictors, and writes the model output back in raw target
//! units — a log-space model is exponentiated on the way out, so AGB and
//! SOC maps can be summed directly. Cells where any predictor is nodata
//! become nodata; the model never sees partial feature rows. All products
//! use NaN as their nodata marker regardless of the inputs' markers.
//!
//! The per-cell path and the tabular path are the same arithmetic: mapping
//! a stack and predicting on the extracted sample table agree to the last
//! bit, which the tests pin down.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::EnsembleModel;
use crate::grid::{Grid, GridStack};
use crate::jsonio::write_json_file;
use crate::{Error, Result};

/// Sidecar format version for quicklook metadata.
pub const QUICKLOOK_VERSION: u32 = 1;

/// Predict every cell of the stack with a trained model, in raw target
/// units. The model envelope names its own predictors, so no separate
/// feature list is needed.
pub fn predict_map(model: &EnsembleModel, stack: &GridStack) -> Result<Grid> {
    let bands: Vec<&Grid> = model
        .feature_names
        .iter()
        .map(|name| {
            stack.get(name).ok_or_else(|| Error::MissingBand {
                band: name.clone(),
                context: "predict_map".to_string(),
            })
        })
        .collect::<Result<Vec<&Grid>>>()?;

    let width = stack.width();
    let height = stack.height();
    let rows: Vec<Vec<f64>> = (0..height)
        .into_par_iter()
        .map(|row| {
            let mut out = Vec::with_capacity(width);
            let mut features = vec![0.0f64; bands.len()];
            'cells: for col in 0..width {
                for (slot, band) in features.iter_mut().zip(&bands) {
                    let value = band.get(row, col);
                    if band.is_nodata(value) {
                        out.push(f64::NAN);
                        continue 'cells;
                    }
                    *slot = value;
                }
                let pred = model.predict_row(&features)?;
                out.push(model.transform.invert(pred));
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let values: Vec<f64> = rows.into_iter().flatten().collect();
    Grid::new(
        &format!("{}_pred", model.target_name),
        stack.transform().clone(),
        width,
        height,
        values,
        f64::NAN,
    )
}

fn check_aligned(a: &Grid, b: &Grid, context: &str) -> Result<()> {
    if !a.aligned_with(b) {
        return Err(Error::Misaligned {
            detail: format!(
                "{context}: {:?} and {:?} differ in geometry or CRS",
                a.name, b.name
            ),
        });
    }
    Ok(())
}

/// Cellwise absolute difference |pred − truth|; nodata in either input
/// propagates.
pub fn error_map(pred: &Grid, truth: &Grid) -> Result<Grid> {
    check_aligned(pred, truth, "error_map")?;
    let values: Vec<f64> = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(&p, &t)| {
            if pred.is_nodata(p) || truth.is_nodata(t) {
                f64::NAN
            } else {
                (p - t).abs()
            }
        })
        .collect();
    Grid::new(
        &format!("{}_error", pred.name),
        pred.transform.clone(),
        pred.width(),
        pred.height(),
        values,
        f64::NAN,
    )
}

/// Cellwise sum of the two carbon maps; both must be in raw (non-log)
/// units. Nodata in either input propagates.
pub fn total_carbon_map(agb: &Grid, soc: &Grid) -> Result<Grid> {
    check_aligned(agb, soc, "total_carbon_map")?;
    let values: Vec<f64> = agb
        .values()
        .iter()
        .zip(soc.values())
        .map(|(&a, &s)| {
            if agb.is_nodata(a) || soc.is_nodata(s) {
                f64::NAN
            } else {
                a + s
            }
        })
        .collect();
    Grid::new(
        "total_carbon",
        agb.transform.clone(),
        agb.width(),
        agb.height(),
        values,
        f64::NAN,
    )
}

/// Multiply every valid cell by a unit-harmonization factor (e.g. a
/// biomass-to-carbon conversion); the name and nodata marker carry over.
pub fn scale_grid(grid: &Grid, factor: f64) -> Grid {
    let values: Vec<f64> = grid
        .values()
        .iter()
        .map(|&v| if grid.is_nodata(v) { v } else { v * factor })
        .collect();
    Grid::new(
        &grid.name,
        grid.transform.clone(),
        grid.width(),
        grid.height(),
        values,
        grid.nodata,
    )
    .expect("dimensions unchanged")
}

/// Metadata written next to a quicklook PNG: the stretch applied and the
/// geometry, so the image can be interpreted without the raster.
#[derive(Debug, Clone, Serialize)]
pub struct QuicklookMeta {
    pub version: u32,
    pub band: String,
    pub width: usize,
    pub height: usize,
    /// Value mapped to the ramp's low end.
    pub min: f64,
    /// Value mapped to the ramp's high end.
    pub max: f64,
    /// How nodata cells are rendered.
    pub nodata: String,
}

/// Fixed five-anchor color ramp (dark violet to yellow), linearly
/// interpolated.
const RAMP: [[u8; 3]; 5] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
];

fn ramp_color(t: f64) -> [u8; 3] {
    let clamped = t.clamp(0.0, 1.0);
    let scaled = clamped * (RAMP.len() - 1) as f64;
    let low = (scaled.floor() as usize).min(RAMP.len() - 2);
    let frac = scaled - low as f64;
    let mut color = [0u8; 3];
    for (i, channel) in color.iter_mut().enumerate() {
        let a = RAMP[low][i] as f64;
        let b = RAMP[low + 1][i] as f64;
        *channel = (a + (b - a) * frac).round() as u8;
    }
    color
}

/// Render a min–max-stretched PNG quicklook of the grid and a JSON sidecar
/// recording the stretch. Nodata cells come out fully transparent.
pub fn write_quicklook(grid: &Grid, png_path: &Path) -> Result<QuicklookMeta> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in grid.valid_values() {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::EmptyInput {
            context: format!("quicklook of {:?} (no valid cells)", grid.name),
        });
    }
    let span = max - min;

    let mut image = image::RgbaImage::new(grid.width() as u32, grid.height() as u32);
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let value = grid.get(row, col);
            let pixel = if grid.is_nodata(value) {
                image::Rgba([0, 0, 0, 0])
            } else {
                let t = if span == 0.0 {
                    0.5
                } else {
                    (value - min) / span
                };
                let [r, g, b] = ramp_color(t);
                image::Rgba([r, g, b, 255])
            };
            image.put_pixel(col as u32, row as u32, pixel);
        }
    }
    image
        .save_with_format(png_path, image::ImageFormat::Png)
        .map_err(|e| Error::Unwritable {
            path: png_path.to_path_buf(),
            detail: e.to_string(),
        })?;

    let meta = QuicklookMeta {
        version: QUICKLOOK_VERSION,
        band: grid.name.clone(),
        width: grid.width(),
        height: grid.height(),
        min,
        max,
        nodata: "transparent".to_string(),
    };
    let sidecar = png_path.with_extension("json");
    write_json_file(&sidecar, &meta)?;
    Ok(meta)
}
