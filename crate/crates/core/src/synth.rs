//! Deterministic synthetic scene generator.
//!
//! Real study rasters cannot ship with this crate, so the pipeline is
//! exercised on a generated landscape whose causal structure mirrors the
//! qualitative claims the models are meant to reproduce:
//!
//! * a smooth canopy-vigor field drives the optical reflectances (red low
//!   and near-infrared high where vegetation is dense) and, thresholded,
//!   the binary woodland-inventory indicator;
//! * above-ground biomass is built from the woodland indicator (dominant
//!   term), canopy vigor, and an elevation penalty, plus bounded noise —
//!   so inventory and the Sentinel-2 bands genuinely carry most of the
//!   signal;
//! * the Landsat-8 bands observe the same latents through noticeably more
//!   noise, making them honest but information-poorer predictors;
//! * soil organic carbon is lognormal with its log-space mean tied to the
//!   standardized biomass field at correlation ≈ 0.62, so the two targets
//!   correlate near 0.6 on the raw scale;
//! * two deliberate near-duplicate band pairs (B8A against B8, B12 against
//!   B11) give collinearity screening something real to remove.
//!
//! Everything derives from one seeded RNG consumed in a fixed order, so a
//! `(width, height, seed)` triple always produces bit-identical grids.
//! A border ring of nodata cells (plus one small nodata blob in band B11)
//! exercises mask handling downstream.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{GeoTransform, Grid, GridStack};
use crate::indices::{compute_index, IndexKind};
use crate::jsonio::write_json_file;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Manifest format version.
pub const MANIFEST_VERSION: u32 = 1;

/// CRS stamped on every synthetic grid.
pub const SCENE_CRS: &str = "EPSG:32630";

/// RNG domain for scene generation.
const SCENE_STREAM: u64 = 0x5343_454e; // "SCEN"

/// Scene geometry and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Width of the all-nodata border ring, in cells.
    pub border: usize,
}

impl Default for SceneParams {
    fn default() -> SceneParams {
        SceneParams {
            width: 64,
            height: 64,
            seed: 0,
            border: 2,
        }
    }
}

/// Every band a scene contains, in generation order. The names match the
/// predictor registry, so a scene stacks directly into any model.
pub fn band_names() -> Vec<&'static str> {
    vec![
        "VH", "VV", // Sentinel-1
        "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12", // Sentinel-2
        "NDVI", "EVI", "SATVI", // derived indices
        "Elevation", "CS", "LSF", "TWI", // DEM derivatives
        "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "L9", "L10", "L11", // Landsat-8
        "Woodland", // inventory indicator
        "AGB", "SOC", "SOCD", // targets and companion
    ]
}

/// One file entry in a written scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub name: String,
    pub path: String,
    pub role: String,
}

/// Sidecar manifest describing a written scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub border: usize,
    pub crs: String,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
    pub files: Vec<SceneFile>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place standardization to zero mean, unit population variance.
fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// A smooth standardized random field: the sum of six seeded cosine plane
/// waves at low spatial frequencies.
fn smooth_field(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<f64> {
    const WAVES: usize = 6;
    let mut spec = Vec::with_capacity(WAVES);
    for k in 0..WAVES {
        let fx: f64 = rng.random_range(0.5..3.5);
        let fy: f64 = rng.random_range(0.5..3.5);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = 1.0 / (1.0 + k as f64 * 0.35);
        spec.push((fx, fy, phase, amp));
    }
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        let v = row as f64 / height as f64;
        for col in 0..width {
            let u = col as f64 / width as f64;
            let mut acc = 0.0;
            for &(fx, fy, phase, amp) in &spec {
                acc += amp * (std::f64::consts::TAU * (fx * u + fy * v) + phase).cos();
            }
            out.push(acc);
        }
    }
    standardize(&mut out);
    out
}

/// Uniform noise in (−1, 1), one draw per cell.
fn white_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Empirical quantile of a copy of `values` (nearest-rank).
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

/// Generate the full aligned band stack for `params`.
pub fn generate_scene(params: &SceneParams) -> Result<GridStack> {
    let SceneParams {
        width,
        height,
        seed,
        border,
    } = *params;
    let interior = 2 * border + 4;
    if width < interior || height < interior {
        return Err(Error::InvalidParameter {
            name: "width/height".to_string(),
            detail: format!(
                "a {width} x {height} scene leaves no interior inside a border of {border}"
            ),
        });
    }
    let n = width * height;
    let transform = GeoTransform::new(500_000.0, 6_200_000.0, 20.0, 20.0, SCENE_CRS);
    let mut rng = stream_rng(seed, SCENE_STREAM);

    // Latent landscape structure. Order matters: the RNG is consumed in a
    // fixed sequence.
    let canopy = smooth_field(&mut rng, width, height);
    let moisture = smooth_field(&mut rng, width, height);
    let terrain = smooth_field(&mut rng, width, height);
    let soil = smooth_field(&mut rng, width, height);

    // Woodland: canopy thresholded at its 45th percentile, ~55% cover.
    let wood_cut = quantile(&canopy, 0.45);
    let woodland: Vec<f64> = canopy
        .iter()
        .map(|&c| if c > wood_cut { 1.0 } else { 0.0 })
        .collect();

    // Vegetation vigor blends canopy state with moisture.
    let mut vigor: Vec<f64> = canopy
        .iter()
        .zip(&moisture)
        .map(|(&c, &m)| 0.8 * c + 0.2 * m)
        .collect();
    standardize(&mut vigor);

    // Terrain products.
    let elev_noise = white_noise(&mut rng, n);
    let elevation: Vec<f64> = (0..n)
        .map(|i| 300.0 + 120.0 * terrain[i] + 4.0 * elev_noise[i])
        .collect();
    // Slope from central differences of the (noise-free) terrain field.
    let mut slope = vec![0.0f64; n];
    let at = |r: usize, c: usize| terrain[r * width + c];
    for row in 0..height {
        for col in 0..width {
            let r0 = row.saturating_sub(1);
            let r1 = (row + 1).min(height - 1);
            let c0 = col.saturating_sub(1);
            let c1 = (col + 1).min(width - 1);
            let dz_dx = (at(row, c1) - at(row, c0)) / ((c1 - c0).max(1) as f64);
            let dz_dy = (at(r1, col) - at(r0, col)) / ((r1 - r0).max(1) as f64);
            slope[row * width + col] = (dz_dx * dz_dx + dz_dy * dz_dy).sqrt();
        }
    }
    standardize(&mut slope);
    let cs_noise = white_noise(&mut rng, n);
    let cs: Vec<f64> = (0..n)
        .map(|i| 6.0 + 3.0 * slope[i] + 0.4 * cs_noise[i])
        .collect();
    let lsf_noise = white_noise(&mut rng, n);
    let lsf: Vec<f64> = (0..n)
        .map(|i| (0.5 + 0.2 * slope[i] + 0.05 * lsf_noise[i]).max(0.01))
        .collect();
    let twi_noise = white_noise(&mut rng, n);
    let twi: Vec<f64> = (0..n)
        .map(|i| 8.0 - 1.5 * slope[i] + 0.8 * moisture[i] + 0.3 * twi_noise[i])
        .collect();

    // Sentinel-2 reflectances: clean views of the vigor/moisture latents.
    let band = |signal: &dyn Fn(usize) -> f64, noise_scale: f64, rng: &mut ChaCha8Rng| {
        let noise = white_noise(rng, n);
        (0..n)
            .map(|i| (signal(i) + noise_scale * noise[i]).max(1e-4))
            .collect::<Vec<f64>>()
    };
    let b2 = band(&|i| 0.06 + 0.06 * logistic(-vigor[i]), 0.005, &mut rng);
    let b3 = band(&|i| 0.08 + 0.10 * logistic(-0.5 * vigor[i]), 0.008, &mut rng);
    let b4 = band(&|i| 0.10 + 0.30 * logistic(-1.2 * vigor[i]), 0.010, &mut rng);
    let b5 = band(&|i| 0.20 + 0.18 * logistic(0.6 * vigor[i]), 0.010, &mut rng);
    let b6 = band(&|i| 0.18 + 0.24 * logistic(1.0 * vigor[i]), 0.010, &mut rng);
    let b7 = band(&|i| 0.17 + 0.28 * logistic(1.3 * vigor[i]), 0.010, &mut rng);
    let b8 = band(
        &|i| 0.15 + 0.35 * logistic(1.5 * vigor[i] + 0.8 * woodland[i]),
        0.010,
        &mut rng,
    );
    // Deliberate near-duplicates for collinearity screening.
    let b8a = band(&|i| 0.97 * b8[i], 0.003, &mut rng);
    let b11 = band(
        &|i| 0.30 - 0.10 * logistic(moisture[i]) - 0.06 * logistic(vigor[i]),
        0.008,
        &mut rng,
    );
    let b12 = band(&|i| 0.90 * b11[i], 0.004, &mut rng);

    // Sentinel-1 backscatter (dB, negative).
    let vh_noise = white_noise(&mut rng, n);
    let vh: Vec<f64> = (0..n)
        .map(|i| -18.0 + 6.0 * logistic(0.8 * vigor[i] + 0.8 * woodland[i]) + 0.5 * vh_noise[i])
        .collect();
    let vv_noise = white_noise(&mut rng, n);
    let vv: Vec<f64> = (0..n)
        .map(|i| -11.0 + 5.0 * logistic(0.6 * vigor[i]) + 0.5 * vv_noise[i])
        .collect();

    // Landsat-8: the same latents through roughly four times the noise,
    // plus two thermal bands tied to elevation and a near-pure-noise
    // cirrus band.
    let l1 = band(&|i| 0.07 + 0.05 * logistic(-vigor[i]), 0.020, &mut rng);
    let l2 = band(&|i| 0.07 + 0.06 * logistic(-0.8 * vigor[i]), 0.022, &mut rng);
    let l3 = band(&|i| 0.09 + 0.09 * logistic(-0.5 * vigor[i]), 0.025, &mut rng);
    let l4 = band(&|i| 0.11 + 0.26 * logistic(-1.1 * vigor[i]), 0.030, &mut rng);
    let l5 = band(
        &|i| 0.16 + 0.30 * logistic(1.3 * vigor[i] + 0.6 * woodland[i]),
        0.035,
        &mut rng,
    );
    let l6 = band(&|i| 0.28 - 0.08 * logistic(moisture[i]), 0.030, &mut rng);
    let l7 = band(&|i| 0.24 - 0.07 * logistic(0.8 * moisture[i]), 0.030, &mut rng);
    let l8_pan = band(
        &|i| 0.12 + 0.10 * logistic(-0.6 * vigor[i]) + 0.05 * logistic(0.5 * vigor[i]),
        0.030,
        &mut rng,
    );
    let l9 = band(&|_| 0.02, 0.015, &mut rng);
    let l10_noise = white_noise(&mut rng, n);
    let l10: Vec<f64> = (0..n)
        .map(|i| 291.0 - 0.0065 * (elevation[i] - 300.0) + 1.0 * l10_noise[i])
        .collect();
    let l11_noise = white_noise(&mut rng, n);
    let l11: Vec<f64> = (0..n)
        .map(|i| 289.5 - 0.0060 * (elevation[i] - 300.0) + 1.1 * l11_noise[i])
        .collect();

    // Above-ground biomass: inventory-dominated, vigor-assisted, with an
    // elevation penalty and bounded noise.
    let agb_noise = white_noise(&mut rng, n);
    let agb: Vec<f64> = (0..n)
        .map(|i| {
            (8.0 + 95.0 * woodland[i] + 40.0 * logistic(1.4 * vigor[i])
                - 0.06 * (elevation[i] - 280.0)
                + 6.0 * agb_noise[i])
                .max(0.0)
        })
        .collect();

    // Soil organic carbon: lognormal, log-mean tied to standardized AGB with
    // an independent soil component carrying the rest of the variance. The
    // log-scale weight of 0.80 lands the realized (post-exp) correlation with
    // AGB near 0.6; the exponentiation and the skewed AGB distribution both
    // shrink it below the log-scale value.
    let mut z_agb = agb.clone();
    standardize(&mut z_agb);
    let soc_white = white_noise(&mut rng, n);
    let mut z_soil: Vec<f64> = (0..n)
        .map(|i| 0.7 * soil[i] + 0.3 * moisture[i] + 0.2 * soc_white[i])
        .collect();
    standardize(&mut z_soil);
    let rho: f64 = 0.80;
    let ortho = (1.0 - rho * rho).sqrt();
    let soc: Vec<f64> = (0..n)
        .map(|i| (3.0 + 0.30 * (rho * z_agb[i] + ortho * z_soil[i])).exp())
        .collect();

    let socd_noise = white_noise(&mut rng, n);
    let socd: Vec<f64> = (0..n)
        .map(|i| (soc[i] * (0.75 + 0.15 * logistic(moisture[i])) + 0.2 * socd_noise[i]).max(0.01))
        .collect();

    // Assemble grids with NaN nodata, blank the border ring everywhere,
    // and punch a small extra nodata blob into B11 only.
    let named: Vec<(&str, Vec<f64>)> = vec![
        ("VH", vh),
        ("VV", vv),
        ("B2", b2),
        ("B3", b3),
        ("B4", b4),
        ("B5", b5),
        ("B6", b6),
        ("B7", b7),
        ("B8", b8),
        ("B8A", b8a),
        ("B11", b11),
        ("B12", b12),
        ("Elevation", elevation),
        ("CS", cs),
        ("LSF", lsf),
        ("TWI", twi),
        ("L1", l1),
        ("L2", l2),
        ("L3", l3),
        ("L4", l4),
        ("L5", l5),
        ("L6", l6),
        ("L7", l7),
        ("L8", l8_pan),
        ("L9", l9),
        ("L10", l10),
        ("L11", l11),
        ("Woodland", woodland),
        ("AGB", agb),
        ("SOC", soc),
        ("SOCD", socd),
    ];
    let in_border = |row: usize, col: usize| {
        row < border || col < border || row >= height - border || col >= width - border
    };
    let blob_center = (height / 3, width / 4);
    let in_blob = |row: usize, col: usize| {
        let dr = row as f64 - blob_center.0 as f64;
        let dc = col as f64 - blob_center.1 as f64;
        dr * dr + dc * dc <= 9.0
    };

    let mut grids = Vec::with_capacity(named.len() + IndexKind::ALL.len());
    for (name, mut values) in named {
        for row in 0..height {
            for col in 0..width {
                if in_border(row, col) || (name == "B11" && in_blob(row, col)) {
                    values[row * width + col] = f64::NAN;
                }
            }
        }
        grids.push(Grid::new(name, transform.clone(), width, height, values, f64::NAN)?);
    }
    let mut stack = GridStack::new(grids)?;

    // Spectral indices via the same code the CLI uses, so the scene and a
    // user-built stack are interchangeable.
    for kind in IndexKind::ALL {
        let index = compute_index(kind, &stack)?;
        stack.push(index)?;
    }
    Ok(stack)
}

fn role_of(name: &str) -> &'static str {
    match name {
        "AGB" | "SOC" => "target",
        _ => "predictor",
    }
}

/// Generate a scene and write every band as a GeoTIFF plus a JSON manifest
/// (`manifest.json`) describing the bundle.
pub fn write_scene(params: &SceneParams, dir: &Path) -> Result<SceneManifest> {
    let stack = generate_scene(params)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Unwritable {
        path: dir.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut files = Vec::with_capacity(stack.len());
    for grid in stack.grids() {
        let file = format!("{}.tif", grid.name);
        crate::grid::write_grid(grid, &dir.join(&file))?;
        files.push(SceneFile {
            name: grid.name.clone(),
            path: file,
            role: role_of(&grid.name).to_string(),
        });
    }
    let transform = stack.transform();
    let manifest = SceneManifest {
        version: MANIFEST_VERSION,
        width: stack.width(),
        height: stack.height(),
        seed: params.seed,
        border: params.border,
        crs: transform.crs.clone(),
        origin_x: transform.origin_x,
        origin_y: transform.origin_y,
        pixel_w: transform.pixel_w,
        pixel_h: transform.pixel_h,
        files,
    };
    write_json_file(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
