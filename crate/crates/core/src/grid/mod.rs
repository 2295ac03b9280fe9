//! Raster grids, georeferencing, alignment and resampling.
//!
//! A [`Grid`] is a single band of `f64` cells with a north-up affine
//! transform and an explicit nodata sentinel. Nodata is matched by bit
//! pattern (so a NaN sentinel works) and always propagates: no operation in
//! this crate interpolates across or fills missing cells.
//!
//! A [`GridStack`] is a set of grids that are pairwise aligned (same CRS
//! string, same dimensions, origins and pixel sizes equal within
//! [`GeoTransform::ALIGN_TOL`]) with unique band names. Stacks are the unit
//! the rest of the pipeline consumes.
//!
//! Two on-disk formats are supported, chosen by file extension:
//! `.tif`/`.tiff` (single-band float64 GeoTIFF) and `.grid`/`.txt`
//! (GridText v1, a plain-text format that round-trips bit-exactly and is
//! the canonical fixture format).

mod geotiff;
mod text;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// North-up affine georeferencing: `origin` is the outer corner of cell
/// (0, 0), x grows east by `pixel_w` per column, y shrinks south by
/// `pixel_h` per row. Both pixel sizes are stored positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
    /// Opaque identifier (e.g. `EPSG:32633`), compared for equality only.
    pub crs: String,
}

impl GeoTransform {
    /// Numeric tolerance for alignment checks on origins and pixel sizes.
    pub const ALIGN_TOL: f64 = 1e-6;

    pub fn new(origin_x: f64, origin_y: f64, pixel_w: f64, pixel_h: f64, crs: &str) -> GeoTransform {
        assert!(
            pixel_w > 0.0 && pixel_h > 0.0,
            "pixel sizes must be positive, got {pixel_w} x {pixel_h}"
        );
        GeoTransform {
            origin_x,
            origin_y,
            pixel_w,
            pixel_h,
            crs: crs.to_string(),
        }
    }

    /// Map coordinates of the center of cell (`row`, `col`).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_w,
            self.origin_y - (row as f64 + 0.5) * self.pixel_h,
        )
    }

    /// Same CRS, and origins / pixel sizes within [`Self::ALIGN_TOL`].
    pub fn aligned_with(&self, other: &GeoTransform) -> bool {
        self.crs == other.crs
            && (self.origin_x - other.origin_x).abs() <= Self::ALIGN_TOL
            && (self.origin_y - other.origin_y).abs() <= Self::ALIGN_TOL
            && (self.pixel_w - other.pixel_w).abs() <= Self::ALIGN_TOL
            && (self.pixel_h - other.pixel_h).abs() <= Self::ALIGN_TOL
    }
}

/// One named raster band.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub name: String,
    pub transform: GeoTransform,
    pub nodata: f64,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    /// Wrap row-major `values`; `values.len()` must equal `width * height`.
    pub fn new(
        name: &str,
        transform: GeoTransform,
        width: usize,
        height: usize,
        values: Vec<f64>,
        nodata: f64,
    ) -> Result<Grid> {
        if values.len() != width * height {
            return Err(Error::Malformed {
                what: format!("grid {name:?}"),
                detail: format!(
                    "{} values for {width} x {height} cells",
                    values.len()
                ),
            });
        }
        Ok(Grid {
            name: name.to_string(),
            transform,
            nodata,
            width,
            height,
            values,
        })
    }

    /// A constant-valued grid.
    pub fn filled(
        name: &str,
        transform: GeoTransform,
        width: usize,
        height: usize,
        fill: f64,
        nodata: f64,
    ) -> Grid {
        Grid::new(name, transform, width, height, vec![fill; width * height], nodata)
            .expect("length is width * height by construction")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col] = value;
    }

    /// Row-major cell values, including nodata cells.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodata is an exact bit-pattern match, so NaN sentinels compare true.
    #[inline]
    pub fn is_nodata(&self, value: f64) -> bool {
        value.to_bits() == self.nodata.to_bits()
    }

    /// Valid (non-nodata) values in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !self.is_nodata(*v))
    }

    /// Same shape and an aligned transform.
    pub fn aligned_with(&self, other: &Grid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.transform.aligned_with(&other.transform)
    }
}

/// A non-empty set of pairwise aligned grids with unique names.
#[derive(Debug, Clone)]
pub struct GridStack {
    grids: Vec<Grid>,
}

impl GridStack {
    /// Checks alignment exhaustively (every pair) and rejects duplicate
    /// names; order of `grids` is preserved.
    pub fn new(grids: Vec<Grid>) -> Result<GridStack> {
        if grids.is_empty() {
            return Err(Error::EmptyInput {
                context: "GridStack::new".to_string(),
            });
        }
        for i in 0..grids.len() {
            for j in (i + 1)..grids.len() {
                if grids[i].name == grids[j].name {
                    return Err(Error::DuplicateBand {
                        name: grids[i].name.clone(),
                    });
                }
                if !grids[i].aligned_with(&grids[j]) {
                    return Err(Error::Misaligned {
                        detail: format!(
                            "band {:?} does not align with band {:?}",
                            grids[j].name, grids[i].name
                        ),
                    });
                }
            }
        }
        Ok(GridStack { grids })
    }

    pub fn get(&self, name: &str) -> Option<&Grid> {
        self.grids.iter().find(|g| g.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.grids.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.grids[0].width()
    }

    pub fn height(&self) -> usize {
        self.grids[0].height()
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.grids[0].transform
    }

    /// Append a band, re-checking alignment and name uniqueness.
    pub fn push(&mut self, grid: Grid) -> Result<()> {
        if self.grids.iter().any(|g| g.name == grid.name) {
            return Err(Error::DuplicateBand { name: grid.name });
        }
        if let Some(g) = self.grids.iter().find(|g| !g.aligned_with(&grid)) {
            return Err(Error::Misaligned {
                detail: format!("band {:?} does not align with band {:?}", grid.name, g.name),
            });
        }
        self.grids.push(grid);
        Ok(())
    }
}

/// Read a grid, dispatching on the file extension (`.tif`/`.tiff` GeoTIFF,
/// `.grid`/`.txt` GridText).
pub fn read_grid(path: &Path) -> Result<Grid> {
    match extension(path).as_deref() {
        Some("tif") | Some("tiff") => geotiff::read(path),
        Some("grid") | Some("txt") => text::read(path),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "expected .tif, .tiff, .grid or .txt".to_string(),
        }),
    }
}

/// Write a grid, dispatching on the file extension like [`read_grid`].
pub fn write_grid(grid: &Grid, path: &Path) -> Result<()> {
    match extension(path).as_deref() {
        Some("tif") | Some("tiff") => geotiff::write(grid, path),
        Some("grid") | Some("txt") => text::write(grid, path),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "expected .tif, .tiff, .grid or .txt".to_string(),
        }),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_lowercase())
}

/// Nearest-neighbour resampling of `src` onto the `target` geometry.
///
/// For each target cell center, the source cell whose center is nearest is
/// copied verbatim — resampling never invents values. Distance ties break
/// to the smaller source row, then the smaller source column. Target cells
/// whose centers fall outside the source coverage rectangle become nodata,
/// and source nodata propagates unchanged.
pub fn resample_nearest(src: &Grid, target: &GeoTransform, width: usize, height: usize) -> Grid {
    assert!(width > 0 && height > 0, "target raster must be non-empty");
    assert!(
        target.pixel_w > 0.0 && target.pixel_h > 0.0,
        "target pixel sizes must be positive"
    );
    let mut out = Grid::filled(&src.name, target.clone(), width, height, src.nodata, src.nodata);
    if src.width == 0 || src.height == 0 {
        return out;
    }
    for row in 0..height {
        for col in 0..width {
            let (x, y) = target.cell_center(row, col);
            // Fractional position in source cell units.
            let u = (x - src.transform.origin_x) / src.transform.pixel_w;
            let v = (src.transform.origin_y - y) / src.transform.pixel_h;
            if u < 0.0 || u > src.width as f64 || v < 0.0 || v > src.height as f64 {
                continue; // outside source coverage -> stays nodata
            }
            let sc = nearest_index(u, src.width);
            let sr = nearest_index(v, src.height);
            out.set(row, col, src.get(sr, sc));
        }
    }
    out
}

/// Index of the source cell whose center (at `i + 0.5` in cell units) is
/// nearest to fractional position `t`; ties break to the smaller index.
fn nearest_index(t: f64, n: usize) -> usize {
    let c0 = (t - 0.5).floor();
    let c1 = c0 + 1.0;
    let in_range = |c: f64| c >= 0.0 && c < n as f64;
    match (in_range(c0), in_range(c1)) {
        (true, false) => c0 as usize,
        (false, true) => c1 as usize,
        (true, true) => {
            let d0 = (t - (c0 + 0.5)).abs();
            let d1 = (t - (c1 + 0.5)).abs();
            // Tie -> smaller index, i.e. c0.
            if d0 <= d1 {
                c0 as usize
            } else {
                c1 as usize
            }
        }
        (false, false) => unreachable!("t in [0, n] always has a neighbour"),
    }
}

/// Resample every input onto the reference geometry and assemble a stack.
///
/// Grids already aligned with the reference are taken as-is; the rest go
/// through [`resample_nearest`]. Name uniqueness and exhaustive pairwise
/// alignment are enforced by [`GridStack::new`].
pub fn stack(
    grids: Vec<Grid>,
    reference: &GeoTransform,
    width: usize,
    height: usize,
) -> Result<GridStack> {
    let resampled = grids
        .into_iter()
        .map(|g| {
            let aligned = g.width() == width
                && g.height() == height
                && g.transform.aligned_with(reference);
            if aligned {
                g
            } else {
                resample_nearest(&g, reference, width, height)
            }
        })
        .collect();
    GridStack::new(resampled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(origin_x: f64, origin_y: f64, pw: f64, ph: f64) -> GeoTransform {
        GeoTransform::new(origin_x, origin_y, pw, ph, "EPSG:32633")
    }

    fn small_grid(name: &str) -> Grid {
        // 3 x 2, values 1..=6 row-major.
        Grid::new(
            name,
            t(100.0, 500.0, 10.0, 10.0),
            3,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            -9999.0,
        )
        .unwrap()
    }

    #[test]
    fn new_rejects_wrong_value_count() {
        let err = Grid::new("b", t(0.0, 0.0, 1.0, 1.0), 2, 2, vec![0.0; 3], -1.0).unwrap_err();
        assert!(matches!(err, Error::Malformed { .. }), "got {err}");
    }

    #[test]
    fn nodata_matches_bit_pattern_including_nan() {
        let g = Grid::new("b", t(0.0, 0.0, 1.0, 1.0), 1, 1, vec![f64::NAN], f64::NAN).unwrap();
        assert!(g.is_nodata(g.get(0, 0)));
        assert!(!g.is_nodata(0.0));
        let h = Grid::new("b", t(0.0, 0.0, 1.0, 1.0), 1, 1, vec![0.0], -9999.0).unwrap();
        assert!(h.is_nodata(-9999.0));
        assert!(!h.is_nodata(-9999.000001));
    }

    #[test]
    fn cell_center_uses_north_up_convention() {
        let tr = t(100.0, 500.0, 10.0, 10.0);
        assert_eq!(tr.cell_center(0, 0), (105.0, 495.0));
        assert_eq!(tr.cell_center(1, 2), (125.0, 485.0));
    }

    #[test]
    fn alignment_tolerance_is_one_millionth() {
        let a = t(100.0, 500.0, 10.0, 10.0);
        let mut b = a.clone();
        b.origin_x += 9.9e-7;
        assert!(a.aligned_with(&b));
        b.origin_x = a.origin_x + 1.1e-6;
        assert!(!a.aligned_with(&b));
        let mut c = a.clone();
        c.crs = "EPSG:4326".to_string();
        assert!(!a.aligned_with(&c), "CRS mismatch must break alignment");
    }

    #[test]
    fn stack_rejects_duplicate_names_and_misalignment() {
        let a = small_grid("B4");
        let b = small_grid("B4");
        let err = GridStack::new(vec![a.clone(), b]).unwrap_err();
        assert!(matches!(err, Error::DuplicateBand { name } if name == "B4"));

        let mut shifted = small_grid("B8");
        shifted.transform.origin_x += 1.0;
        let err = GridStack::new(vec![a, shifted]).unwrap_err();
        assert!(matches!(err, Error::Misaligned { .. }));
    }

    #[test]
    fn identity_resample_is_exact() {
        let g = small_grid("B4");
        let r = resample_nearest(&g, &g.transform, g.width(), g.height());
        assert_eq!(r.values(), g.values());
    }

    #[test]
    fn downsample_two_by_two_block_takes_tied_upper_left() {
        // 2x2 source at 10 m, one 20 m target cell centered between all
        // four source centers: a four-way tie that must resolve to the
        // smaller row, then smaller column -> value 1.
        let src = Grid::new(
            "b",
            t(0.0, 40.0, 10.0, 10.0),
            2,
            2,
            vec![1.0, 2.0, 3.0, 4.0],
            -9999.0,
        )
        .unwrap();
        let target = t(0.0, 40.0, 20.0, 20.0);
        let r = resample_nearest(&src, &target, 1, 1);
        assert_eq!(r.get(0, 0), 1.0);
    }

    #[test]
    fn outside_coverage_becomes_nodata() {
        let src = small_grid("b");
        // Target extends one 10 m column east of the source.
        let target = t(100.0, 500.0, 10.0, 10.0);
        let r = resample_nearest(&src, &target, 4, 2);
        assert_eq!(r.get(0, 2), 3.0);
        assert!(r.is_nodata(r.get(0, 3)), "east of coverage must be nodata");
        assert!(r.is_nodata(r.get(1, 3)));
    }

    #[test]
    fn source_nodata_propagates_through_resampling() {
        let mut src = small_grid("b");
        src.set(0, 1, -9999.0);
        let fine = t(100.0, 500.0, 5.0, 5.0);
        let r = resample_nearest(&src, &fine, 6, 4);
        // Cells over source cell (0,1) all inherit the sentinel.
        for (row, col) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!(r.is_nodata(r.get(row, col)), "cell ({row},{col})");
        }
        assert_eq!(r.get(0, 0), 1.0);
    }

    #[test]
    fn stack_resamples_onto_reference() {
        // 25 m source resampled to a 300 m reference, as DEM ingestion does.
        let src = Grid::new(
            "Elevation",
            t(0.0, 300.0, 25.0, 25.0),
            12,
            12,
            (0..144).map(|i| i as f64).collect(),
            -9999.0,
        )
        .unwrap();
        let reference = t(0.0, 300.0, 300.0, 300.0);
        let s = stack(vec![src], &reference, 1, 1).unwrap();
        let g = s.get("Elevation").unwrap();
        // Target center (150,150) -> u = v = 6.0, tie between source cells
        // 5 and 6 -> index 5 in both axes -> value 5*12+5.
        assert_eq!(g.get(0, 0), 65.0);
    }

    proptest! {
        /// Resampling never invents values: every valid output value is
        /// bit-identical to some source value.
        #[test]
        fn resample_output_values_come_from_source(
            w in 1usize..7,
            h in 1usize..7,
            tw in 1usize..9,
            th in 1usize..9,
            ox in -50.0f64..50.0,
            oy in -50.0f64..50.0,
            pw in 0.5f64..4.0,
            ph in 0.5f64..4.0,
            seed in 0u64..1000,
        ) {
            let mut vals = Vec::with_capacity(w * h);
            let mut state = seed;
            for _ in 0..w * h {
                state = crate::rng::mix(state, 1);
                vals.push((state % 1000) as f64 / 7.0);
            }
            let src = Grid::new("p", t(0.0, 100.0, 2.0, 2.0), w, h, vals, -9999.0).unwrap();
            let target = GeoTransform::new(ox, oy, pw, ph, "EPSG:32633");
            let out = resample_nearest(&src, &target, tw, th);
            for v in out.valid_values() {
                prop_assert!(
                    src.values().iter().any(|s| s.to_bits() == v.to_bits()),
                    "value {v} not present in source"
                );
            }
        }

        /// Resampling a grid onto its own geometry is the identity.
        #[test]
        fn resample_idempotent_on_same_geometry(
            w in 1usize..8,
            h in 1usize..8,
            seed in 0u64..1000,
        ) {
            let mut vals = Vec::with_capacity(w * h);
            let mut state = seed;
            for _ in 0..w * h {
                state = crate::rng::mix(state, 1);
                vals.push((state % 997) as f64 * 0.25);
            }
            let src = Grid::new("p", t(-31.0, 77.0, 3.5, 1.25), w, h, vals, -9999.0).unwrap();
            let out = resample_nearest(&src, &src.transform, w, h);
            prop_assert_eq!(out.values(), src.values());
        }
    }
}
