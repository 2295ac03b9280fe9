//! GridText v1 — plain-text raster fallback and fixture format.
//!
//! Eight header lines (`width`, `height`, `origin_x`, `origin_y`,
//! `pixel_w`, `pixel_h`, `crs`, `nodata`, in that order) followed by
//! `height` rows of `width` space-separated reals. Reals are written with
//! 17 significant digits so a write/read round-trip is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::jsonio::fmt_real;
use crate::{Error, Result};

use super::{GeoTransform, Grid};

pub fn read(path: &Path) -> Result<Grid> {
    let body = fs::read_to_string(path).map_err(|e| Error::Unreadable {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&body, path)
}

fn malformed(path: &Path, detail: String) -> Error {
    Error::Malformed {
        what: format!("GridText {}", path.display()),
        detail,
    }
}

fn parse(body: &str, path: &Path) -> Result<Grid> {
    let mut lines = body.lines();
    let mut header = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| malformed(path, format!("missing header line {key:?}")))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| malformed(path, format!("header line {line:?} has no value")))?;
        if k != key {
            return Err(malformed(path, format!("expected header {key:?}, found {k:?}")));
        }
        Ok(v.trim().to_string())
    };

    let width: usize = header("width")?
        .parse()
        .map_err(|e| malformed(path, format!("width: {e}")))?;
    let height: usize = header("height")?
        .parse()
        .map_err(|e| malformed(path, format!("height: {e}")))?;
    let mut real = |key: &str| -> Result<f64> {
        header(key)?
            .parse()
            .map_err(|e| malformed(path, format!("{key}: {e}")))
    };
    let origin_x = real("origin_x")?;
    let origin_y = real("origin_y")?;
    let pixel_w = real("pixel_w")?;
    let pixel_h = real("pixel_h")?;
    if !(pixel_w > 0.0) || !(pixel_h > 0.0) {
        return Err(malformed(
            path,
            format!("pixel sizes must be positive, got {pixel_w} x {pixel_h}"),
        ));
    }
    let crs = header("crs")?;
    let nodata: f64 = header("nodata")?
        .parse()
        .map_err(|e| malformed(path, format!("nodata: {e}")))?;

    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let line = lines
            .next()
            .ok_or_else(|| malformed(path, format!("missing data row {row}")))?;
        let mut n = 0usize;
        for tok in line.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| malformed(path, format!("row {row}: {tok:?}: {e}")))?;
            values.push(v);
            n += 1;
        }
        if n != width {
            return Err(malformed(
                path,
                format!("row {row} has {n} values, expected {width}"),
            ));
        }
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(malformed(path, format!("trailing content {extra:?}")));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let transform = GeoTransform {
        origin_x,
        origin_y,
        pixel_w,
        pixel_h,
        crs,
    };
    Grid::new(&name, transform, width, height, values, nodata)
}

pub fn write(grid: &Grid, path: &Path) -> Result<()> {
    let mut out = String::new();
    render(grid, &mut out);
    let write_err = |detail: String| Error::Unwritable {
        path: path.to_path_buf(),
        detail,
    };
    let mut file = fs::File::create(path).map_err(|e| write_err(e.to_string()))?;
    file.write_all(out.as_bytes())
        .map_err(|e| write_err(e.to_string()))
}

fn render(grid: &Grid, out: &mut String) {
    let t = &grid.transform;
    out.push_str(&format!("width {}\n", grid.width()));
    out.push_str(&format!("height {}\n", grid.height()));
    out.push_str(&format!("origin_x {}\n", fmt_real(t.origin_x)));
    out.push_str(&format!("origin_y {}\n", fmt_real(t.origin_y)));
    out.push_str(&format!("pixel_w {}\n", fmt_real(t.pixel_w)));
    out.push_str(&format!("pixel_h {}\n", fmt_real(t.pixel_h)));
    out.push_str(&format!("crs {}\n", t.crs));
    out.push_str(&format!("nodata {}\n", fmt_real(grid.nodata)));
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            if col > 0 {
                out.push(' ');
            }
            out.push_str(&fmt_real(grid.get(row, col)));
        }
        out.push('\n');
    }
}
