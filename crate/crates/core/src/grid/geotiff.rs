//! Single-band float64 GeoTIFF reading and writing.
//!
//! Georeferencing uses the ModelPixelScale + ModelTiepoint tag pair; the
//! CRS identifier travels opaquely in GeoAsciiParams and the nodata
//! sentinel in the GDAL_NODATA ascii tag. Files without the scale/tiepoint
//! pair are rejected as not georeferenced. Compressed (deflate) inputs are
//! handled by the TIFF decoder transparently; output is written
//! uncompressed.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;
use tiff::ColorType;

use crate::jsonio::fmt_real;
use crate::{Error, Result};

use super::{GeoTransform, Grid};

pub fn read(path: &Path) -> Result<Grid> {
    let file = File::open(path).map_err(|e| Error::Unreadable {
        path: path.to_path_buf(),
        source: e,
    })?;
    let format_err = |detail: String| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        detail,
    };
    let geo_err = |detail: &str| Error::MissingGeoreference {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    let mut dec = Decoder::new(BufReader::new(file)).map_err(|e| format_err(e.to_string()))?;
    match dec.colortype().map_err(|e| format_err(e.to_string()))? {
        ColorType::Gray(_) => {}
        other => return Err(format_err(format!("expected single-band gray, got {other:?}"))),
    }
    let (width, height) = dec.dimensions().map_err(|e| format_err(e.to_string()))?;

    let scale = match dec.find_tag(Tag::ModelPixelScaleTag) {
        Ok(Some(_)) => dec
            .get_tag_f64_vec(Tag::ModelPixelScaleTag)
            .map_err(|e| format_err(e.to_string()))?,
        _ => return Err(geo_err("ModelPixelScale tag is absent")),
    };
    let tiepoint = match dec.find_tag(Tag::ModelTiepointTag) {
        Ok(Some(_)) => dec
            .get_tag_f64_vec(Tag::ModelTiepointTag)
            .map_err(|e| format_err(e.to_string()))?,
        _ => return Err(geo_err("ModelTiepoint tag is absent")),
    };
    if scale.len() < 2 || !(scale[0] > 0.0) || !(scale[1] > 0.0) {
        return Err(geo_err("ModelPixelScale must hold two positive sizes"));
    }
    if tiepoint.len() < 6 {
        return Err(geo_err("ModelTiepoint must hold at least one 6-tuple"));
    }
    let (pixel_w, pixel_h) = (scale[0], scale[1]);
    // Tiepoint maps raster point (i, j) to model (x, y).
    let origin_x = tiepoint[3] - tiepoint[0] * pixel_w;
    let origin_y = tiepoint[4] + tiepoint[1] * pixel_h;

    let crs = match dec.find_tag(Tag::GeoAsciiParamsTag) {
        Ok(Some(_)) => dec
            .get_tag_ascii_string(Tag::GeoAsciiParamsTag)
            .map_err(|e| format_err(e.to_string()))?
            .trim_end_matches(['|', '\0'])
            .to_string(),
        _ => String::new(),
    };
    let nodata = match dec.find_tag(Tag::GdalNodata) {
        Ok(Some(_)) => {
            let text = dec
                .get_tag_ascii_string(Tag::GdalNodata)
                .map_err(|e| format_err(e.to_string()))?;
            text.trim().trim_end_matches('\0').parse::<f64>().map_err(|e| {
                format_err(format!("GDAL_NODATA {text:?}: {e}"))
            })?
        }
        _ => f64::NAN,
    };

    let values: Vec<f64> = match dec.read_image().map_err(|e| format_err(e.to_string()))? {
        DecodingResult::F64(v) => v,
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        _ => return Err(format_err("unsupported sample type".to_string())),
    };

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
    Grid::new(&name, transform, width as usize, height as usize, values, nodata)
}

pub fn write(grid: &Grid, path: &Path) -> Result<()> {
    let write_err = |detail: String| Error::Unwritable {
        path: path.to_path_buf(),
        detail,
    };
    let file = File::create(path).map_err(|e| write_err(e.to_string()))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| write_err(e.to_string()))?;
    let mut image = enc
        .new_image::<colortype::Gray64Float>(grid.width() as u32, grid.height() as u32)
        .map_err(|e| write_err(e.to_string()))?;

    let t = &grid.transform;
    let tags = image.encoder();
    tags.write_tag(Tag::ModelPixelScaleTag, &[t.pixel_w, t.pixel_h, 0.0][..])
        .map_err(|e| write_err(e.to_string()))?;
    tags.write_tag(
        Tag::ModelTiepointTag,
        &[0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0][..],
    )
    .map_err(|e| write_err(e.to_string()))?;
    if !t.crs.is_empty() {
        let params = format!("{}|", t.crs);
        tags.write_tag(Tag::GeoAsciiParamsTag, params.as_str())
            .map_err(|e| write_err(e.to_string()))?;
    }
    tags.write_tag(Tag::GdalNodata, fmt_real(grid.nodata).as_str())
        .map_err(|e| write_err(e.to_string()))?;

    image
        .write_data(grid.values())
        .map_err(|e| write_err(e.to_string()))
}
