//! Spectral indices over aligned stacks.
//!
//! Three indices are supported, all computed cellwise from Sentinel-2
//! surface-reflectance bands:
//!
//! * NDVI = (B8 - B4) / (B8 + B4)
//! * EVI  = 2.5 * (B8 - B4) / (B8 + 6*B4 - 7.5*B2 + 1)
//! * SATVI = 2 * (B11 - B4) / (B11 + B4 + 1) - B12 / 2
//!
//! A cell is nodata in the output when any required input cell is nodata
//! in its own band, or when the denominator is exactly zero. Nothing is
//! clamped: out-of-range reflectances produce out-of-range indices.

use std::str::FromStr;

use crate::grid::{Grid, GridStack};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Ndvi,
    Evi,
    Satvi,
}

impl IndexKind {
    pub const ALL: [IndexKind; 3] = [IndexKind::Ndvi, IndexKind::Evi, IndexKind::Satvi];

    /// Band name the output grid carries.
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Ndvi => "NDVI",
            IndexKind::Evi => "EVI",
            IndexKind::Satvi => "SATVI",
        }
    }

    /// Input bands, in the order the cellwise formula consumes them.
    pub fn required_bands(self) -> &'static [&'static str] {
        match self {
            IndexKind::Ndvi => &["B8", "B4"],
            IndexKind::Evi => &["B8", "B4", "B2"],
            IndexKind::Satvi => &["B11", "B4", "B12"],
        }
    }

    /// (numerator, denominator, offset) for the cell values `v`, such that
    /// the index is `numerator / denominator + offset`.
    fn terms(self, v: &[f64]) -> (f64, f64, f64) {
        match self {
            IndexKind::Ndvi => (v[0] - v[1], v[0] + v[1], 0.0),
            IndexKind::Evi => (2.5 * (v[0] - v[1]), v[0] + 6.0 * v[1] - 7.5 * v[2] + 1.0, 0.0),
            IndexKind::Satvi => (2.0 * (v[0] - v[1]), v[0] + v[1] + 1.0, -v[2] / 2.0),
        }
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<IndexKind> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter {
                name: "index".to_string(),
                detail: format!("{s:?} is not one of NDVI, EVI, SATVI"),
            })
    }
}

/// Compute one index over `stack`. The output is aligned with the stack,
/// named after the index, and uses the first required band's nodata
/// sentinel.
pub fn compute_index(kind: IndexKind, stack: &GridStack) -> Result<Grid> {
    let bands: Vec<&Grid> = kind
        .required_bands()
        .iter()
        .map(|&b| {
            stack.get(b).ok_or_else(|| Error::MissingBand {
                band: b.to_string(),
                context: kind.name().to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let nodata = bands[0].nodata;
    let (width, height) = (stack.width(), stack.height());
    let mut values = Vec::with_capacity(width * height);
    let mut cell = vec![0.0; bands.len()];
    for row in 0..height {
        for col in 0..width {
            let mut missing = false;
            for (i, band) in bands.iter().enumerate() {
                let v = band.get(row, col);
                if band.is_nodata(v) {
                    missing = true;
                    break;
                }
                cell[i] = v;
            }
            if missing {
                values.push(nodata);
                continue;
            }
            let (num, den, offset) = kind.terms(&cell);
            if den == 0.0 {
                values.push(nodata);
            } else {
                values.push(num / den + offset);
            }
        }
    }
    Grid::new(kind.name(), stack.transform().clone(), width, height, values, nodata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GeoTransform;
    use proptest::prelude::*;

    const NODATA: f64 = -9999.0;

    fn transform() -> GeoTransform {
        GeoTransform::new(0.0, 300.0, 300.0, 300.0, "EPSG:32633")
    }

    fn one_cell_stack(bands: &[(&str, f64)]) -> GridStack {
        let grids = bands
            .iter()
            .map(|(name, v)| Grid::new(name, transform(), 1, 1, vec![*v], NODATA).unwrap())
            .collect();
        GridStack::new(grids).unwrap()
    }

    #[test]
    fn ndvi_matches_hand_computation() {
        let s = one_cell_stack(&[("B8", 0.5), ("B4", 0.3)]);
        let g = compute_index(IndexKind::Ndvi, &s).unwrap();
        assert_eq!(g.get(0, 0), 0.25); // (0.5-0.3)/(0.5+0.3), exact in binary
        assert_eq!(g.name, "NDVI");
    }

    #[test]
    fn evi_matches_hand_computation() {
        let s = one_cell_stack(&[("B8", 0.5), ("B4", 0.3), ("B2", 0.2)]);
        let g = compute_index(IndexKind::Evi, &s).unwrap();
        // 2.5 * 0.2 / (0.5 + 1.8 - 1.5 + 1.0)
        let expected = 2.5 * (0.5 - 0.3) / (0.5 + 6.0 * 0.3 - 7.5 * 0.2 + 1.0);
        assert!((g.get(0, 0) - expected).abs() < 1e-15);
        assert!((g.get(0, 0) - 0.2777777777777778).abs() < 1e-12);
    }

    #[test]
    fn satvi_keeps_the_unit_term_in_the_denominator() {
        let s = one_cell_stack(&[("B11", 0.4), ("B4", 0.2), ("B12", 0.3)]);
        let g = compute_index(IndexKind::Satvi, &s).unwrap();
        // 2*(0.4-0.2)/(0.4+0.2+1) - 0.3/2 = 0.25 - 0.15
        assert!((g.get(0, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_yields_nodata() {
        let s = one_cell_stack(&[("B8", 0.3), ("B4", -0.3)]);
        let g = compute_index(IndexKind::Ndvi, &s).unwrap();
        assert!(g.is_nodata(g.get(0, 0)));
    }

    #[test]
    fn input_nodata_propagates() {
        let s = one_cell_stack(&[("B8", NODATA), ("B4", 0.3)]);
        let g = compute_index(IndexKind::Ndvi, &s).unwrap();
        assert!(g.is_nodata(g.get(0, 0)));
    }

    #[test]
    fn missing_band_is_reported_by_name() {
        let s = one_cell_stack(&[("B8", 0.5)]);
        let err = compute_index(IndexKind::Ndvi, &s).unwrap_err();
        match err {
            Error::MissingBand { band, context } => {
                assert_eq!(band, "B4");
                assert_eq!(context, "NDVI");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn parses_names_case_insensitively() {
        assert_eq!("ndvi".parse::<IndexKind>().unwrap(), IndexKind::Ndvi);
        assert_eq!("SATVI".parse::<IndexKind>().unwrap(), IndexKind::Satvi);
        assert!("AVI".parse::<IndexKind>().is_err());
    }

    proptest! {
        /// NDVI stays in [-1, 1] wherever both reflectances are positive.
        #[test]
        fn ndvi_bounded_for_positive_reflectance(
            b8 in 1e-6f64..1.5,
            b4 in 1e-6f64..1.5,
        ) {
            let s = one_cell_stack(&[("B8", b8), ("B4", b4)]);
            let g = compute_index(IndexKind::Ndvi, &s).unwrap();
            let v = g.get(0, 0);
            prop_assert!((-1.0..=1.0).contains(&v), "NDVI {v} out of range");
        }

        /// NDVI is invariant under a common positive scaling of its bands.
        #[test]
        fn ndvi_scale_invariant(
            b8 in 0.01f64..1.5,
            b4 in 0.01f64..1.5,
            k in 0.1f64..10.0,
        ) {
            let a = compute_index(IndexKind::Ndvi, &one_cell_stack(&[("B8", b8), ("B4", b4)])).unwrap();
            let b = compute_index(
                IndexKind::Ndvi,
                &one_cell_stack(&[("B8", k * b8), ("B4", k * b4)]),
            ).unwrap();
            prop_assert!((a.get(0, 0) - b.get(0, 0)).abs() <= 1e-12);
        }
    }
}
