//! The Model A–H predictor registry.
//!
//! Each model names a fixed, ordered predictor list drawn from five data
//! sources plus, for the joint models, the opposite target and soil carbon
//! density:
//!
//! | source    | predictors                                            |
//! |-----------|-------------------------------------------------------|
//! | S1        | VH, VV                                                |
//! | S2        | B2–B7, B8A, B11, B12, EVI, NDVI, SATVI                |
//! | DEM       | Elevation, CS, LSF, TWI                               |
//! | L8        | L1–L11                                                |
//! | Inventory | Woodland                                              |
//!
//! The reduced models (AGB F/H, SOC E/G) hard-code their predictor subsets
//! verbatim so the registry is reproducible without rerunning collinearity
//! selection; the selection module can regenerate comparable lists on new
//! data. Feature order follows the source order of each model's
//! definition, expanding every source in the table order above.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::TargetTransform;
use crate::{Error, Result};

/// Response variable. AGB models fit the raw target; SOC models fit its
/// natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "AGB")]
    Agb,
    #[serde(rename = "SOC")]
    Soc,
}

impl Target {
    /// Band name the target is read from in a stack.
    pub fn band_name(self) -> &'static str {
        match self {
            Target::Agb => "AGB",
            Target::Soc => "SOC",
        }
    }

    pub fn transform(self) -> TargetTransform {
        match self {
            Target::Agb => TargetTransform::Identity,
            Target::Soc => TargetTransform::NaturalLog,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.band_name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Target> {
        match s {
            _ if s.eq_ignore_ascii_case("AGB") => Ok(Target::Agb),
            _ if s.eq_ignore_ascii_case("SOC") => Ok(Target::Soc),
            _ => Err(Error::InvalidParameter {
                name: "target".to_string(),
                detail: format!("{s:?} is not AGB or SOC"),
            }),
        }
    }
}

/// One registry entry: a named predictor list for one target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub name: String,
    pub target: Target,
    pub feature_names: Vec<String>,
    pub transform: TargetTransform,
}

const S1: &[&str] = &["VH", "VV"];
const S2: &[&str] = &[
    "B2", "B3", "B4", "B5", "B6", "B7", "B8A", "B11", "B12", "EVI", "NDVI", "SATVI",
];
const DEM: &[&str] = &["Elevation", "CS", "LSF", "TWI"];
const L8: &[&str] = &[
    "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "L9", "L10", "L11",
];
const INVENTORY: &[&str] = &["Woodland"];

fn expand(groups: &[&[&str]]) -> Vec<String> {
    groups
        .iter()
        .flat_map(|g| g.iter().map(|s| s.to_string()))
        .collect()
}

fn spec(name: &str, target: Target, features: Vec<String>) -> ModelSpec {
    ModelSpec {
        name: name.to_string(),
        target,
        feature_names: features,
        transform: target.transform(),
    }
}

fn build_registry() -> Vec<ModelSpec> {
    let mut out = Vec::with_capacity(12);
    for target in [Target::Agb, Target::Soc] {
        // Models A-D use whole sources and are shared by both targets.
        out.push(spec("A", target, expand(&[S1, S2, DEM])));
        out.push(spec("B", target, expand(&[L8, INVENTORY])));
        out.push(spec("C", target, expand(&[S1, DEM, INVENTORY])));
        out.push(spec("D", target, expand(&[S1, S2, L8, DEM, INVENTORY])));
    }

    // AGB Model F: S1, S2 (Band 4, 8A), NDVI, DEM, L8 (Band 5, 6, 8, 9)
    // and Inventory.
    out.push(spec(
        "F",
        Target::Agb,
        expand(&[
            S1,
            &["B4", "B8A", "NDVI"],
            DEM,
            &["L5", "L6", "L8", "L9"],
            INVENTORY,
        ]),
    ));
    // AGB Model H: S1, S2 excluding Band 2 and 3, DEM (CS, Elevation),
    // L8 (Band 5-7, 10, 11), Inventory, SOC, SOCD.
    out.push(spec(
        "H",
        Target::Agb,
        expand(&[
            S1,
            &[
                "B4", "B5", "B6", "B7", "B8A", "B11", "B12", "EVI", "NDVI", "SATVI",
            ],
            &["CS", "Elevation"],
            &["L5", "L6", "L7", "L10", "L11"],
            INVENTORY,
            &["SOC", "SOCD"],
        ]),
    ));
    // SOC Model E: S1, S2 (Band 2, 8A), EVI, DEM derivatives,
    // L8 (Band 4, 5, 6, 10), Inventory.
    out.push(spec(
        "E",
        Target::Soc,
        expand(&[
            S1,
            &["B2", "B8A", "EVI"],
            DEM,
            &["L4", "L5", "L6", "L10"],
            INVENTORY,
        ]),
    ));
    // SOC Model G: S1, S2, DEM, AGB.
    out.push(spec("G", Target::Soc, expand(&[S1, S2, DEM, &["AGB"]])));
    out
}

/// All twelve model specs: A–D for both targets, F/H for AGB, E/G for SOC.
pub fn registry() -> &'static [ModelSpec] {
    static REGISTRY: OnceLock<Vec<ModelSpec>> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

/// Look up a model by name and target.
pub fn find_spec(name: &str, target: Target) -> Result<&'static ModelSpec> {
    registry()
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name) && s.target == target)
        .ok_or_else(|| Error::UnknownSpec {
            name: name.to_string(),
            target: target.band_name().to_string(),
        })
}
