//! Estimation of above-ground biomass (AGB) and soil organic carbon (SOC)
//! from co-registered raster predictor stacks.
//!
//! The crate covers the full modelling chain:
//!
//! 1. [`grid`] — raster ingestion, alignment and nearest-neighbour resampling
//! 2. [`indices`] — spectral indices (NDVI, EVI, SATVI) on aligned stacks
//! 3. [`dataset`] — sample extraction, one-hot encoding, target transforms,
//!    fold assignment and the predictor-set registry ([`dataset::registry`])
//! 4. [`selection`] — variance-inflation-factor screening of collinear bands
//! 5. [`trees`] — regression trees for both variance and gradient objectives
//! 6. [`ensembles`] — random forest, boosted trees and second-order boosting
//! 7. [`tuning`] — k-fold cross-validation, grid search, accuracy metrics
//! 8. [`mapping`] — wall-to-wall prediction, error and total-carbon surfaces
//! 9. [`synth`] — deterministic synthetic scenes for tests and examples
//!
//! Everything is deterministic: the same inputs and seeds produce
//! byte-identical models, reports and rasters regardless of thread count.

pub mod data;
pub mod dataset;
pub mod ensembles;
mod error;
pub mod grid;
pub mod indices;
pub mod jsonio;
pub mod mapping;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod trees;
pub mod tuning;

pub use error::{Error, Result};
