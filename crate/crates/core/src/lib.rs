//! Numerical laboratory for anisotropic co-rotational liquid-crystal flow in a
//! periodic strip near a heat-equation shear flow, and its hydrostatic limit.

pub mod aniso;
pub mod band;
pub mod banded;
pub mod checkpoint;
pub mod config;
pub mod dense;
pub mod error;
pub mod field;
pub mod grid;
pub mod hydro;
pub mod imex;
pub mod lab;
pub mod lp;
pub mod ops;
pub mod report;
pub mod selftest;
pub mod shear;
pub mod state;

pub use error::{LabError, Result};
pub use field::{ScalarField, SpectralField};
pub use grid::StripGrid;
