//! Two-dimensional X-FEM crack propagation with exact decomposed reanalysis,
//! and hole-placement optimization that steers a growing edge crack along a
//! prescribed path.

pub mod error;
pub mod fracture;
pub mod geometry;
pub mod mesh;
pub mod metamodel;
pub mod optimizer;
pub mod polygon;
pub mod simulate;
pub mod solver;
pub mod sparse;
pub mod xfem;
