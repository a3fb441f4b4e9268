use thiserror::Error;

use crate::geometry::{Point, Rect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("zero-length segment at index {index}")]
    DegenerateSegment { index: usize },
    #[error("non-finite coordinate {0:?}")]
    NonFinite(Point),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("rectangle bounds are inverted or non-finite: {0:?}")]
    BadRect(Rect),
    #[error("direction must be a nonzero finite vector, got {0:?}")]
    BadDirection(Point),
    #[error("point {0:?} lies on the crack")]
    OnCrack(Point),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("element counts must be positive, got nx={nx}, ny={ny}")]
    BadCounts { nx: usize, ny: usize },
    #[error("crack tip {0:?} lies outside the domain")]
    TipOutsideDomain(Point),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid material: {0}")]
    Material(String),
    #[error("support at node {0} has no active degrees of freedom")]
    InactiveSupport(usize),
    #[error("load point {0:?} lies outside the domain")]
    LoadOutside(Point),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not positive definite: pivot {pivot:e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iteration-1 DOF {0} has no counterpart in the current system")]
    MissingDof(String),
    #[error("fill-reducing ordering failed: {0}")]
    Ordering(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FractureError {
    #[error("both stress intensity factors are zero")]
    NoField,
    #[error("integration radius {r_d:.4} mm is below one element ({h:.4} mm)")]
    RadiusTooSmall { r_d: f64, h: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("step {step}: {source}")]
    Solver { step: usize, source: SolverError },
    #[error("step {step}: {source}")]
    Fracture { step: usize, source: FractureError },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid optimizer setting: {0}")]
    Config(String),
    #[error("design space cannot host {n} strips with minimum radius {r_min} mm")]
    TooManyStrips { n: usize, r_min: f64 },
    #[error("feasible fraction {rate:.4} is below 1% after {tries} draws")]
    Infeasible { rate: f64, tries: usize },
    #[error("training diverged at epoch {epoch}: loss {loss:e} exceeds 10x initial {initial:e}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}
