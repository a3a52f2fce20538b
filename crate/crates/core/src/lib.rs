//! Relaxation of nematic director fields in a periodic post-array cell.
//!
//! The crate builds a structured grid around a square post, seeds one of the
//! four topological trial configurations (`T`, `P1`, `P2`, `P3`), minimizes the
//! discrete Oseen-Frank energy under the boundary constraints, and measures
//! the topological labels of the result (edge orientations, kink numbers,
//! vertex solid angles). [`experiments`] sweeps post heights and reports the
//! relative energy gaps; [`cli_io`] holds the configuration and file formats.

pub mod cli_io;
pub mod director;
pub mod energy;
pub mod experiments;
pub mod geometry;
pub mod relax;
pub mod topology;
pub mod vec3;

pub use director::{normalize_field, trial_field, DirectorField, TopologyClass};
pub use energy::{
    discrete_gradient, energy_breakdown, project_field, project_gradient, ElasticConstants,
    EnergyBreakdown, FrankEnergy, Quadrature,
};
pub use geometry::{CellParams, GridGeometry, NodeClass};

pub use relax::{relax, RelaxOptions, RelaxReport, StopReason};
pub use vec3::Vec3;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid does not conform to the post: {0}")]
    NonConformingGrid(String),
    #[error("invalid cell parameters: {0}")]
    InvalidParams(String),
    #[error("{what} index {index} out of range")]
    OutOfRange { what: &'static str, index: usize },
    #[error("trial vector vanishes at non-vertex node {0}")]
    DegenerateInterior(usize),
    #[error("topology {0} needs a post with vertical edges (h > 0)")]
    NeedsPost(TopologyClass),
    #[error("zero vector at node {0}")]
    ZeroVector(usize),
    #[error("node {node} is not unit length (deviation {deviation:e})")]
    NotNormalized { node: usize, deviation: f64 },
    #[error("expected {expected} nodal values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("unknown topology class {0:?}")]
    UnknownTopology(String),
    #[error("edge {0} is not aligned with its axis")]
    CorruptEdge(usize),
    #[error("director nearly normal to the path plane at node {0}")]
    ProjectionDegenerate(usize),
    #[error("path step at node {0} rotates by at least pi/2")]
    PathTooCoarse(usize),
    #[error("vertex surface is not closed: {0}")]
    SurfaceOpen(String),
    #[error("antipodal directors on a surface triangle at vertex {0}")]
    DegenerateTriangle(usize),
    #[error("operation needs a post (h > 0)")]
    NoPost,
    #[error("sweep specification is empty")]
    EmptySpec,
    #[error("invalid value for {key}: {reason}")]
    Parse { key: String, reason: String },
    #[error("malformed VTK input: {0}")]
    Vtk(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
