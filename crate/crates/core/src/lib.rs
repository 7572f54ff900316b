//! Paired skull and face shape regression.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases name the common instantiations.

pub mod correspondence;
pub mod dataset;
pub mod error;
pub mod geodesics;
pub mod landmarks;
pub mod lrr;
pub mod mesh;
pub mod model;
pub mod pca;
pub mod scalar;
pub mod shape_table;
pub mod synth;
pub mod validation;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

/// Double-precision aliases used by the command-line front end and file I/O.
pub type TriMesh64 = mesh::TriMesh<f64>;
pub type LandmarkSet64 = landmarks::LandmarkSet<f64>;
pub type ShapeTablePair64 = shape_table::ShapeTablePair<f64>;
pub type JointPcaModel64 = pca::JointPcaModel<f64>;
pub type LrrModel64 = lrr::LrrModel<f64>;
pub type Entry64 = dataset::Entry<f64>;

/// Single-precision aliases for memory-bound batch work.
pub type TriMesh32 = mesh::TriMesh<f32>;
pub type LandmarkSet32 = landmarks::LandmarkSet<f32>;
pub type ShapeTablePair32 = shape_table::ShapeTablePair<f32>;
