//! Software volume rendering of octree AMR simulation data.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type for the common double-precision case.
//!
//! - [`amr`]: the octree and its level-capped traversals
//! - [`dataset`], [`synth`]: PAMR files and the synthetic disk generator
//! - [`camera`]: orthographic view and level-of-detail cap
//! - [`splat`], [`ray`]: the two renderers
//! - [`postfx`]: adaptive blur and tone mapping
//! - [`parallel`]: master-worker pool, sort-last composition, benchmark
//! - [`ucd`]: dual-mesh VTK export

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amr;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod map;
pub mod parallel;
pub mod postfx;
pub mod ray;
pub mod scalar;
pub mod splat;
pub mod synth;
pub mod ucd;

pub use amr::{AmrTree, CellCoord, FieldDesc, LevelCounter, NodeRef};
pub use camera::{Camera, Ray};
pub use error::{Error, Result};
pub use geom::Vec3;
pub use map::{LevelMap, ScalarMap};
pub use ray::{RayMode, RenderResult};
pub use scalar::Real;

pub type AmrTree64 = AmrTree<f64>;
pub type AmrTree32 = AmrTree<f32>;
pub type Camera64 = Camera<f64>;
pub type Camera32 = Camera<f32>;
pub type ScalarMap64 = ScalarMap<f64>;
pub type ScalarMap32 = ScalarMap<f32>;
pub type Vec3d = Vec3<f64>;
