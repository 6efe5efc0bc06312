//! Multi-layer spherical depth maps for 3D shapes.
//!
//! A mesh normalized into the unit cube is observed from its center: one ray
//! per pixel of an equirectangular grid, every surface crossing recorded as a
//! depth in one of `k` layers. The crate encodes meshes into such maps,
//! stores them in a compact binary container, decodes them back into point
//! clouds and surfaces, and measures how much geometry survives the trip.

pub mod decode;
pub mod encode;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod kdtree;
pub mod marching;
pub mod metrics;
pub mod mesh;
pub mod mesh_io;
pub mod nested;
pub mod quality;
pub mod raycast;
pub mod sampling;
pub mod sphere;
pub mod spm;
pub mod winding;

pub use error::{Error, Result};
