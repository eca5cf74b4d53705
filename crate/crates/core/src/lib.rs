//! Numerical core of a hybrid real-time radiance-field representation: a
//! coarse triangle mesh, a view-dependent displacement map that nudges
//! ray–mesh hits before the color lookup, and a multi-resolution hash-grid
//! field decoded by a small MLP.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel
//! rendering, benchmarking and the command line live in the `mixrt` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod displacement;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod math;
pub mod quant;
pub mod render;
pub mod train;

pub use error::{Error, Result};
pub use math::{Vec2, Vec3};
