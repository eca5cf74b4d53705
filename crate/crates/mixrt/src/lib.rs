//! File formats, the baked scene bundle, synthetic datasets, parallel
//! rendering, profiling and the `mixrt` command line, on top of
//! `mixrt-core`.

pub mod bench;
pub mod bundle;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod image_io;
pub mod mesh_io;
pub mod parallel;
pub mod pipeline;
pub mod synthetic;

pub use error::{MixrtError, Result};
