//! Scene contraction, hash-grid encoding, spherical harmonics, the small
//! decoder MLP and volume compositing.

mod composite;
mod contraction;
mod decoder;
mod grid;
pub(crate) mod sh;

pub use composite::{composite, Composited, FinalInterval, RaySample};
pub use contraction::{contract, contract_jacobian, uncontract, CONTRACTED_RADIUS};
pub use decoder::{decode, Decoded, DecoderTrace, DecoderWeights, DenseLayer};
pub use grid::{
    hash_index, level_resolutions, to_grid_space, HashGridConfig, HashGridField, LevelStencil,
    HASH_PRIMES,
};
pub use sh::{sh_eval, ShBasis, MAX_SH_DEGREE};
pub(crate) use sh::check_unit;
