pub mod cli;
pub mod dispersion;
pub mod error;
pub mod greens;
pub mod lattice;
pub mod reproduce;
pub mod returnprob;
pub mod sampler;
pub mod tables;
pub mod vanhove;
pub mod walks;

pub use dispersion::{Dispersion, Momentum};
pub use error::{Error, Result};
pub use lattice::{build_roots, Family, LatticeSpec, RootSystem};
