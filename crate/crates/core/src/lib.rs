pub mod ansatz;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod exact;
pub mod hamiltonian;
pub mod observables;
pub mod runner;
pub mod sampler;
pub mod spin;
pub mod vmc;
pub mod wavefunction;

pub use error::{Error, Result};
