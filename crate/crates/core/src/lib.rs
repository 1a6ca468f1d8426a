//! Early-time relaxation rates of a frustrated spin-1/2 Heisenberg chain.
//!
//! The crate builds the chain Hamiltonian in magnetization sectors and
//! translation / spin-flip blocks, diagonalizes it densely, and evaluates
//! quench dynamics, the Srednicki and Kubo correlation functions, their
//! Gaussian decay rates, effective dimensions, and the Haar-random-basis
//! predictions for the same rates.

pub mod fitdim;
pub mod harness;
pub mod lattice;
pub mod model;
pub mod rmt;
pub mod spectral;
pub mod timescales;

pub use lattice::{
    block_labels, enumerate_sector, orbit_representative, sector_dimension, BasisError, Parity,
    SectorIndex, SectorLabels, SpinConfiguration, SymmetricBasis, DEFAULT_MAX_DIM,
};
pub use model::{
    build_hamiltonian, build_initial_state, build_observable, CouplingVector, InitialStateSpec,
    ModelError, ObservableSpec,
};
pub use spectral::{
    diagonalize, expectation_timeseries, make_quench_data, QuenchData, SpectralDecomposition,
    SpectralError,
};

/// Crate version, embedded in output headers and cache keys.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
