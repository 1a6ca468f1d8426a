//! Command-line orchestration: configuration, the six subcommands and
//! their CSV tables.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

use crate::lattice::BasisError;
use crate::model::ModelError;
use crate::rmt::RmtError;
use crate::spectral::SpectralError;
use crate::timescales::RateError;
use crate::fitdim::FitError;

pub use commands::{
    cmd_check_bounds, cmd_effdim, cmd_quench, cmd_ratios, cmd_rmt, cmd_sweep, standard_pairs, run,
    BoundsRow, Command, EffdimRow, PairSpec, QuenchOutput, RatioRow, RmtRow, SweepOutput,
    SweepRow,
};
pub use config::{RunConfig, SweepGrid, CACHE_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => EXIT_CONFIG,
            HarnessError::Numerical(_) => EXIT_NUMERICAL,
            HarnessError::Io(_) => EXIT_IO,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<BasisError> for HarnessError {
    fn from(e: BasisError) -> Self {
        match e {
            BasisError::SizeLimit { .. } => HarnessError::Config {
                field: "max_dim".into(),
                message: e.to_string(),
            },
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Basis(b) => b.into(),
            ModelError::SymmetryMismatch(_) => HarnessError::Config {
                field: "route".into(),
                message: e.to_string(),
            },
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<SpectralError> for HarnessError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Io(e) => e.into(),
            SpectralError::Cache(m) => HarnessError::Io(format!("spectral cache: {m}")),
            SpectralError::Model(m) => m.into(),
            SpectralError::Basis(b) => b.into(),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

impl From<RateError> for HarnessError {
    fn from(e: RateError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

impl From<FitError> for HarnessError {
    fn from(e: FitError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}

impl From<RmtError> for HarnessError {
    fn from(e: RmtError) -> Self {
        HarnessError::Numerical(e.to_string())
    }
}
