//! Run configuration, read from TOML. Every key has a default, so an
//! empty file is a valid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fitdim::{DEFAULT_DT, DEFAULT_TAU_FIT};
use crate::lattice::DEFAULT_MAX_DIM;
use crate::model::{CouplingVector, InitialStateSpec, ObservableSpec};
use crate::spectral::{QuenchProblem, Route};
use crate::timescales::DEFAULT_KUBO_THRESHOLD;

use super::HarnessError;

/// Environment variable that overrides the configured cache directory.
pub const CACHE_ENV: &str = "QRELAX_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Neel,
    NeelCat,
    DomainWall,
}

impl StateKind {
    pub fn spec(self) -> InitialStateSpec {
        match self {
            StateKind::Neel => InitialStateSpec::Neel,
            StateKind::NeelCat => InitialStateSpec::NeelCat,
            StateKind::DomainWall => InitialStateSpec::DomainWallTi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableKind {
    A1,
    A2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteKind {
    Blocks,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Gaussian,
    Heisenberg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingRule {
    /// `(J1, J1 D/2, J1/2.7, J1 D/5.4)`
    Anisotropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub t_max: f64,
    pub dt: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            t_max: 5.0,
            dt: DEFAULT_DT,
        }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_max / self.dt + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub tau_fit: f64,
    pub taus: Vec<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tau_fit: DEFAULT_TAU_FIT,
            taus: vec![0.1, 0.2, 0.3, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub j1_min: f64,
    pub j1_max: f64,
    pub j1_step: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_step: f64,
    pub rule: CouplingRule,
    /// J1 value of the normalized cut; the nearest grid value is used.
    pub cut_j1: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            j1_min: -2.0,
            j1_max: -1.0,
            j1_step: 0.2,
            delta_min: 0.1,
            delta_max: 1.1,
            delta_step: 0.2,
            rule: CouplingRule::Anisotropy,
            cut_j1: -1.8,
        }
    }
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| min + i as f64 * step).collect()
}

impl SweepGrid {
    pub fn j1_values(&self) -> Vec<f64> {
        axis(self.j1_min, self.j1_max, self.j1_step)
    }

    pub fn delta_values(&self) -> Vec<f64> {
        axis(self.delta_min, self.delta_max, self.delta_step)
    }

    pub fn couplings(&self, j1: f64, delta: f64) -> CouplingVector {
        match self.rule {
            CouplingRule::Anisotropy => CouplingVector::anisotropy_sweep(j1, delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatiosConfig {
    pub lengths: Vec<u32>,
}

impl Default for RatiosConfig {
    fn default() -> Self {
        Self {
            lengths: vec![6, 8, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmtConfig {
    /// Hilbert-space dimension for the Gaussian spectrum.
    pub dim: usize,
    pub samples: usize,
    pub spectrum: SpectrumKind,
    /// Chain length whose `m_z = 0` spectrum is used for `heisenberg`.
    pub spectrum_length: u32,
}

impl Default for RmtConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            samples: 2000,
            spectrum: SpectrumKind::Gaussian,
            spectrum_length: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub lengths: Vec<u32>,
    pub t_max: f64,
    pub dt: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            lengths: vec![6, 8, 10],
            t_max: 20.0,
            dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub length: u32,
    pub couplings: CouplingVector,
    pub state: StateKind,
    pub observable: ObservableKind,
    /// Site of the single-site observable (bit index).
    pub site: u32,
    pub route: RouteKind,
    pub kubo_threshold: f64,
    pub seed: u64,
    pub max_dim: usize,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub time: TimeGrid,
    pub fit: FitConfig,
    pub sweep: SweepGrid,
    pub ratios: RatiosConfig,
    pub rmt: RmtConfig,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            length: 8,
            couplings: CouplingVector::default(),
            state: StateKind::Neel,
            observable: ObservableKind::A1,
            site: 0,
            route: RouteKind::Blocks,
            kubo_threshold: DEFAULT_KUBO_THRESHOLD,
            seed: 1,
            max_dim: DEFAULT_MAX_DIM,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            threads: None,
            time: TimeGrid::default(),
            fit: FitConfig::default(),
            sweep: SweepGrid::default(),
            ratios: RatiosConfig::default(),
            rmt: RmtConfig::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

fn bad(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_length(field: &str, l: u32) -> Result<(), HarnessError> {
    if l < 4 || l % 2 != 0 {
        return Err(bad(field, format!("chain length must be even and at least 4, got {l}")));
    }
    if l > 30 {
        return Err(bad(field, format!("chain length {l} is beyond dense reach")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| bad("<file>", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        check_length("length", self.length)?;
        if !self.couplings.is_finite() {
            return Err(bad("couplings", "all couplings must be finite"));
        }
        if self.site >= self.length {
            return Err(bad("site", format!("site {} outside 0..{}", self.site, self.length)));
        }
        if !(self.kubo_threshold >= 0.0 && self.kubo_threshold < 1.0) {
            return Err(bad("kubo_threshold", "must lie in [0, 1)"));
        }
        if self.max_dim == 0 {
            return Err(bad("max_dim", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be positive"));
        }
        if !(self.time.dt > 0.0) {
            return Err(bad("time.dt", "must be positive"));
        }
        if !(self.time.t_max >= self.time.dt) {
            return Err(bad("time.t_max", "must be at least time.dt"));
        }
        if !(self.fit.tau_fit > 0.0) {
            return Err(bad("fit.tau_fit", "must be positive"));
        }
        if self.fit.tau_fit > self.time.t_max || self.fit.taus.iter().any(|&t| t > self.time.t_max) {
            return Err(bad("fit.taus", "fit windows must not exceed time.t_max"));
        }
        if self.fit.taus.iter().any(|&t| !(t >= 0.0)) {
            return Err(bad("fit.taus", "entries must be nonnegative"));
        }
        let s = &self.sweep;
        for (name, lo, hi, step) in [
            ("sweep.j1", s.j1_min, s.j1_max, s.j1_step),
            ("sweep.delta", s.delta_min, s.delta_max, s.delta_step),
        ] {
            if !(step > 0.0) {
                return Err(bad(name, "step must be positive"));
            }
            if !(hi >= lo) {
                return Err(bad(name, "range is empty (max < min)"));
            }
        }
        if self.ratios.lengths.is_empty() {
            return Err(bad("ratios.lengths", "must not be empty"));
        }
        for &l in &self.ratios.lengths {
            check_length("ratios.lengths", l)?;
        }
        for &l in &self.bounds.lengths {
            check_length("bounds.lengths", l)?;
        }
        if !(self.bounds.dt > 0.0 && self.bounds.t_max >= 0.0) {
            return Err(bad("bounds", "dt must be positive and t_max nonnegative"));
        }
        if self.rmt.samples < 2 {
            return Err(bad("rmt.samples", "need at least 2 samples"));
        }
        if self.rmt.spectrum == SpectrumKind::Gaussian && (self.rmt.dim < 4 || self.rmt.dim % 2 != 0) {
            return Err(bad("rmt.dim", "must be even and at least 4"));
        }
        if self.rmt.dim > self.max_dim {
            return Err(bad("rmt.dim", format!("exceeds max_dim = {}", self.max_dim)));
        }
        if self.rmt.spectrum == SpectrumKind::Heisenberg {
            check_length("rmt.spectrum_length", self.rmt.spectrum_length)?;
        }
        Ok(())
    }

    /// Canonical serialization, used for the hash in output headers.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the canonical form with the output, cache and thread
    /// settings cleared, since they do not change any result.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        c.threads = None;
        let mut h = Sha256::new();
        h.update(c.canonical().as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    pub fn observable_spec(&self) -> ObservableSpec {
        match self.observable {
            ObservableKind::A1 => ObservableSpec::A1Site { site: self.site },
            ObservableKind::A2 => ObservableSpec::A2NnZz,
        }
    }

    pub fn route(&self) -> Route {
        match self.route {
            RouteKind::Blocks => Route::Blocks { use_spin_flip: true },
            RouteKind::Full => Route::FullSector,
        }
    }

    pub fn problem(&self, length: u32, couplings: CouplingVector, state: InitialStateSpec, observable: ObservableSpec) -> QuenchProblem {
        let mut p = QuenchProblem::new(length, couplings, state, observable).with_route(self.route());
        p.max_dim = self.max_dim;
        p
    }

    pub fn main_problem(&self) -> QuenchProblem {
        self.problem(self.length, self.couplings, self.state.spec(), self.observable_spec())
    }
}
