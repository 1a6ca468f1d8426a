//! The next-nearest-neighbour Heisenberg chain, its two observables and
//! the three quench initial states.
//!
//! `S^Z` has eigenvalues `+1` and `-1` and `S^+ = |up><down|`, so every
//! hopping term moves one antiparallel pair with unit amplitude. The chain
//! is periodic.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{
    flip_bits, spin_at, translate_bits, BasisError, SectorIndex, SymmetricBasis,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("the chain needs at least 4 sites, got {0}")]
    TooShort(u32),
    #[error("the standard initial states need an even number of sites, got {0}")]
    OddLength(u32),
    #[error("symmetry mismatch: {0}")]
    SymmetryMismatch(String),
    #[error("state has weight {weight:.3e} inside the requested basis, expected 1")]
    SupportOutsideBasis { weight: f64 },
    #[error("basis has {basis} sites but the model has {model}")]
    LengthMismatch { basis: u32, model: u32 },
    #[error("couplings must be finite")]
    NonFiniteCoupling,
    #[error("custom state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// `(J1, gamma1, J2, gamma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector {
    pub j1: f64,
    pub gamma1: f64,
    pub j2: f64,
    pub gamma2: f64,
}

impl Default for CouplingVector {
    fn default() -> Self {
        Self {
            j1: -1.0,
            gamma1: 1.0,
            j2: -0.2,
            gamma2: 0.5,
        }
    }
}

impl CouplingVector {
    pub fn new(j1: f64, gamma1: f64, j2: f64, gamma2: f64) -> Self {
        Self {
            j1,
            gamma1,
            j2,
            gamma2,
        }
    }

    /// The anisotropy sweep family `(J1, J1 D/2, J2, J2 D/2)` with `J2 = J1/2.7`.
    pub fn anisotropy_sweep(j1: f64, delta: f64) -> Self {
        let j2 = j1 / 2.7;
        Self {
            j1,
            gamma1: j1 * delta / 2.0,
            j2,
            gamma2: j2 * delta / 2.0,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            j1: c * self.j1,
            gamma1: c * self.gamma1,
            j2: c * self.j2,
            gamma2: c * self.gamma2,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.j1, self.gamma1, self.j2, self.gamma2]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// An operator given by its action on configurations.
pub trait ConfigOperator: Send + Sync {
    /// Appends the nonzero amplitudes `(c', <c'|O|bits>)` to `out`.
    fn apply(&self, bits: u64, out: &mut Vec<(u64, Complex64)>);
    fn length(&self) -> u32;
    fn translation_invariant(&self) -> bool;
    fn flip_invariant(&self) -> bool;
    /// Whether the operator is diagonal in the configuration basis.
    fn is_diagonal(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hamiltonian {
    pub length: u32,
    pub couplings: CouplingVector,
}

impl Hamiltonian {
    pub fn new(length: u32, couplings: CouplingVector) -> Result<Self, ModelError> {
        if length < 4 {
            return Err(ModelError::TooShort(length));
        }
        if !couplings.is_finite() {
            return Err(ModelError::NonFiniteCoupling);
        }
        Ok(Self { length, couplings })
    }

    pub fn diagonal(&self, bits: u64) -> f64 {
        let l = self.length;
        let c = &self.couplings;
        let mut e = 0.0;
        for j in 0..l {
            let s = spin_at(bits, j);
            e += c.gamma1 * s * spin_at(bits, (j + 1) % l);
            e += c.gamma2 * s * spin_at(bits, (j + 2) % l);
        }
        e
    }
}

impl ConfigOperator for Hamiltonian {
    fn apply(&self, bits: u64, out: &mut Vec<(u64, Complex64)>) {
        let l = self.length;
        let diag = self.diagonal(bits);
        if diag != 0.0 {
            out.push((bits, Complex64::new(diag, 0.0)));
        }
        for (range, amp) in [(1, self.couplings.j1), (2, self.couplings.j2)] {
            if amp == 0.0 {
                continue;
            }
            for j in 0..l {
                let k = (j + range) % l;
                if (bits >> j) & 1 != (bits >> k) & 1 {
                    out.push((bits ^ ((1 << j) | (1 << k)), Complex64::new(amp, 0.0)));
                }
            }
        }
    }

    fn length(&self) -> u32 {
        self.length
    }

    fn translation_invariant(&self) -> bool {
        true
    }

    fn flip_invariant(&self) -> bool {
        true
    }
}

type Action = dyn Fn(u64, &mut Vec<(u64, Complex64)>) + Send + Sync;

/// A user-supplied observable, defined by its configuration action.
#[derive(Clone)]
pub struct CustomObservable {
    pub name: String,
    pub translation_invariant: bool,
    pub flip_invariant: bool,
    pub diagonal: bool,
    pub action: Arc<Action>,
}

impl fmt::Debug for CustomObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomObservable")
            .field("name", &self.name)
            .field("translation_invariant", &self.translation_invariant)
            .field("flip_invariant", &self.flip_invariant)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum ObservableSpec {
    /// `S^Z` on one site (bit index).
    A1Site { site: u32 },
    /// `(1/L) sum_j S^Z_j S^Z_{j+1}`.
    A2NnZz,
    Custom(CustomObservable),
}

impl ObservableSpec {
    pub fn a1() -> Self {
        ObservableSpec::A1Site { site: 0 }
    }

    pub fn name(&self) -> String {
        match self {
            ObservableSpec::A1Site { site } if *site == 0 => "A1".to_string(),
            ObservableSpec::A1Site { site } => format!("A1@{site}"),
            ObservableSpec::A2NnZz => "A2".to_string(),
            ObservableSpec::Custom(c) => c.name.clone(),
        }
    }

    pub fn bind(&self, length: u32) -> Observable {
        Observable {
            length,
            spec: self.clone(),
        }
    }
}

/// An observable specification attached to a chain length.
#[derive(Debug, Clone)]
pub struct Observable {
    length: u32,
    spec: ObservableSpec,
}

impl Observable {
    /// Diagonal value on a configuration, for the diagonal kinds.
    pub fn diagonal_value(&self, bits: u64) -> Option<f64> {
        let l = self.length;
        match &self.spec {
            ObservableSpec::A1Site { site } => Some(spin_at(bits, site % l)),
            ObservableSpec::A2NnZz => Some(
                (0..l)
                    .map(|j| spin_at(bits, j) * spin_at(bits, (j + 1) % l))
                    .sum::<f64>()
                    / f64::from(l),
            ),
            ObservableSpec::Custom(_) => None,
        }
    }
}

impl ConfigOperator for Observable {
    fn apply(&self, bits: u64, out: &mut Vec<(u64, Complex64)>) {
        match &self.spec {
            ObservableSpec::Custom(c) => (c.action)(bits, out),
            _ => {
                let v = self.diagonal_value(bits).unwrap_or(0.0);
                if v != 0.0 {
                    out.push((bits, Complex64::new(v, 0.0)));
                }
            }
        }
    }

    fn length(&self) -> u32 {
        self.length
    }

    fn translation_invariant(&self) -> bool {
        match &self.spec {
            ObservableSpec::A1Site { .. } => false,
            ObservableSpec::A2NnZz => true,
            ObservableSpec::Custom(c) => c.translation_invariant,
        }
    }

    fn flip_invariant(&self) -> bool {
        match &self.spec {
            ObservableSpec::A1Site { .. } => false,
            ObservableSpec::A2NnZz => true,
            ObservableSpec::Custom(c) => c.flip_invariant,
        }
    }

    fn is_diagonal(&self) -> bool {
        match &self.spec {
            ObservableSpec::Custom(c) => c.diagonal,
            _ => true,
        }
    }
}

/// Dense matrix of `op` in a symmetry block.
pub fn operator_matrix(
    op: &dyn ConfigOperator,
    basis: &SymmetricBasis,
) -> Result<Array2<Complex64>, ModelError> {
    if op.length() != basis.length() {
        return Err(ModelError::LengthMismatch {
            basis: basis.length(),
            model: op.length(),
        });
    }
    let labels = basis.labels();
    if labels.momentum.is_some() && !op.translation_invariant() {
        return Err(ModelError::SymmetryMismatch(format!(
            "operator is not translation invariant but the block has momentum label ({labels})"
        )));
    }
    if labels.spin_flip.is_some() && !op.flip_invariant() {
        return Err(ModelError::SymmetryMismatch(format!(
            "operator is not spin-flip invariant but the block has a parity label ({labels})"
        )));
    }
    let n = basis.dim();
    let mut m = Array2::<Complex64>::zeros((n, n));
    let mut terms = Vec::new();
    for (col, &rep) in basis.representative_bits().iter().enumerate() {
        terms.clear();
        op.apply(rep, &mut terms);
        let norm = basis.norms()[col];
        for &(c, h) in &terms {
            if let Some((row, factor)) = basis.locate(c) {
                m[[row, col]] += h * factor / norm;
            }
        }
    }
    Ok(m)
}

/// `O v` for a vector over the plain magnetization sector.
pub fn apply_in_sector(
    op: &dyn ConfigOperator,
    sector: &SectorIndex,
    v: ArrayView1<Complex64>,
) -> Array1<Complex64> {
    let mut out = Array1::<Complex64>::zeros(sector.len());
    let mut terms = Vec::new();
    for (j, &c) in sector.configs().iter().enumerate() {
        let x = v[j];
        if x == Complex64::new(0.0, 0.0) {
            continue;
        }
        terms.clear();
        op.apply(c, &mut terms);
        for &(c2, h) in &terms {
            if let Some(i) = sector.position(c2) {
                out[i] += h * x;
            }
        }
    }
    out
}

/// Dense matrix of `op` on the whole `2^L` space, configuration order.
pub fn full_space_matrix(op: &dyn ConfigOperator) -> Array2<Complex64> {
    let l = op.length();
    assert!(l <= 14, "full-space matrices are limited to 14 sites");
    let n = 1usize << l;
    let mut m = Array2::<Complex64>::zeros((n, n));
    let mut terms = Vec::new();
    for col in 0..n {
        terms.clear();
        op.apply(col as u64, &mut terms);
        for &(row, h) in &terms {
            m[[row as usize, col]] += h;
        }
    }
    m
}

pub fn build_hamiltonian(
    length: u32,
    couplings: CouplingVector,
    basis: &SymmetricBasis,
) -> Result<Array2<Complex64>, ModelError> {
    operator_matrix(&Hamiltonian::new(length, couplings)?, basis)
}

pub fn build_observable(
    length: u32,
    spec: &ObservableSpec,
    basis: &SymmetricBasis,
) -> Result<Array2<Complex64>, ModelError> {
    operator_matrix(&spec.bind(length), basis)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialStateSpec {
    /// `|up down up down ...>`, site 1 up.
    Neel,
    /// `(|Neel> + T|Neel>)/sqrt 2`.
    NeelCat,
    /// `(1/sqrt L) sum_r T^r |up ... up down ... down>`.
    DomainWallTi,
    /// Explicit configuration amplitudes; must be normalized.
    Custom(Vec<(u64, Complex64)>),
}

impl InitialStateSpec {
    pub fn name(&self) -> &'static str {
        match self {
            InitialStateSpec::Neel => "psi",
            InitialStateSpec::NeelCat => "psi'",
            InitialStateSpec::DomainWallTi => "phi",
            InitialStateSpec::Custom(_) => "custom",
        }
    }

    /// Nonzero amplitudes over configurations, each configuration once.
    pub fn amplitudes(&self, length: u32) -> Result<Vec<(u64, Complex64)>, ModelError> {
        let needs_even = !matches!(self, InitialStateSpec::Custom(_));
        if needs_even && length % 2 != 0 {
            return Err(ModelError::OddLength(length));
        }
        let neel: u64 = (0..length).step_by(2).map(|j| 1u64 << j).sum();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps: Vec<(u64, Complex64)> = match self {
            InitialStateSpec::Neel => vec![(neel, Complex64::new(1.0, 0.0))],
            InitialStateSpec::NeelCat => vec![
                (neel, Complex64::new(h, 0.0)),
                (translate_bits(neel, 1, length), Complex64::new(h, 0.0)),
            ],
            InitialStateSpec::DomainWallTi => {
                let wall = (1u64 << (length / 2)) - 1;
                let a = Complex64::new(1.0 / f64::from(length).sqrt(), 0.0);
                (0..length).map(|r| (translate_bits(wall, r, length), a)).collect()
            }
            InitialStateSpec::Custom(v) => {
                let n2: f64 = v.iter().map(|(_, a)| a.norm_sqr()).sum();
                if (n2 - 1.0).abs() > 1e-10 {
                    return Err(ModelError::NotNormalized(n2));
                }
                v.clone()
            }
        };
        amps.sort_by_key(|&(b, _)| b);
        let mut merged: Vec<(u64, Complex64)> = Vec::with_capacity(amps.len());
        for (b, a) in amps {
            match merged.last_mut() {
                Some((lb, la)) if *lb == b => *la += a,
                _ => merged.push((b, a)),
            }
        }
        Ok(merged)
    }
}

/// Spin flip of a state given by configuration amplitudes.
pub fn flip_state(amps: &[(u64, Complex64)], length: u32) -> Vec<(u64, Complex64)> {
    amps.iter().map(|&(b, a)| (flip_bits(b, length), a)).collect()
}

/// The state as a vector over the plain magnetization sector.
pub fn sector_state(
    length: u32,
    spec: &InitialStateSpec,
    sector: &SectorIndex,
) -> Result<Array1<Complex64>, ModelError> {
    let mut v = Array1::<Complex64>::zeros(sector.len());
    let mut weight = 0.0;
    for (b, a) in spec.amplitudes(length)? {
        if let Some(i) = sector.position(b) {
            v[i] = a;
            weight += a.norm_sqr();
        }
    }
    if (weight - 1.0).abs() > 1e-10 {
        return Err(ModelError::SupportOutsideBasis { weight });
    }
    Ok(v)
}

pub fn build_initial_state(
    length: u32,
    spec: &InitialStateSpec,
    basis: &SymmetricBasis,
) -> Result<Array1<Complex64>, ModelError> {
    if basis.length() != length {
        return Err(ModelError::LengthMismatch {
            basis: basis.length(),
            model: length,
        });
    }
    let full = sector_state(length, spec, basis.sector())?;
    if basis.labels().is_plain() {
        return Ok(full);
    }
    let v = basis.project_vector(full.view())?;
    let weight: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    if (weight - 1.0).abs() > 1e-10 {
        return Err(ModelError::SupportOutsideBasis { weight });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{SectorLabels, DEFAULT_MAX_DIM};

    fn plain(length: u32) -> SymmetricBasis {
        SymmetricBasis::build(length, SectorLabels::sector(0), DEFAULT_MAX_DIM).unwrap()
    }

    fn hermiticity_defect(m: &Array2<Complex64>) -> f64 {
        let n = m.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
            }
        }
        worst
    }

    #[test]
    fn neel_diagonal_entry() {
        let basis = plain(4);
        let h = build_hamiltonian(4, CouplingVector::new(-1.0, 1.0, 0.0, 0.0), &basis).unwrap();
        let i = basis.index_of(0b0101).unwrap();
        assert_eq!(h[[i, i]], Complex64::new(-4.0, 0.0));
    }

    #[test]
    fn hamiltonian_is_hermitian_and_zero_couplings_vanish() {
        let basis = plain(6);
        let h = build_hamiltonian(6, CouplingVector::default(), &basis).unwrap();
        assert!(hermiticity_defect(&h) < 1e-12);
        let z = build_hamiltonian(6, CouplingVector::new(0.0, 0.0, 0.0, 0.0), &basis).unwrap();
        assert!(z.iter().all(|x| x.norm() == 0.0));
        for k in 0..6 {
            let b = SymmetricBasis::build(
                6,
                SectorLabels {
                    m_z: 0,
                    momentum: Some(k),
                    spin_flip: Some(crate::lattice::Parity::Odd),
                },
                DEFAULT_MAX_DIM,
            )
            .unwrap();
            let h = build_hamiltonian(6, CouplingVector::default(), &b).unwrap();
            assert!(hermiticity_defect(&h) < 1e-12);
        }
    }

    #[test]
    fn short_chain_rejected() {
        let basis = SymmetricBasis::build(3, SectorLabels::sector(1), DEFAULT_MAX_DIM).unwrap();
        assert_eq!(
            build_hamiltonian(3, CouplingVector::default(), &basis),
            Err(ModelError::TooShort(3))
        );
    }

    #[test]
    fn observable_values() {
        let basis = plain(4);
        let a1 = build_observable(4, &ObservableSpec::a1(), &basis).unwrap();
        let a2 = build_observable(4, &ObservableSpec::A2NnZz, &basis).unwrap();
        let i = basis.index_of(0b0101).unwrap();
        assert_eq!(a1[[i, i]], Complex64::new(1.0, 0.0));
        assert_eq!(a2[[i, i]], Complex64::new(-1.0, 0.0));
        let up = SymmetricBasis::build(4, SectorLabels::sector(4), DEFAULT_MAX_DIM).unwrap();
        let a2_up = build_observable(4, &ObservableSpec::A2NnZz, &up).unwrap();
        assert_eq!(a2_up[[0, 0]], Complex64::new(1.0, 0.0));
        let other_site = build_observable(4, &ObservableSpec::A1Site { site: 1 }, &basis).unwrap();
        assert_eq!(other_site[[i, i]], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn a1_on_momentum_block_is_rejected() {
        let b = SymmetricBasis::build(
            6,
            SectorLabels {
                m_z: 0,
                momentum: Some(0),
                spin_flip: None,
            },
            DEFAULT_MAX_DIM,
        )
        .unwrap();
        assert!(matches!(
            build_observable(6, &ObservableSpec::a1(), &b),
            Err(ModelError::SymmetryMismatch(_))
        ));
        assert!(build_observable(6, &ObservableSpec::A2NnZz, &b).is_ok());
    }

    #[test]
    fn initial_states_l4() {
        let basis = plain(4);
        let pos = |b: u64| basis.index_of(b).unwrap();
        let neel = build_initial_state(4, &InitialStateSpec::Neel, &basis).unwrap();
        assert_eq!(neel.iter().filter(|a| a.norm() > 0.0).count(), 1);
        assert_eq!(neel[pos(0b0101)], Complex64::new(1.0, 0.0));

        let cat = build_initial_state(4, &InitialStateSpec::NeelCat, &basis).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((cat[pos(0b0101)].re - h).abs() < 1e-15);
        assert!((cat[pos(0b1010)].re - h).abs() < 1e-15);

        let dw = build_initial_state(4, &InitialStateSpec::DomainWallTi, &basis).unwrap();
        for b in [0b0011, 0b0110, 0b1100, 0b1001] {
            assert!((dw[pos(b)].re - 0.5).abs() < 1e-15);
        }
        let norm: f64 = dw.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domain_wall_has_l_equal_amplitudes() {
        for length in [6, 8, 10] {
            let amps = InitialStateSpec::DomainWallTi.amplitudes(length).unwrap();
            assert_eq!(amps.len(), length as usize);
            for (_, a) in amps {
                assert!((a.norm() - 1.0 / f64::from(length).sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn neel_has_no_weight_at_generic_momentum() {
        let b = SymmetricBasis::build(
            8,
            SectorLabels {
                m_z: 0,
                momentum: Some(0),
                spin_flip: None,
            },
            DEFAULT_MAX_DIM,
        )
        .unwrap();
        assert!(matches!(
            build_initial_state(8, &InitialStateSpec::Neel, &b),
            Err(ModelError::SupportOutsideBasis { .. })
        ));
        // the domain wall state lives entirely at k = 0
        assert!(build_initial_state(8, &InitialStateSpec::DomainWallTi, &b).is_ok());
        assert_eq!(
            InitialStateSpec::Neel.amplitudes(5),
            Err(ModelError::OddLength(5))
        );
    }

    #[test]
    fn anisotropy_family() {
        let c = CouplingVector::anisotropy_sweep(-1.8, 0.5);
        assert!((c.j2 - (-1.8 / 2.7)).abs() < 1e-15);
        assert!((c.gamma1 - (-0.45)).abs() < 1e-15);
        assert!((c.gamma2 - c.j2 * 0.25).abs() < 1e-15);
    }
}
