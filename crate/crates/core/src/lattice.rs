//! Spin-1/2 chain configurations, magnetization sectors and
//! translation / spin-flip symmetry-adapted bases.
//!
//! A configuration is an `L`-bit integer: bit `j` set means spin up on
//! site `j` (site 1 of a chain written left to right is bit 0). The
//! translation `T` moves the spin on site `j` to site `j + 1 (mod L)`,
//! i.e. it rotates the bit pattern left by one.
//!
//! Symmetrized states use the convention
//!
//! ```text
//! |r; k, p> = (1/N_r) sum_{s, f} e^{+i 2 pi k s / L} p^f T^s X^f |r>
//! ```
//!
//! so `T |r; k, p> = e^{-i 2 pi k / L} |r; k, p>`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the dimension of any sector we are willing to build.
pub const DEFAULT_MAX_DIM: usize = 20_000;

/// Configurations are stored in a `u64`, but sectors are enumerated
/// by walking combinations, so the practical limit is far lower.
pub const MAX_SITES: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("chain length {0} out of range (need 2..={MAX_SITES})")]
    InvalidLength(u32),
    #[error("magnetization {m_z} has the wrong parity or magnitude for L = {length}")]
    InvalidParity { length: u32, m_z: i32 },
    #[error("bit pattern {bits:#b} does not fit in {length} sites")]
    InvalidBits { bits: u64, length: u32 },
    #[error("sector dimension {dim} exceeds the cap of {cap}")]
    SizeLimit { dim: usize, cap: usize },
    #[error("inconsistent sector labels: {0}")]
    InconsistentLabels(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[inline]
pub(crate) fn mask(length: u32) -> u64 {
    if length >= 64 {
        u64::MAX
    } else {
        (1u64 << length) - 1
    }
}

/// `T^shift` applied to a raw bit pattern.
#[inline]
pub(crate) fn translate_bits(bits: u64, shift: u32, length: u32) -> u64 {
    let s = shift % length;
    if s == 0 {
        return bits;
    }
    ((bits << s) | (bits >> (length - s))) & mask(length)
}

#[inline]
pub(crate) fn flip_bits(bits: u64, length: u32) -> u64 {
    !bits & mask(length)
}

/// `+1` for spin up on `site`, `-1` for spin down.
#[inline]
pub(crate) fn spin_at(bits: u64, site: u32) -> f64 {
    if (bits >> site) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// A basis configuration of an `L`-site chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfiguration {
    bits: u64,
    length: u32,
}

impl SpinConfiguration {
    pub fn new(bits: u64, length: u32) -> Result<Self, BasisError> {
        if !(2..=MAX_SITES).contains(&length) {
            return Err(BasisError::InvalidLength(length));
        }
        if bits & !mask(length) != 0 {
            return Err(BasisError::InvalidBits { bits, length });
        }
        Ok(Self { bits, length })
    }

    /// Parses a pattern written with the highest site first, e.g. `"0011"`.
    pub fn from_pattern(pattern: &str) -> Result<Self, BasisError> {
        let length = pattern.len() as u32;
        let bits = u64::from_str_radix(pattern, 2)
            .map_err(|_| BasisError::InvalidLength(length))?;
        Self::new(bits, length)
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn length(self) -> u32 {
        self.length
    }

    /// S^Z eigenvalue (+1 or -1) on `site`.
    pub fn spin(self, site: u32) -> f64 {
        spin_at(self.bits, site % self.length)
    }

    /// Total magnetization in units of a single-spin S^Z eigenvalue.
    pub fn magnetization(self) -> i32 {
        2 * self.bits.count_ones() as i32 - self.length as i32
    }

    pub fn translate(self, shift: u32) -> Self {
        Self {
            bits: translate_bits(self.bits, shift, self.length),
            length: self.length,
        }
    }

    pub fn flip(self) -> Self {
        Self {
            bits: flip_bits(self.bits, self.length),
            length: self.length,
        }
    }
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.bits, width = self.length as usize)
    }
}

/// Spin-flip quantum number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Quantum numbers of one symmetry block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectorLabels {
    pub m_z: i32,
    /// Momentum index `k` (momentum `2 pi k / L`); `None` leaves translation unused.
    pub momentum: Option<u32>,
    pub spin_flip: Option<Parity>,
}

impl SectorLabels {
    /// The plain magnetization sector.
    pub fn sector(m_z: i32) -> Self {
        Self {
            m_z,
            momentum: None,
            spin_flip: None,
        }
    }

    pub fn validate(&self, length: u32) -> Result<(), BasisError> {
        if let Some(k) = self.momentum {
            if k >= length {
                return Err(BasisError::InconsistentLabels(format!(
                    "momentum index {k} must be below L = {length}"
                )));
            }
        }
        if self.spin_flip.is_some() && self.m_z != 0 {
            return Err(BasisError::InconsistentLabels(format!(
                "spin-flip parity requires m_z = 0, got {}",
                self.m_z
            )));
        }
        Ok(())
    }

    /// True when no symmetry beyond magnetization is used.
    pub fn is_plain(&self) -> bool {
        self.momentum.is_none() && self.spin_flip.is_none()
    }
}

impl fmt::Display for SectorLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m_z={}", self.m_z)?;
        match self.momentum {
            Some(k) => write!(f, " k={k}")?,
            None => write!(f, " k=none")?,
        }
        match self.spin_flip {
            Some(Parity::Even) => write!(f, " flip=+"),
            Some(Parity::Odd) => write!(f, " flip=-"),
            None => write!(f, " flip=none"),
        }
    }
}

fn binomial(n: u32, k: u32) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

fn check_sector(length: u32, m_z: i32) -> Result<u32, BasisError> {
    if !(2..=MAX_SITES).contains(&length) {
        return Err(BasisError::InvalidLength(length));
    }
    let l = length as i32;
    if m_z.abs() > l || (l + m_z).rem_euclid(2) != 0 {
        return Err(BasisError::InvalidParity { length, m_z });
    }
    Ok(((l + m_z) / 2) as u32)
}

/// Dimension of the magnetization sector, without enumerating it.
pub fn sector_dimension(length: u32, m_z: i32) -> Result<usize, BasisError> {
    let ups = check_sector(length, m_z)?;
    Ok(binomial(length, ups).min(usize::MAX as u128) as usize)
}

fn sector_bits(length: u32, m_z: i32, max_dim: usize) -> Result<Vec<u64>, BasisError> {
    let ups = check_sector(length, m_z)?;
    let dim = sector_dimension(length, m_z)?;
    if dim > max_dim {
        return Err(BasisError::SizeLimit { dim, cap: max_dim });
    }
    let mut out = Vec::with_capacity(dim);
    if ups == 0 {
        out.push(0);
        return Ok(out);
    }
    // Gosper's hack walks the fixed-popcount integers in increasing order.
    let mut v: u64 = (1u64 << ups) - 1;
    let limit = mask(length);
    while v <= limit {
        out.push(v);
        let t = v | (v - 1);
        let next = (t + 1) | (((!t & (!t).wrapping_neg()) - 1) >> (v.trailing_zeros() + 1));
        if next <= v {
            break;
        }
        v = next;
    }
    Ok(out)
}

/// All configurations of the `m_z` sector, sorted ascending.
pub fn enumerate_sector(
    length: u32,
    m_z: i32,
    max_dim: usize,
) -> Result<Vec<SpinConfiguration>, BasisError> {
    Ok(sector_bits(length, m_z, max_dim)?
        .into_iter()
        .map(|bits| SpinConfiguration { bits, length })
        .collect())
}

/// Sorted list of the configurations of one magnetization sector, used as
/// the reference ("plain") basis that symmetry blocks embed into.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorIndex {
    length: u32,
    m_z: i32,
    configs: Vec<u64>,
}

impl SectorIndex {
    pub fn new(length: u32, m_z: i32, max_dim: usize) -> Result<Self, BasisError> {
        Ok(Self {
            length,
            m_z,
            configs: sector_bits(length, m_z, max_dim)?,
        })
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn m_z(&self) -> i32 {
        self.m_z
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[u64] {
        &self.configs
    }

    pub fn position(&self, bits: u64) -> Option<usize> {
        self.configs.binary_search(&bits).ok()
    }
}

/// Result of reducing a configuration to its orbit representative:
/// `rep = T^shift X^flipped c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrbitElement {
    pub rep: SpinConfiguration,
    pub shift: u32,
    pub flipped: bool,
}

#[inline]
fn reduce(bits: u64, length: u32, translations: bool, flip: bool) -> (u64, u32, bool) {
    let mut best = (bits, 0u32, false);
    let shifts = if translations { length } else { 1 };
    for f in [false, true] {
        if f && !flip {
            break;
        }
        let start = if f { flip_bits(bits, length) } else { bits };
        let mut cur = start;
        for s in 0..shifts {
            if cur < best.0 {
                best = (cur, s, f);
            }
            cur = translate_bits(cur, 1, length);
        }
    }
    best
}

/// Minimal integer over the translation orbit of `c` (and over the
/// spin-flipped orbit when `use_spin_flip`), with one group element
/// mapping `c` onto it. Ties resolve to the smallest shift, unflipped first.
pub fn orbit_representative(c: SpinConfiguration, use_spin_flip: bool) -> OrbitElement {
    let (rep, shift, flipped) = reduce(c.bits, c.length, true, use_spin_flip);
    OrbitElement {
        rep: SpinConfiguration {
            bits: rep,
            length: c.length,
        },
        shift,
        flipped,
    }
}

/// Symmetry-adapted basis of one block.
#[derive(Debug, Clone)]
pub struct SymmetricBasis {
    length: u32,
    labels: SectorLabels,
    representatives: Vec<u64>,
    periodicities: Vec<u32>,
    norms: Vec<f64>,
    sector: Arc<SectorIndex>,
}

impl SymmetricBasis {
    pub fn build(length: u32, labels: SectorLabels, max_dim: usize) -> Result<Self, BasisError> {
        let sector = Arc::new(SectorIndex::new(length, labels.m_z, max_dim)?);
        Self::from_sector(sector, labels)
    }

    /// Builds a block on top of an already enumerated sector, so several
    /// blocks can share one reference basis.
    pub fn from_sector(sector: Arc<SectorIndex>, labels: SectorLabels) -> Result<Self, BasisError> {
        let length = sector.length;
        if labels.m_z != sector.m_z {
            return Err(BasisError::InconsistentLabels(format!(
                "labels m_z = {} but sector m_z = {}",
                labels.m_z, sector.m_z
            )));
        }
        labels.validate(length)?;
        let mut basis = Self {
            length,
            labels,
            representatives: Vec::new(),
            periodicities: Vec::new(),
            norms: Vec::new(),
            sector,
        };
        if labels.is_plain() {
            let n = basis.sector.len();
            basis.representatives = basis.sector.configs.clone();
            basis.periodicities = vec![1; n];
            basis.norms = vec![1.0; n];
            return Ok(basis);
        }
        let translations = labels.momentum.is_some();
        let flip = labels.spin_flip.is_some();
        let mut scratch = Vec::with_capacity(2 * length as usize);
        for &c in basis.sector.configs.iter() {
            if reduce(c, length, translations, flip).0 != c {
                continue;
            }
            basis.orbit_amplitudes(c, &mut scratch);
            let norm_sq: f64 = scratch.iter().map(|(_, a)| a.norm_sqr()).sum();
            // Norms are square roots of positive integers when nonzero.
            if norm_sq < 1e-6 {
                continue;
            }
            basis.representatives.push(c);
            basis.periodicities.push(if translations {
                (1..=length)
                    .find(|&s| translate_bits(c, s, length) == c)
                    .unwrap_or(length)
            } else {
                1
            });
            basis.norms.push(norm_sq.sqrt());
        }
        Ok(basis)
    }

    fn character(&self, shift: u32, flipped: bool) -> Complex64 {
        let mut chi = match self.labels.momentum {
            Some(k) => Complex64::from_polar(
                1.0,
                TAU * f64::from(k) * f64::from(shift) / f64::from(self.length),
            ),
            None => Complex64::new(1.0, 0.0),
        };
        if flipped {
            chi *= self.labels.spin_flip.map_or(1.0, Parity::sign);
        }
        chi
    }

    /// Unnormalized amplitudes of `P |rep>` over the distinct configurations.
    fn orbit_amplitudes(&self, rep: u64, out: &mut Vec<(u64, Complex64)>) {
        out.clear();
        let shifts = if self.labels.momentum.is_some() { self.length } else { 1 };
        let flips: &[bool] = if self.labels.spin_flip.is_some() {
            &[false, true]
        } else {
            &[false]
        };
        for &f in flips {
            let base = if f { flip_bits(rep, self.length) } else { rep };
            for s in 0..shifts {
                let c = translate_bits(base, s, self.length);
                let chi = self.character(s, f);
                match out.iter_mut().find(|(b, _)| *b == c) {
                    Some((_, a)) => *a += chi,
                    None => out.push((c, chi)),
                }
            }
        }
        out.retain(|(_, a)| a.norm_sqr() > 1e-20);
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn labels(&self) -> SectorLabels {
        self.labels
    }

    pub fn dim(&self) -> usize {
        self.representatives.len()
    }

    pub fn representatives(&self) -> impl Iterator<Item = SpinConfiguration> + '_ {
        self.representatives.iter().map(move |&bits| SpinConfiguration {
            bits,
            length: self.length,
        })
    }

    pub(crate) fn representative_bits(&self) -> &[u64] {
        &self.representatives
    }

    pub fn periodicities(&self) -> &[u32] {
        &self.periodicities
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn sector(&self) -> &Arc<SectorIndex> {
        &self.sector
    }

    /// Index of a representative in this basis.
    pub fn index_of(&self, rep: u64) -> Option<usize> {
        self.representatives.binary_search(&rep).ok()
    }

    /// Normalized expansion of basis state `i` over plain configurations.
    pub fn expansion(&self, i: usize) -> Vec<(u64, Complex64)> {
        let mut out = Vec::new();
        self.orbit_amplitudes(self.representatives[i], &mut out);
        let n = self.norms[i];
        for (_, a) in out.iter_mut() {
            *a /= n;
        }
        out
    }

    /// Locates a plain configuration in this block: returns the basis index
    /// of its representative and the factor `conj(chi(g)) N_rep`, where
    /// `g` maps the representative onto `bits`. Operator matrix elements
    /// follow as `<i|O|j> = sum_c O_{c, rep_j} factor(c) / N_j`.
    pub(crate) fn locate(&self, bits: u64) -> Option<(usize, Complex64)> {
        if self.labels.is_plain() {
            return self.index_of(bits).map(|i| (i, Complex64::new(1.0, 0.0)));
        }
        let (rep, shift, flipped) = reduce(
            bits,
            self.length,
            self.labels.momentum.is_some(),
            self.labels.spin_flip.is_some(),
        );
        let idx = self.index_of(rep)?;
        Some((idx, self.character(shift, flipped) * self.norms[idx]))
    }

    /// Expands a block vector into the plain magnetization-sector basis.
    pub fn embed_vector(&self, v: ArrayView1<Complex64>) -> Result<Array1<Complex64>, BasisError> {
        if v.len() != self.dim() {
            return Err(BasisError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let mut full = Array1::zeros(self.sector.len());
        let mut scratch = Vec::new();
        for (i, &coef) in v.iter().enumerate() {
            if coef == Complex64::new(0.0, 0.0) {
                continue;
            }
            self.orbit_amplitudes(self.representatives[i], &mut scratch);
            let n = self.norms[i];
            for &(c, a) in &scratch {
                let pos = self.sector.position(c).expect("orbit stays in sector");
                full[pos] += coef * a / n;
            }
        }
        Ok(full)
    }

    /// Orthogonal projection of a plain-sector vector onto this block,
    /// expressed in block coordinates.
    pub fn project_vector(
        &self,
        full: ArrayView1<Complex64>,
    ) -> Result<Array1<Complex64>, BasisError> {
        if full.len() != self.sector.len() {
            return Err(BasisError::DimensionMismatch {
                expected: self.sector.len(),
                got: full.len(),
            });
        }
        let mut out = Array1::zeros(self.dim());
        let mut scratch = Vec::new();
        for (i, &rep) in self.representatives.iter().enumerate() {
            self.orbit_amplitudes(rep, &mut scratch);
            let n = self.norms[i];
            out[i] = scratch
                .iter()
                .map(|&(c, a)| {
                    let pos = self.sector.position(c).expect("orbit stays in sector");
                    a.conj() * full[pos]
                })
                .sum::<Complex64>()
                / n;
        }
        Ok(out)
    }
}

/// Every block label of a magnetization sector: all momenta, and both
/// spin-flip parities when `m_z = 0` and `use_spin_flip` is set.
pub fn block_labels(length: u32, m_z: i32, use_spin_flip: bool) -> Vec<SectorLabels> {
    let flips: Vec<Option<Parity>> = if use_spin_flip && m_z == 0 {
        vec![Some(Parity::Even), Some(Parity::Odd)]
    } else {
        vec![None]
    };
    let mut out = Vec::new();
    for k in 0..length {
        for &spin_flip in &flips {
            out.push(SectorLabels {
                m_z,
                momentum: Some(k),
                spin_flip,
            });
        }
    }
    out
}
