//! Dense Hermitian eigendecomposition, quench data in the energy
//! eigenbasis, and exact time evolution by spectral phases.
//!
//! The time convention is `<A(t)> = <Psi| e^{-iHt} A e^{iHt} |Psi>`, i.e.
//! `<A(t)> = sum_jk conj(c_j) c_k A_jk e^{-i t (E_j - E_k)}`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{block_labels, BasisError, SectorIndex, SectorLabels, SymmetricBasis};
use crate::model::{
    apply_in_sector, operator_matrix, sector_state, CouplingVector, Hamiltonian,
    InitialStateSpec, ModelError, ObservableSpec,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix is not Hermitian (max |H - H^dagger| = {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("eigensolver failed on block {context}: {message}")]
    Eigensolver { context: String, message: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expectation value has imaginary part {imag:.3e}")]
    ComplexExpectation { imag: f64 },
    #[error("spectral cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Sorted spectrum and eigenvectors (columns) of one Hermitian block.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub energies: Array1<f64>,
    pub vectors: Array2<Complex64>,
    pub labels: Option<SectorLabels>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `max_j ||H v_j - E_j v_j||`.
    pub fn max_residual(&self, h: &Array2<Complex64>) -> f64 {
        let hv = h.dot(&self.vectors);
        (0..self.dim())
            .map(|j| {
                let e = self.energies[j];
                hv.column(j)
                    .iter()
                    .zip(self.vectors.column(j))
                    .map(|(a, b)| (a - b * e).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

fn real_part_if_real(m: &Array2<Complex64>) -> Option<Array2<f64>> {
    if m.iter().all(|z| z.im == 0.0) {
        Some(m.mapv(|z| z.re))
    } else {
        None
    }
}

fn hermiticity_defect(h: &Array2<Complex64>) -> f64 {
    let n = h.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[[i, j]] - h[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn diagonalize(
    h: &Array2<Complex64>,
    labels: Option<SectorLabels>,
) -> Result<SpectralDecomposition, SpectralError> {
    if h.nrows() != h.ncols() {
        return Err(SpectralError::DimensionMismatch {
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let defect = hermiticity_defect(h);
    if defect > 1e-10 * scale {
        return Err(SpectralError::NotHermitian { defect });
    }
    let context = || labels.map_or_else(|| "unlabelled".to_string(), |l| l.to_string());
    let fail = |e: ndarray_linalg::error::LinalgError| SpectralError::Eigensolver {
        context: context(),
        message: e.to_string(),
    };
    if h.is_empty() {
        return Ok(SpectralDecomposition {
            energies: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
            labels,
        });
    }
    let (energies, vectors) = match real_part_if_real(h) {
        Some(re) => {
            let (e, v) = re.eigh(UPLO::Lower).map_err(fail)?;
            (e, v.mapv(|x| Complex64::new(x, 0.0)))
        }
        None => h.eigh(UPLO::Lower).map_err(fail)?,
    };
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return Ok(SpectralDecomposition {
            energies,
            vectors,
            labels,
        });
    }
    Ok(SpectralDecomposition {
        energies: order.iter().map(|&i| energies[i]).collect(),
        vectors: vectors.select(Axis(1), &order),
        labels,
    })
}

/// Everything the rate formulas need: `E_j`, `c_j = <E_j|Psi>` and
/// `A_jk = <E_j|A|E_k>`.
#[derive(Debug, Clone)]
pub struct QuenchData {
    pub energies: Array1<f64>,
    pub coeffs: Array1<Complex64>,
    pub obs: Array2<Complex64>,
    pub mean_energy: f64,
    pub energy_variance: f64,
}

impl QuenchData {
    pub fn new(
        energies: Array1<f64>,
        coeffs: Array1<Complex64>,
        obs: Array2<Complex64>,
    ) -> Result<Self, SpectralError> {
        let n = energies.len();
        for got in [coeffs.len(), obs.nrows(), obs.ncols()] {
            if got != n {
                return Err(SpectralError::DimensionMismatch { expected: n, got });
            }
        }
        let p: Array1<f64> = coeffs.mapv(|c| c.norm_sqr());
        let mean_energy = p.dot(&energies);
        let energy_variance =
            (p.iter().zip(&energies).map(|(w, e)| w * (e - mean_energy).powi(2)).sum::<f64>())
                .max(0.0);
        Ok(Self {
            energies,
            coeffs,
            obs,
            mean_energy,
            energy_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Diagonal-ensemble weights `|c_j|^2`.
    pub fn weights(&self) -> Array1<f64> {
        self.coeffs.mapv(|c| c.norm_sqr())
    }

    /// `<Psi|A|Psi>`.
    pub fn initial_value(&self) -> f64 {
        let ac = self.obs.dot(&self.coeffs);
        self.coeffs
            .iter()
            .zip(ac.iter())
            .map(|(c, a)| c.conj() * a)
            .sum::<Complex64>()
            .re
    }

    pub fn spectral_width(&self) -> f64 {
        match (self.energies.first(), self.energies.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Builds a unitary whose first column is `u` (unit norm).
fn complete_unitary(u: ArrayView1<Complex64>) -> Array2<Complex64> {
    let m = u.len();
    let mut cols: Vec<Array1<Complex64>> = vec![u.to_owned()];
    for e in 0..m {
        if cols.len() == m {
            break;
        }
        let mut v = Array1::<Complex64>::zeros(m);
        v[e] = Complex64::new(1.0, 0.0);
        // two passes of Gram-Schmidt keep the columns orthonormal to rounding
        for _ in 0..2 {
            for q in &cols {
                let proj: Complex64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                v.zip_mut_with(q, |x, y| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.mapv(|z| z / norm));
        }
    }
    let mut w = Array2::<Complex64>::zeros((m, m));
    for (j, c) in cols.iter().enumerate() {
        w.column_mut(j).assign(c);
    }
    w
}

/// Rotates each degenerate eigenspace so the state overlaps at most one of
/// its basis vectors. Updates `vectors` and `coeffs` in place.
fn align_degenerate(energies: &Array1<f64>, vectors: &mut Array2<Complex64>, coeffs: &mut Array1<Complex64>) {
    let n = energies.len();
    if n == 0 {
        return;
    }
    let tol = 1e-9 * energies.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && energies[end] - energies[end - 1] <= tol {
            end += 1;
        }
        if end - start > 1 {
            let c = coeffs.slice(s![start..end]).to_owned();
            let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-300 {
                let w = complete_unitary(c.mapv(|z| z / norm).view());
                let block = vectors.slice(s![.., start..end]).dot(&w);
                vectors.slice_mut(s![.., start..end]).assign(&block);
                coeffs.slice_mut(s![start..end]).fill(ZERO);
                coeffs[start] = Complex64::new(norm, 0.0);
            }
        }
        start = end;
    }
}

/// `V^dagger M`, using real arithmetic when both factors are real.
fn adjoint_times(v: &Array2<Complex64>, m: &Array2<Complex64>) -> Array2<Complex64> {
    if let (Some(vr), Some(mr)) = (real_part_if_real(v), real_part_if_real(m)) {
        return vr.t().dot(&mr).mapv(|x| Complex64::new(x, 0.0));
    }
    v.t().mapv(|z| z.conj()).dot(m)
}

fn symmetrize(m: &mut Array2<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[[i, i]].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[[i, j]] + m[[j, i]].conj()) * 0.5;
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
    }
}

/// `c = V^dagger state`, `A_jk = V^dagger A V`, with degenerate eigenspaces
/// rotated so the state overlaps a single vector in each.
pub fn make_quench_data(
    spec: &SpectralDecomposition,
    state: ArrayView1<Complex64>,
    a: &Array2<Complex64>,
) -> Result<QuenchData, SpectralError> {
    let n = spec.dim();
    for got in [state.len(), a.nrows(), a.ncols()] {
        if got != n {
            return Err(SpectralError::DimensionMismatch { expected: n, got });
        }
    }
    let mut vectors = spec.vectors.clone();
    let mut coeffs = vectors.t().mapv(|z| z.conj()).dot(&state);
    align_degenerate(&spec.energies, &mut vectors, &mut coeffs);
    let av = if let (Some(ar), Some(vr)) = (real_part_if_real(a), real_part_if_real(&vectors)) {
        ar.dot(&vr).mapv(|x| Complex64::new(x, 0.0))
    } else {
        a.dot(&vectors)
    };
    let mut obs = adjoint_times(&vectors, &av);
    symmetrize(&mut obs);
    QuenchData::new(spec.energies.clone(), coeffs, obs)
}

/// `<A(t)>` at each time. Errors if any value has a non-negligible
/// imaginary part.
pub fn expectation_timeseries(q: &QuenchData, times: &[f64]) -> Result<Vec<f64>, SpectralError> {
    const CHUNK: usize = 256;
    let n = q.dim();
    let scale = q.obs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(CHUNK) {
        let mut psi = Array2::<Complex64>::zeros((n, chunk.len()));
        for (col, &t) in chunk.iter().enumerate() {
            for j in 0..n {
                psi[[j, col]] = q.coeffs[j] * Complex64::from_polar(1.0, q.energies[j] * t);
            }
        }
        let apsi = q.obs.dot(&psi);
        for col in 0..chunk.len() {
            let v: Complex64 = psi
                .column(col)
                .iter()
                .zip(apsi.column(col))
                .map(|(x, y)| x.conj() * y)
                .sum();
            if v.im.abs() > 1e-9 * scale {
                return Err(SpectralError::ComplexExpectation { imag: v.im });
            }
            out.push(v.re);
        }
    }
    Ok(out)
}

/// `sum_j |c_j|^2 A_jj`, the long-time average for nondegenerate gaps.
pub fn diagonal_ensemble_value(q: &QuenchData) -> f64 {
    q.coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| c.norm_sqr() * q.obs[[j, j]].re)
        .sum()
}

/// Number of level pairs `j < k` (among levels with weight above
/// `1e-14`) whose gap coincides with the gap of another pair within
/// `1e-9` times the spectral scale.
pub fn gap_degeneracy_count(q: &QuenchData) -> usize {
    let idx: Vec<usize> = (0..q.dim())
        .filter(|&j| q.coeffs[j].norm_sqr() > 1e-14)
        .collect();
    let scale = q.energies.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    let tol = 1e-9 * scale;
    let mut gaps = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &j) in idx.iter().enumerate() {
        for &k in &idx[a + 1..] {
            gaps.push((q.energies[k] - q.energies[j]).abs());
        }
    }
    gaps.par_sort_unstable_by(f64::total_cmp);
    let mut count = 0;
    let mut i = 0;
    while i < gaps.len() {
        let mut e = i + 1;
        while e < gaps.len() && gaps[e] - gaps[e - 1] <= tol {
            e += 1;
        }
        if e - i > 1 {
            count += e - i;
        }
        i = e;
    }
    count
}

/// How the energy eigenbasis is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Diagonalize the whole magnetization sector.
    FullSector,
    /// Diagonalize every momentum (and, at `m_z = 0`, spin-flip) block the
    /// state touches and embed the eigenvectors back into the sector.
    Blocks { use_spin_flip: bool },
}

/// A quench: chain, couplings, initial state, observable.
#[derive(Debug, Clone)]
pub struct QuenchProblem {
    pub length: u32,
    pub couplings: CouplingVector,
    pub state: InitialStateSpec,
    pub observable: ObservableSpec,
    pub route: Route,
    pub max_dim: usize,
}

impl QuenchProblem {
    pub fn new(
        length: u32,
        couplings: CouplingVector,
        state: InitialStateSpec,
        observable: ObservableSpec,
    ) -> Self {
        Self {
            length,
            couplings,
            state,
            observable,
            route: Route::Blocks { use_spin_flip: true },
            max_dim: crate::lattice::DEFAULT_MAX_DIM,
        }
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }
}

/// Directory of cached block decompositions.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    dir: PathBuf,
}

const MAGIC: &[u8; 8] = b"QRXSPEC\0";
const FORMAT_VERSION: u32 = 1;

impl SpectralCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, SpectralError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(length: u32, labels: SectorLabels, couplings: CouplingVector) -> String {
        let mut h = Sha256::new();
        h.update(crate::VERSION.as_bytes());
        h.update(FORMAT_VERSION.to_le_bytes());
        h.update(header_bytes(length, labels, couplings));
        hex::encode(&h.finalize()[..16])
    }

    fn path(&self, length: u32, labels: SectorLabels, couplings: CouplingVector) -> PathBuf {
        self.dir
            .join(format!("{}.spec", Self::key(length, labels, couplings)))
    }

    /// Returns `None` on a miss or on any file that does not match.
    pub fn load(
        &self,
        length: u32,
        labels: SectorLabels,
        couplings: CouplingVector,
    ) -> Option<SpectralDecomposition> {
        let mut buf = Vec::new();
        fs::File::open(self.path(length, labels, couplings))
            .ok()?
            .read_to_end(&mut buf)
            .ok()?;
        decode(&buf, length, labels, couplings)
    }

    pub fn store(
        &self,
        length: u32,
        couplings: CouplingVector,
        spec: &SpectralDecomposition,
    ) -> Result<(), SpectralError> {
        let labels = spec
            .labels
            .ok_or_else(|| SpectralError::Cache("decomposition has no block labels".into()))?;
        let path = self.path(length, labels, couplings);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&encode(spec, length, labels, couplings))?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }
}

fn header_bytes(length: u32, labels: SectorLabels, c: CouplingVector) -> Vec<u8> {
    let mut b = Vec::with_capacity(48);
    b.extend(length.to_le_bytes());
    b.extend(labels.m_z.to_le_bytes());
    b.extend(labels.momentum.map_or(-1, |k| k as i32).to_le_bytes());
    let flip: i32 = match labels.spin_flip {
        None => 0,
        Some(crate::lattice::Parity::Even) => 1,
        Some(crate::lattice::Parity::Odd) => -1,
    };
    b.extend(flip.to_le_bytes());
    for x in [c.j1, c.gamma1, c.j2, c.gamma2] {
        b.extend(x.to_bits().to_le_bytes());
    }
    b
}

fn encode(spec: &SpectralDecomposition, length: u32, labels: SectorLabels, c: CouplingVector) -> Vec<u8> {
    let n = spec.dim();
    let mut b = Vec::with_capacity(64 + 8 * n + 16 * n * n);
    b.extend(MAGIC);
    b.extend(FORMAT_VERSION.to_le_bytes());
    b.extend(header_bytes(length, labels, c));
    b.extend((n as u64).to_le_bytes());
    for e in &spec.energies {
        b.extend(e.to_bits().to_le_bytes());
    }
    for z in spec.vectors.iter() {
        b.extend(z.re.to_bits().to_le_bytes());
        b.extend(z.im.to_bits().to_le_bytes());
    }
    b
}

fn decode(
    buf: &[u8],
    length: u32,
    labels: SectorLabels,
    c: CouplingVector,
) -> Option<SpectralDecomposition> {
    let header = header_bytes(length, labels, c);
    let mut pos = 0;
    let mut take = |k: usize| -> Option<&[u8]> {
        let s = buf.get(pos..pos + k)?;
        pos += k;
        Some(s)
    };
    if take(8)? != MAGIC {
        return None;
    }
    if u32::from_le_bytes(take(4)?.try_into().ok()?) != FORMAT_VERSION {
        return None;
    }
    if take(header.len())? != header.as_slice() {
        return None;
    }
    let n = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
    let mut f64_at = |_: usize| -> Option<f64> {
        Some(f64::from_bits(u64::from_le_bytes(take(8)?.try_into().ok()?)))
    };
    let energies: Option<Vec<f64>> = (0..n).map(&mut f64_at).collect();
    let energies = Array1::from(energies?);
    let mut flat = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let re = f64_at(0)?;
        let im = f64_at(0)?;
        flat.push(Complex64::new(re, im));
    }
    if pos != buf.len() {
        return None;
    }
    Some(SpectralDecomposition {
        energies,
        vectors: Array2::from_shape_vec((n, n), flat).ok()?,
        labels: Some(labels),
    })
}

fn block_decomposition(
    length: u32,
    couplings: CouplingVector,
    basis: &SymmetricBasis,
    cache: Option<&SpectralCache>,
) -> Result<SpectralDecomposition, SpectralError> {
    let labels = basis.labels();
    if let Some(c) = cache {
        if let Some(spec) = c.load(length, labels, couplings) {
            if spec.dim() == basis.dim() {
                return Ok(spec);
            }
        }
    }
    let h = operator_matrix(&Hamiltonian::new(length, couplings)?, basis)?;
    let spec = diagonalize(&h, Some(labels))?;
    if let Some(c) = cache {
        c.store(length, couplings, &spec)?;
    }
    Ok(spec)
}

/// Builds the quench data of `p`, reusing cached block spectra when a
/// cache is given.
pub fn build_quench_data(
    p: &QuenchProblem,
    cache: Option<&SpectralCache>,
) -> Result<QuenchData, SpectralError> {
    let length = p.length;
    let ham = Hamiltonian::new(length, p.couplings)?;
    let observable = p.observable.bind(length);
    let sector = Arc::new(SectorIndex::new(length, 0, p.max_dim)?);
    let psi = sector_state(length, &p.state, &sector)?;
    match p.route {
        Route::FullSector => {
            let basis = SymmetricBasis::from_sector(sector, SectorLabels::sector(0))?;
            let spec = block_decomposition(length, ham.couplings, &basis, cache)?;
            let a = operator_matrix(&observable, &basis)?;
            make_quench_data(&spec, psi.view(), &a)
        }
        Route::Blocks { use_spin_flip } => {
            let mut energies = Vec::new();
            let mut coeffs = Vec::new();
            let mut columns: Vec<Array1<Complex64>> = Vec::new();
            for labels in block_labels(length, 0, use_spin_flip) {
                let basis = SymmetricBasis::from_sector(Arc::clone(&sector), labels)?;
                if basis.dim() == 0 {
                    continue;
                }
                let proj = basis.project_vector(psi.view())?;
                if proj.iter().map(|z| z.norm_sqr()).sum::<f64>() < 1e-14 {
                    continue;
                }
                let spec = block_decomposition(length, ham.couplings, &basis, cache)?;
                let mut vectors = spec.vectors.clone();
                let mut c = vectors.t().mapv(|z| z.conj()).dot(&proj);
                align_degenerate(&spec.energies, &mut vectors, &mut c);
                for j in 0..spec.dim() {
                    if c[j].norm_sqr() > 1e-14 {
                        energies.push(spec.energies[j]);
                        coeffs.push(c[j]);
                        columns.push(basis.embed_vector(vectors.column(j))?);
                    }
                }
            }
            let mut order: Vec<usize> = (0..energies.len()).collect();
            order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
            let m = order.len();
            let mut v = Array2::<Complex64>::zeros((sector.len(), m));
            for (dst, &src) in order.iter().enumerate() {
                v.column_mut(dst).assign(&columns[src]);
            }
            drop(columns);
            let av_cols: Vec<Array1<Complex64>> = (0..m)
                .into_par_iter()
                .map(|j| apply_in_sector(&observable, &sector, v.column(j)))
                .collect();
            let mut av = Array2::<Complex64>::zeros((sector.len(), m));
            for (j, col) in av_cols.into_iter().enumerate() {
                av.column_mut(j).assign(&col);
            }
            let mut obs = adjoint_times(&v, &av);
            symmetrize(&mut obs);
            QuenchData::new(
                order.iter().map(|&i| energies[i]).collect(),
                order.iter().map(|&i| coeffs[i]).collect(),
                obs,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DEFAULT_MAX_DIM;
    use crate::model::{build_hamiltonian, build_initial_state, build_observable};
    use ndarray::array;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn two_by_two() {
        let h = array![[c(0.0), c(1.0)], [c(1.0), c(0.0)]];
        let d = diagonalize(&h, None).unwrap();
        assert!((d.energies[0] + 1.0).abs() < 1e-14);
        assert!((d.energies[1] - 1.0).abs() < 1e-14);
        assert!(d.max_residual(&h) < 1e-12);
    }

    #[test]
    fn diagonal_input_sorted() {
        let h = Array2::from_diag(&array![c(3.0), c(-1.0), c(2.0)]);
        let d = diagonalize(&h, None).unwrap();
        assert_eq!(d.energies.to_vec(), vec![-1.0, 2.0, 3.0]);
        assert!((d.vectors[[1, 0]].norm() - 1.0).abs() < 1e-14);
        assert!((d.vectors[[0, 2]].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn complex_hermitian_and_rejects_nonhermitian() {
        let h = array![
            [c(1.0), Complex64::new(0.0, 1.0)],
            [Complex64::new(0.0, -1.0), c(1.0)]
        ];
        let d = diagonalize(&h, None).unwrap();
        assert!((d.energies[0]).abs() < 1e-14 && (d.energies[1] - 2.0).abs() < 1e-14);
        let bad = array![[c(0.0), c(1.0)], [c(0.0), c(0.0)]];
        assert!(matches!(
            diagonalize(&bad, None),
            Err(SpectralError::NotHermitian { .. })
        ));
    }

    fn l4_data(state: InitialStateSpec, obs: ObservableSpec) -> (QuenchData, Array1<Complex64>, Array2<Complex64>) {
        let basis = SymmetricBasis::build(4, SectorLabels::sector(0), DEFAULT_MAX_DIM).unwrap();
        let h = build_hamiltonian(4, CouplingVector::new(-1.0, 1.0, 0.0, 0.0), &basis).unwrap();
        let psi = build_initial_state(4, &state, &basis).unwrap();
        let a = build_observable(4, &obs, &basis).unwrap();
        let d = diagonalize(&h, None).unwrap();
        (make_quench_data(&d, psi.view(), &a).unwrap(), psi, a)
    }

    #[test]
    fn quench_data_initial_value_matches_configuration_basis() {
        let (q, psi, a) = l4_data(InitialStateSpec::Neel, ObservableSpec::a1());
        let direct: Complex64 = psi
            .iter()
            .zip(a.dot(&psi).iter())
            .map(|(x, y)| x.conj() * y)
            .sum();
        assert!((q.initial_value() - direct.re).abs() < 1e-10);
        let w: f64 = q.weights().sum();
        assert!((w - 1.0).abs() < 1e-10);
        let series = expectation_timeseries(&q, &[0.0]).unwrap();
        assert!((series[0] - direct.re).abs() < 1e-10);
    }

    #[test]
    fn eigenstate_and_identity_inputs() {
        let basis = SymmetricBasis::build(6, SectorLabels::sector(0), DEFAULT_MAX_DIM).unwrap();
        let h = build_hamiltonian(6, CouplingVector::default(), &basis).unwrap();
        let d = diagonalize(&h, None).unwrap();
        let n = d.dim();
        let id = Array2::<Complex64>::eye(n);
        let j = n / 2;
        let q = make_quench_data(&d, d.vectors.column(j), &id).unwrap();
        // a degenerate level may be rotated onto another vector of its cluster
        let p = q.weights();
        let hit = (0..n).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert!((p[hit] - 1.0).abs() < 1e-10);
        assert!((q.energies[hit] - d.energies[j]).abs() < 1e-9);
        assert!((0..n).filter(|&k| k != hit).all(|k| p[k] < 1e-10));
        for a in 0..n {
            for b in 0..n {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((q.obs[[a, b]] - c(expect)).norm() < 1e-10);
            }
        }
        assert!((diagonal_ensemble_value(&q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn commuting_observable_gives_constant_series() {
        let basis = SymmetricBasis::build(6, SectorLabels::sector(0), DEFAULT_MAX_DIM).unwrap();
        let h = build_hamiltonian(6, CouplingVector::default(), &basis).unwrap();
        let d = diagonalize(&h, None).unwrap();
        let psi = build_initial_state(6, &InitialStateSpec::Neel, &basis).unwrap();
        let q = make_quench_data(&d, psi.view(), &h).unwrap();
        let times: Vec<f64> = (0..20).map(|i| 0.37 * f64::from(i)).collect();
        let series = expectation_timeseries(&q, &times).unwrap();
        for v in &series {
            assert!((v - series[0]).abs() < 1e-10);
        }
        assert!((series[0] - q.mean_energy).abs() < 1e-10);
    }

    #[test]
    fn degenerate_eigenspace_alignment() {
        // H = diag(0, 0, 1); state spread over the degenerate pair.
        let h = Array2::from_diag(&array![c(0.0), c(0.0), c(1.0)]);
        let d = diagonalize(&h, None).unwrap();
        let psi = array![c(0.6), c(0.0), c(0.8)];
        let q = make_quench_data(&d, psi.view(), &Array2::eye(3)).unwrap();
        let nonzero = q.coeffs.iter().filter(|z| z.norm() > 1e-12).count();
        assert_eq!(nonzero, 2);
        let psi = array![c(0.6), c(0.8), c(0.0)];
        let q = make_quench_data(&d, psi.view(), &Array2::eye(3)).unwrap();
        assert!((q.coeffs[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cache_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectralCache::new(dir.path()).unwrap();
        let labels = SectorLabels {
            m_z: 0,
            momentum: Some(0),
            spin_flip: Some(crate::lattice::Parity::Even),
        };
        let basis = SymmetricBasis::build(8, labels, DEFAULT_MAX_DIM).unwrap();
        let cpl = CouplingVector::default();
        assert!(cache.load(8, labels, cpl).is_none());
        let cold = block_decomposition(8, cpl, &basis, Some(&cache)).unwrap();
        let warm = cache.load(8, labels, cpl).unwrap();
        assert_eq!(cold, warm);
        assert!(cache.load(8, labels, cpl.scaled(2.0)).is_none());
    }

    #[test]
    fn gap_count_on_equally_spaced_levels() {
        let e = array![0.0, 1.0, 2.0];
        let coeffs = Array1::from_elem(3, c(1.0 / 3f64.sqrt()));
        let q = QuenchData::new(e, coeffs, Array2::eye(3)).unwrap();
        // gaps 1, 1, 2: the two unit gaps coincide
        assert_eq!(gap_degeneracy_count(&q), 2);
    }
}
