//! Random-basis Hamiltonians `H_U = U H U^dagger` with Haar-distributed
//! `U`: Monte Carlo rates and their exact finite-`d` averages.
//!
//! Sample `i` of a run with master seed `s` draws from a ChaCha8 stream
//! seeded with `s` and stream number `i`, so results do not depend on the
//! number of worker threads.

use ndarray::{Array1, Array2};
use ndarray_linalg::QR;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmtError {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular denominator in {0}")]
    SingularDenominator(&'static str),
    #[error("QR factorization failed: {0}")]
    Factorization(String),
    #[error("every sample was discarded")]
    AllDiscarded,
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn sample_haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Array2<Complex64>, RmtError> {
    if d < 2 {
        return Err(RmtError::DimensionTooSmall(d));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = Array2::from_shape_simple_fn((d, d), || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    });
    let (mut q, r) = z.qr().map_err(|e| RmtError::Factorization(e.to_string()))?;
    for j in 0..d {
        let rjj = r[[j, j]];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        q.column_mut(j).mapv_inplace(|x| x * phase);
    }
    Ok(q)
}

/// Deterministic per-sample generator.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Rates for one `U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmtSample {
    /// `-<[H_U,[H_U,A]]> / <Phi|A|Phi>`.
    pub sigma_a_sq: f64,
    /// `tr{D_U [A,H_U] D_U [H_U,A]}`.
    pub sigma_g_num: f64,
    /// `tr{(D_U A)^2}`.
    pub sigma_g_den: f64,
    /// `tr{[H_U,A][A,H_U]} / tr{A^2}`.
    pub sigma_k_sq: f64,
}

impl RmtSample {
    pub fn sigma_g_sq(&self) -> f64 {
        self.sigma_g_num / self.sigma_g_den
    }
}

fn check_dims(energies: &[f64], a: &Array2<Complex64>, phi: &Array1<Complex64>, u: Option<&Array2<Complex64>>) -> Result<usize, RmtError> {
    let d = energies.len();
    let mut shapes = vec![a.nrows(), a.ncols(), phi.len()];
    if let Some(u) = u {
        shapes.extend([u.nrows(), u.ncols()]);
    }
    for got in shapes {
        if got != d {
            return Err(RmtError::DimensionMismatch { expected: d, got });
        }
    }
    Ok(d)
}

/// Rates of `H_U = U diag(energies) U^dagger` for observable `a` and
/// state `phi`, evaluated in the eigenbasis of `H_U`.
pub fn rmt_rates_one_sample(
    energies: &[f64],
    a: &Array2<Complex64>,
    phi: &Array1<Complex64>,
    u: &Array2<Complex64>,
) -> Result<RmtSample, RmtError> {
    let d = check_dims(energies, a, phi, Some(u))?;
    let ud = u.t().mapv(|z| z.conj());
    let diagonal = a
        .indexed_iter()
        .all(|((i, j), z)| i == j || *z == Complex64::new(0.0, 0.0));
    let ap = if diagonal {
        let mut scaled = ud.clone();
        for (mut col, x) in scaled.columns_mut().into_iter().zip(a.diag()) {
            col.mapv_inplace(|z| z * x);
        }
        scaled.dot(u)
    } else {
        ud.dot(a).dot(u)
    };
    let c = ud.dot(phi);
    let p: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let mut a_num = Complex64::new(0.0, 0.0);
    let mut a_den = Complex64::new(0.0, 0.0);
    let (mut g_num, mut g_den, mut k_num, mut k_den) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..d {
        for k in 0..d {
            let w = energies[j] - energies[k];
            let w2 = w * w;
            let x = ap[[j, k]];
            let z = c[j].conj() * c[k] * x;
            a_num += z * w2;
            a_den += z;
            let x2 = x.norm_sqr();
            g_num += p[j] * p[k] * x2 * w2;
            g_den += p[j] * p[k] * x2;
            k_num += x2 * w2;
            k_den += x2;
        }
    }
    let scale = a.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if a_den.norm() < 1e-12 * scale.max(1e-300) {
        return Err(RmtError::SingularDenominator("<Phi|A|Phi>"));
    }
    if g_den <= 0.0 {
        return Err(RmtError::SingularDenominator("tr{(D_U A)^2}"));
    }
    if k_den <= 0.0 {
        return Err(RmtError::SingularDenominator("tr{A^2}"));
    }
    Ok(RmtSample {
        sigma_a_sq: a_num.re / a_den.re,
        sigma_g_num: g_num,
        sigma_g_den: g_den,
        sigma_k_sq: k_num / k_den,
    })
}

/// Numerator and denominator of `sigma_G^2` in the original basis, with
/// `D_U` assembled as an explicit sum of rank-one projectors.
pub fn sigma_g_parts_dense(
    energies: &[f64],
    a: &Array2<Complex64>,
    phi: &Array1<Complex64>,
    u: &Array2<Complex64>,
) -> Result<(f64, f64), RmtError> {
    let d = check_dims(energies, a, phi, Some(u))?;
    let mut dephased = Array2::<Complex64>::zeros((d, d));
    let mut hu = Array2::<Complex64>::zeros((d, d));
    for j in 0..d {
        let col = u.column(j);
        let overlap: Complex64 = col.iter().zip(phi).map(|(x, y)| x.conj() * y).sum();
        let w = overlap.norm_sqr();
        for r in 0..d {
            for s in 0..d {
                let proj = col[r] * col[s].conj();
                dephased[[r, s]] += proj * w;
                hu[[r, s]] += proj * energies[j];
            }
        }
    }
    let ah = a.dot(&hu);
    let ha = hu.dot(a);
    let c1 = &ah - &ha;
    let c2 = &ha - &ah;
    let num = dephased.dot(&c1).dot(&dephased.dot(&c2)).diag().sum();
    let da = dephased.dot(a);
    let den = da.dot(&da).diag().sum();
    Ok((num.re, den.re))
}

/// Infinite-temperature moments entering the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MicrocanonicalMoments {
    pub h1: f64,
    pub h2: f64,
    pub a1: f64,
    pub a2: f64,
    /// `<Phi|A|Phi>`
    pub a0: f64,
    /// `<Phi|A^2|Phi>`
    pub a0sq: f64,
    pub d: usize,
}

impl MicrocanonicalMoments {
    pub fn new(energies: &[f64], a: &Array2<Complex64>, phi: &Array1<Complex64>) -> Result<Self, RmtError> {
        let d = check_dims(energies, a, phi, None)?;
        let df = d as f64;
        let h1 = energies.iter().sum::<f64>() / df;
        let h2 = energies.iter().map(|e| e * e).sum::<f64>() / df;
        let a1 = a.diag().iter().map(|z| z.re).sum::<f64>() / df;
        let a2 = a.iter().map(|z| z.norm_sqr()).sum::<f64>() / df;
        let aphi = a.dot(phi);
        let a0 = phi.iter().zip(&aphi).map(|(x, y)| x.conj() * y).sum::<Complex64>().re;
        let a0sq = aphi.iter().map(|z| z.norm_sqr()).sum();
        Ok(Self {
            h1,
            h2,
            a1,
            a2,
            a0,
            a0sq,
            d,
        })
    }

    pub fn energy_variance(&self) -> f64 {
        self.h2 - self.h1 * self.h1
    }
}

/// Haar averages at finite `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForms {
    /// Exact `<sigma_A^2>_U`; `None` when `<Phi|A|Phi> = 0`.
    pub sigma_a_sq: Option<f64>,
    /// Leading-order `<sigma_A^2>_U`.
    pub sigma_a_sq_leading: Option<f64>,
    /// Exact `<tr{D_U [A,H_U] D_U [H_U,A]}>_U`.
    pub sigma_g_num: f64,
    /// Exact `<tr{(D_U A)^2}>_U`.
    pub sigma_g_den: f64,
    /// Ratio of the two averages above.
    pub sigma_g_sq_annealed: f64,
    /// Exact `<sigma_K^2>_U`.
    pub sigma_k_sq: f64,
    /// `2 (<H^2>_MC - <H>_MC^2)`.
    pub universal: f64,
}

pub fn haar_closed_forms(m: &MicrocanonicalMoments) -> Result<ClosedForms, RmtError> {
    if m.d < 2 {
        return Err(RmtError::DimensionTooSmall(m.d));
    }
    let d = m.d as f64;
    let var = m.energy_variance();
    let (a0, a0s, a1, a2) = (m.a0, m.a0sq, m.a1, m.a2);
    let (sigma_a_sq, sigma_a_sq_leading) = if a0 != 0.0 {
        let lead = 2.0 * var * (a0 - a1) / a0;
        (Some(d * d / (d * d - 1.0) * lead), Some(lead))
    } else {
        (None, None)
    };
    let g_num = 2.0 * var / ((d - 1.0) * (d + 1.0) * (d + 2.0) * (d + 3.0))
        * (2.0 * (d * d - 1.0) * a0s + a0 * a0 * (d * d + d + 2.0)
            - 2.0 * a0 * a1 * d * (3.0 * d + 1.0)
            + d * ((d + 1.0).powi(2) * a2 - a1 * a1 * (d - 1.0) * d));
    let g_den = (d * (a1 * a1 * d * (d + 1.0) + d * (d + 4.0) * a2 + 2.0 * (d + 4.0) * a0s + a2)
        + a0 * a0 * (d * d + 5.0 * d + 2.0)
        + 2.0 * a0 * a1 * (d - 1.0) * d
        - 2.0 * a0s)
        / (d * (d + 1.0) * (d + 2.0) * (d + 3.0));
    let sigma_k_sq = if a2 > 0.0 {
        2.0 * d * d * (a2 - a1 * a1) * var / ((d * d - 1.0) * a2)
    } else {
        0.0
    };
    Ok(ClosedForms {
        sigma_a_sq,
        sigma_a_sq_leading,
        sigma_g_num: g_num,
        sigma_g_den: g_den,
        sigma_g_sq_annealed: g_num / g_den,
        sigma_k_sq,
        universal: 2.0 * var,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn summary(&self) -> Summary {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        Summary {
            mean: self.mean,
            std: var.sqrt(),
            stderr: (var / self.n.max(1) as f64).sqrt(),
        }
    }
}

/// Sample mean, sample standard deviation and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        w.summary()
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaarEnsembleStats {
    pub dim: usize,
    pub n_samples: usize,
    pub discarded: usize,
    pub seed: u64,
    pub sigma_a_sq: Summary,
    pub sigma_g_num: Summary,
    pub sigma_g_den: Summary,
    /// Mean of the per-sample ratio.
    pub sigma_g_sq: Summary,
    pub sigma_k_sq: Summary,
    pub moments: MicrocanonicalMoments,
    pub closed: ClosedForms,
}

/// Per-sample rates for samples `0..n` of master seed `seed`, in order.
/// Singular samples are returned as errors, not dropped.
pub fn haar_samples(
    energies: &[f64],
    a: &Array2<Complex64>,
    phi: &Array1<Complex64>,
    n: usize,
    seed: u64,
) -> Result<Vec<Result<RmtSample, RmtError>>, RmtError> {
    let d = check_dims(energies, a, phi, None)?;
    if d < 2 {
        return Err(RmtError::DimensionTooSmall(d));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let u = sample_haar_unitary(d, &mut rng)?;
            rmt_rates_one_sample(energies, a, phi, &u)
        })
        .collect())
}

pub fn haar_ensemble(
    energies: &[f64],
    a: &Array2<Complex64>,
    phi: &Array1<Complex64>,
    n: usize,
    seed: u64,
) -> Result<HaarEnsembleStats, RmtError> {
    if n < 2 {
        return Err(RmtError::TooFewSamples(n));
    }
    let moments = MicrocanonicalMoments::new(energies, a, phi)?;
    let closed = haar_closed_forms(&moments)?;
    let samples = haar_samples(energies, a, phi, n, seed)?;
    let mut acc = [Welford::default(); 5];
    let mut discarded = 0;
    for s in samples {
        match s {
            Ok(s) => {
                for (w, x) in acc.iter_mut().zip([
                    s.sigma_a_sq,
                    s.sigma_g_num,
                    s.sigma_g_den,
                    s.sigma_g_sq(),
                    s.sigma_k_sq,
                ]) {
                    w.push(x);
                }
            }
            Err(RmtError::SingularDenominator(_)) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    if acc[0].n == 0 {
        return Err(RmtError::AllDiscarded);
    }
    Ok(HaarEnsembleStats {
        dim: energies.len(),
        n_samples: acc[0].n,
        discarded,
        seed,
        sigma_a_sq: acc[0].summary(),
        sigma_g_num: acc[1].summary(),
        sigma_g_den: acc[2].summary(),
        sigma_g_sq: acc[3].summary(),
        sigma_k_sq: acc[4].summary(),
        moments,
        closed,
    })
}

/// Mean of `f/g` against `mean(f)/mean(g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealedReport {
    pub mean_of_ratio: f64,
    pub ratio_of_means: f64,
    pub abs_difference: f64,
    pub rel_difference: f64,
}

pub fn annealed_from_parts(f: &[f64], g: &[f64]) -> AnnealedReport {
    let n = f.len().min(g.len()) as f64;
    let mean_of_ratio = f.iter().zip(g).map(|(a, b)| a / b).sum::<f64>() / n;
    let ratio_of_means = (f.iter().sum::<f64>() / n) / (g.iter().sum::<f64>() / n);
    let abs_difference = (mean_of_ratio - ratio_of_means).abs();
    AnnealedReport {
        mean_of_ratio,
        ratio_of_means,
        abs_difference,
        rel_difference: abs_difference / ratio_of_means.abs(),
    }
}

/// Annealed-approximation check for `sigma_G^2` over `n` Haar samples.
pub fn annealed_check(
    energies: &[f64],
    a: &Array2<Complex64>,
    phi: &Array1<Complex64>,
    n: usize,
    seed: u64,
) -> Result<AnnealedReport, RmtError> {
    if n < 2 {
        return Err(RmtError::TooFewSamples(n));
    }
    let samples: Vec<RmtSample> = haar_samples(energies, a, phi, n, seed)?
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    if samples.is_empty() {
        return Err(RmtError::AllDiscarded);
    }
    let f: Vec<f64> = samples.iter().map(|s| s.sigma_g_num).collect();
    let g: Vec<f64> = samples.iter().map(|s| s.sigma_g_den).collect();
    Ok(annealed_from_parts(&f, &g))
}

/// `d` levels drawn from a standard normal distribution, on a stream no
/// Haar sample uses.
pub fn gaussian_spectrum(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = sample_rng(seed, u64::MAX);
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Diagonal, traceless observable `diag(3, -1, -1, -1, +1, -1, +1, ...)`
/// (requires even `d >= 4`) together with the state `|0>`.
pub fn traceless_probe(d: usize) -> (Array2<Complex64>, Array1<Complex64>) {
    let mut diag = vec![Complex64::new(0.0, 0.0); d];
    for (i, x) in diag.iter_mut().enumerate() {
        let v = match i {
            0 => 3.0,
            1..=3 => -1.0,
            _ if i % 2 == 0 => 1.0,
            _ => -1.0,
        };
        *x = Complex64::new(v, 0.0);
    }
    let mut phi = Array1::zeros(d);
    phi[0] = Complex64::new(1.0, 0.0);
    (Array2::from_diag(&Array1::from(diag)), phi)
}
