//! Early-time decay rates and the two correlation functions.
//!
//! Conventions: `<A(t)>` and the Srednicki function decay as
//! `exp(-sigma^2 t^2 / 2)`, so `sigma_A^2` and `sigma_G^2` are minus the
//! curvature at `t = 0` of the centered, normalized functions. For the
//! Kubo function the decay is written `exp(-sigma_K^2 t^2)`, but
//! `sigma_K^2` is stored as the gap-weighted second moment
//! `tr{[A, rho_beta][A, H]} / C_Kubo(0)`, which is again minus the
//! curvature of the normalized function. All three numbers are therefore
//! directly comparable.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fitdim::effective_dimensions;
use crate::spectral::{diagonal_ensemble_value, gap_degeneracy_count, QuenchData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("<A(0)> - <A(inf)> = {centered:.3e} is too small to normalize the decay")]
    DegenerateStart { centered: f64 },
    #[error("no off-diagonal weight: the observable is diagonal in the energy basis")]
    ZeroWeight,
    #[error("sum has imaginary part {imag:.3e}")]
    ComplexValue { imag: f64 },
    #[error("target energy {target} outside ({min}, {max})")]
    TargetOutOfRange { target: f64, min: f64, max: f64 },
    #[error("|beta| would exceed {beta_max:.3e}")]
    BetaOverflow { beta_max: f64 },
    #[error("restricted index set is empty")]
    EmptyRestriction,
    #[error("root finder did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
}

/// Default relative weight below which a level is left out of the Kubo set.
pub const DEFAULT_KUBO_THRESHOLD: f64 = 1e-12;

/// A normalized cosine series `f(t) = sum_a w_a cos(omega_a t)`,
/// `sum_a w_a = 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapSpectrum {
    pub omegas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GapSpectrum {
    fn normalized(omegas: Vec<f64>, raw: Vec<f64>) -> Self {
        let total: f64 = raw.iter().sum();
        Self {
            omegas,
            weights: raw.into_iter().map(|w| w / total).collect(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.weights.is_empty() {
            return 1.0;
        }
        self.omegas
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| w * (o * t).cos())
            .sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        -self
            .omegas
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| w * o * (o * t).sin())
            .sum::<f64>()
    }

    /// `sum_a w_a omega_a^2 = -f''(0)`.
    pub fn second_moment(&self) -> f64 {
        self.omegas
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| w * o * o)
            .sum()
    }

    pub fn series(&self, times: &[f64]) -> Vec<f64> {
        times.par_iter().map(|&t| self.value(t)).collect()
    }
}

/// Numerator and denominator of `sigma_A^2`:
/// `sum_jk conj(c_j) c_k A_jk (E_j - E_k)^2` and `<A(0)> - <A(inf)>`.
pub fn sigma_a_parts(q: &QuenchData) -> Result<(f64, f64), RateError> {
    let n = q.dim();
    let rows: Vec<(Complex64, Complex64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let cj = q.coeffs[j].conj();
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = Complex64::new(0.0, 0.0);
            let mut mag = 0.0;
            for k in 0..n {
                let z = cj * q.coeffs[k] * q.obs[[j, k]];
                let w = q.energies[j] - q.energies[k];
                num += z * (w * w);
                mag += z.norm() * w * w;
                if k != j {
                    den += z;
                }
            }
            (num, den, mag)
        })
        .collect();
    let num: Complex64 = rows.iter().map(|r| r.0).sum();
    let den: Complex64 = rows.iter().map(|r| r.1).sum();
    let mag: f64 = rows.iter().map(|r| r.2).sum();
    if num.im.abs() > 1e-9 * mag.max(1e-300) && num.im.abs() > 1e-12 {
        return Err(RateError::ComplexValue { imag: num.im });
    }
    Ok((num.re, den.re))
}

/// `-<[H,[H,A]]> / (<A(0)> - <A(inf)>)`.
pub fn sigma_a_sq(q: &QuenchData) -> Result<f64, RateError> {
    let (num, den) = sigma_a_parts(q)?;
    if den.abs() < 1e-12 {
        return Err(RateError::DegenerateStart { centered: den });
    }
    Ok(num / den)
}

/// Gap spectrum of the Srednicki function, pairs `j < k` with weight
/// `2 |c_j|^2 |c_k|^2 |A_jk|^2`.
pub fn srednicki_gaps(q: &QuenchData) -> Result<GapSpectrum, RateError> {
    let n = q.dim();
    let p = q.weights();
    let mut omegas = Vec::new();
    let mut raw = Vec::new();
    let mut diag = 0.0;
    for j in 0..n {
        diag += p[j] * p[j] * q.obs[[j, j]].norm_sqr();
        for k in (j + 1)..n {
            let w = 2.0 * p[j] * p[k] * q.obs[[j, k]].norm_sqr();
            if w > 0.0 {
                omegas.push(q.energies[k] - q.energies[j]);
                raw.push(w);
            }
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 1e-20 * (total + diag) || total < 1e-300 {
        return Err(RateError::ZeroWeight);
    }
    Ok(GapSpectrum::normalized(omegas, raw))
}

pub fn srednicki_correlation(q: &QuenchData, times: &[f64]) -> Result<Vec<f64>, RateError> {
    Ok(srednicki_gaps(q)?.series(times))
}

pub fn sigma_g_sq(q: &QuenchData) -> Result<f64, RateError> {
    Ok(srednicki_gaps(q)?.second_moment())
}

/// `sigma_G^2` from the trace form
/// `tr{D [A,H] D [H,A]} / (tr{(D A)^2} - sum_j p_j^2 A_jj^2)` with dense
/// products in the energy basis.
pub fn sigma_g_sq_trace(q: &QuenchData) -> Result<f64, RateError> {
    let n = q.dim();
    let p = q.weights();
    let d = Array2::from_diag(&p.mapv(|x| Complex64::new(x, 0.0)));
    let h = Array2::from_diag(&q.energies.mapv(|x| Complex64::new(x, 0.0)));
    let a = &q.obs;
    let ah = a.dot(&h);
    let ha = h.dot(a);
    let comm_ah = &ah - &ha;
    let comm_ha = &ha - &ah;
    let num = d.dot(&comm_ah).dot(&d.dot(&comm_ha)).diag().sum();
    let da = d.dot(a);
    let full = da.dot(&da).diag().sum();
    let diag: f64 = (0..n).map(|j| (p[j] * q.obs[[j, j]].re).powi(2)).sum();
    let den = full.re - diag;
    if den <= 1e-20 * full.re.abs() || den < 1e-300 {
        return Err(RateError::ZeroWeight);
    }
    Ok(num.re / den)
}

/// Normalized Gibbs weights `e^{-beta E}/Z`, computed with a shifted exponent.
pub fn thermal_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let shift = energies
        .iter()
        .map(|e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = energies.iter().map(|e| (-beta * e - shift).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

fn thermal_energy(energies: &[f64], beta: f64) -> f64 {
    thermal_weights(energies, beta)
        .iter()
        .zip(energies)
        .map(|(w, e)| w * e)
        .sum()
}

/// Inverse temperature at which the Gibbs state on `restricted` has mean
/// energy `target`. Bisection on a geometrically grown bracket.
pub fn solve_beta(energies: &[f64], restricted: &[usize], target: f64) -> Result<f64, RateError> {
    if restricted.is_empty() {
        return Err(RateError::EmptyRestriction);
    }
    let e: Vec<f64> = restricted.iter().map(|&j| energies[j]).collect();
    let min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(target > min && target < max) {
        return Err(RateError::TargetOutOfRange { target, min, max });
    }
    let width = max - min;
    let tol = 1e-9 * width;
    let mean0 = thermal_energy(&e, 0.0);
    if (mean0 - target).abs() < 1e-14 * width {
        return Ok(0.0);
    }
    let beta_max = 1e3 / width;
    let sign = if target < mean0 { 1.0 } else { -1.0 };
    // g(b) = sign * (E(sign b) - target) is decreasing in b >= 0, positive at 0
    let g = |b: f64| sign * (thermal_energy(&e, sign * b) - target);
    let mut lo = 0.0;
    let mut hi = 1.0 / width;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > beta_max {
            if g(beta_max) > 0.0 {
                return Err(RateError::BetaOverflow { beta_max });
            }
            hi = beta_max;
            break;
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let residual = g(mid).abs();
    if residual >= tol {
        return Err(RateError::NoConvergence { residual });
    }
    Ok(sign * mid)
}

/// Gibbs state on the levels the quench populates.
#[derive(Debug, Clone, PartialEq)]
pub struct KuboContext {
    pub beta: f64,
    pub restricted: Vec<usize>,
    pub weights: Vec<f64>,
}

impl KuboContext {
    /// Levels with `|c_j|^2 > threshold * max |c|^2`.
    pub fn restricted_set(q: &QuenchData, threshold: f64) -> Vec<usize> {
        let p = q.weights();
        let pmax = p.iter().copied().fold(0.0, f64::max);
        (0..q.dim()).filter(|&j| p[j] > threshold * pmax).collect()
    }

    pub fn at_beta(q: &QuenchData, restricted: Vec<usize>, beta: f64) -> Result<Self, RateError> {
        if restricted.is_empty() {
            return Err(RateError::EmptyRestriction);
        }
        let e: Vec<f64> = restricted.iter().map(|&j| q.energies[j]).collect();
        Ok(Self {
            beta,
            weights: thermal_weights(&e, beta),
            restricted,
        })
    }

    /// Energy-matched context: `beta` solves `<H>_beta = <Psi|H|Psi>`.
    pub fn thermal(q: &QuenchData, threshold: f64) -> Result<Self, RateError> {
        let restricted = Self::restricted_set(q, threshold);
        let e: Vec<f64> = q.energies.to_vec();
        let beta = solve_beta(&e, &restricted, q.mean_energy)?;
        Self::at_beta(q, restricted, beta)
    }
}

/// `-expm1(-x)/x`, with value 1 at 0.
fn phi(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Gap spectrum of the normalized Kubo function. Kernel
/// `(w_j - w_k) / (beta (E_k - E_j))`, with the limit `w_j` for equal
/// energies; an observable with no off-diagonal weight gives an empty
/// spectrum (constant function, zero rate).
pub fn kubo_gaps(q: &QuenchData, ctx: &KuboContext) -> GapSpectrum {
    let r = &ctx.restricted;
    let mut omegas = Vec::new();
    let mut raw = Vec::new();
    for a in 0..r.len() {
        for b in (a + 1)..r.len() {
            let (j, k) = (r[a], r[b]);
            let a2 = q.obs[[j, k]].norm_sqr();
            if a2 == 0.0 {
                continue;
            }
            let dx = ctx.beta * (q.energies[k] - q.energies[j]);
            // the kernel is symmetric; expand around the heavier level
            let kernel = if dx >= 0.0 {
                ctx.weights[a] * phi(dx)
            } else {
                ctx.weights[b] * phi(-dx)
            };
            omegas.push(q.energies[k] - q.energies[j]);
            raw.push(2.0 * kernel * a2);
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return GapSpectrum::default();
    }
    GapSpectrum::normalized(omegas, raw)
}

pub fn kubo_correlation(q: &QuenchData, ctx: &KuboContext, times: &[f64]) -> Vec<f64> {
    kubo_gaps(q, ctx).series(times)
}

pub fn sigma_k_sq(q: &QuenchData, ctx: &KuboContext) -> f64 {
    kubo_gaps(q, ctx).second_moment()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedLimitReport {
    /// `max_t |dC/dt| / sigma_G`.
    pub srednicki: f64,
    /// `max_t |dC_Kubo/dt| / sigma_K`.
    pub kubo: f64,
}

fn max_ratio(g: &GapSpectrum, times: &[f64]) -> f64 {
    let sigma = g.second_moment().sqrt();
    if sigma == 0.0 {
        return 0.0;
    }
    times
        .par_iter()
        .map(|&t| g.derivative(t).abs() / sigma)
        .reduce(|| 0.0, f64::max)
}

pub fn speed_limit_checks(
    q: &QuenchData,
    ctx: &KuboContext,
    times: &[f64],
) -> Result<SpeedLimitReport, RateError> {
    Ok(SpeedLimitReport {
        srednicki: max_ratio(&srednicki_gaps(q)?, times),
        kubo: max_ratio(&kubo_gaps(q, ctx), times),
    })
}

/// `(1/T) int_0^T |f(t) - f(inf)|^2 dt` for `f(t) = sum_a z_a e^{-i G_a t}`.
/// Terms with zero gap are the constant part and are dropped. `None`
/// means `T -> infinity`, where equal gaps are grouped before squaring.
pub fn fluctuation_average(terms: &[(f64, Complex64)], horizon: Option<f64>) -> f64 {
    let scale = terms.iter().fold(1.0_f64, |m, (g, _)| m.max(g.abs()));
    let tol = 1e-9 * scale;
    let mut live: Vec<(f64, Complex64)> = terms
        .iter()
        .copied()
        .filter(|(g, _)| g.abs() > tol)
        .collect();
    match horizon {
        None => {
            live.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut total = 0.0;
            let mut i = 0;
            while i < live.len() {
                let mut acc = live[i].1;
                let mut e = i + 1;
                while e < live.len() && live[e].0 - live[e - 1].0 <= tol {
                    acc += live[e].1;
                    e += 1;
                }
                total += acc.norm_sqr();
                i = e;
            }
            total
        }
        Some(t) => live
            .par_iter()
            .map(|&(ga, za)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(gb, zb) in &live {
                    let x = t * (ga - gb);
                    let kernel = if x.abs() < 1e-8 {
                        Complex64::new(1.0, -0.5 * x)
                    } else {
                        (Complex64::new(0.0, -x).exp() - 1.0) / Complex64::new(0.0, -x)
                    };
                    acc += za * zb.conj() * kernel;
                }
                acc.re
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum(),
    }
}

fn srednicki_terms(q: &QuenchData) -> Result<Vec<(f64, Complex64)>, RateError> {
    let n = q.dim();
    let p = q.weights();
    let mut terms = Vec::new();
    for j in 0..n {
        for k in 0..n {
            if j != k {
                let w = p[j] * p[k] * q.obs[[j, k]].norm_sqr();
                if w > 0.0 {
                    terms.push((q.energies[j] - q.energies[k], Complex64::new(w, 0.0)));
                }
            }
        }
    }
    let total: f64 = terms.iter().map(|t| t.1.re).sum();
    if total <= 0.0 {
        return Err(RateError::ZeroWeight);
    }
    for t in terms.iter_mut() {
        t.1 /= total;
    }
    Ok(terms)
}

/// Time-averaged squared deviation of the Srednicki function from its
/// long-time value.
pub fn time_averaged_fluctuation(q: &QuenchData, horizon: Option<f64>) -> Result<f64, RateError> {
    Ok(fluctuation_average(&srednicki_terms(q)?, horizon))
}

/// Time-averaged squared deviation of `<A(t)>` itself from its long-time
/// value, from the amplitudes `conj(c_j) c_k A_jk`.
pub fn expectation_fluctuation(q: &QuenchData, horizon: Option<f64>) -> f64 {
    let n = q.dim();
    let mut terms = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            if j != k {
                let z = q.coeffs[j].conj() * q.coeffs[k] * q.obs[[j, k]];
                if z.norm_sqr() > 0.0 {
                    terms.push((q.energies[j] - q.energies[k], z));
                }
            }
        }
    }
    fluctuation_average(&terms, horizon)
}

/// `|sum_j e^{-i t E_j}|^2 / n^2`.
pub fn spectral_form_factor(energies: &[f64], times: &[f64]) -> Vec<f64> {
    let n = energies.len() as f64;
    times
        .par_iter()
        .map(|&t| {
            let z: Complex64 = energies
                .iter()
                .map(|&e| Complex64::from_polar(1.0, -t * e))
                .sum();
            z.norm_sqr() / (n * n)
        })
        .collect()
}

/// All rates and dimensions for one quench.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RateReport {
    pub sigma_a_sq: f64,
    pub sigma_g_sq: f64,
    pub sigma_k_sq: f64,
    pub beta: f64,
    pub a_initial: f64,
    pub a_infinity: f64,
    pub eff_dim_inv: f64,
    pub state_obs_eff_dim_inv: f64,
    pub mean_energy: f64,
    pub energy_variance: f64,
    pub gap_degeneracies: usize,
}

pub fn rate_report(q: &QuenchData, kubo_threshold: f64) -> Result<RateReport, RateError> {
    let ctx = KuboContext::thermal(q, kubo_threshold)?;
    let dims = effective_dimensions(q);
    Ok(RateReport {
        sigma_a_sq: sigma_a_sq(q)?,
        sigma_g_sq: sigma_g_sq(q)?,
        sigma_k_sq: sigma_k_sq(q, &ctx),
        beta: ctx.beta,
        a_initial: q.initial_value(),
        a_infinity: diagonal_ensemble_value(q),
        eff_dim_inv: dims.d_phi_inv,
        state_obs_eff_dim_inv: dims.d_phi_a_inv,
        mean_energy: q.mean_energy,
        energy_variance: q.energy_variance,
        gap_degeneracies: gap_degeneracy_count(q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    /// Two levels split by `gap`, state (|0> + |1>)/sqrt 2, A = sigma_x.
    fn two_level(gap: f64) -> QuenchData {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        QuenchData::new(
            array![0.0, gap],
            array![c(h), c(h)],
            array![[c(0.0), c(1.0)], [c(1.0), c(0.0)]],
        )
        .unwrap()
    }

    #[test]
    fn two_level_rates() {
        let q = two_level(1.5);
        assert!((sigma_g_sq(&q).unwrap() - 2.25).abs() < 1e-14);
        assert!((sigma_g_sq_trace(&q).unwrap() - 2.25).abs() < 1e-12);
        assert!((sigma_a_sq(&q).unwrap() - 2.25).abs() < 1e-12);
        let times = [0.0, 0.3, 1.1];
        let cs = srednicki_correlation(&q, &times).unwrap();
        for (v, t) in cs.iter().zip(times) {
            assert!((v - (1.5 * t).cos()).abs() < 1e-14);
        }
        assert_eq!(cs[0], 1.0);
    }

    #[test]
    fn speed_limit_saturated_by_cosine() {
        let q = two_level(2.0);
        let ctx = KuboContext::at_beta(&q, vec![0, 1], 0.0).unwrap();
        let times: Vec<f64> = (0..2000).map(|i| f64::from(i) * 0.001).collect();
        let r = speed_limit_checks(&q, &ctx, &times).unwrap();
        assert!((r.srednicki - 1.0).abs() < 1e-6 && r.srednicki <= 1.0 + 1e-12);
        let r0 = speed_limit_checks(&q, &ctx, &[0.0]).unwrap();
        assert_eq!(r0.srednicki, 0.0);
        assert_eq!(r0.kubo, 0.0);
    }

    #[test]
    fn commuting_observable() {
        // A diagonal in the energy basis: no dynamics.
        let q = QuenchData::new(
            array![0.0, 1.0, 3.0],
            array![c(0.6), c(0.0), c(0.8)],
            Array2::from_diag(&array![c(1.0), c(-1.0), c(0.5)]),
        )
        .unwrap();
        let (num, _) = sigma_a_parts(&q).unwrap();
        assert_eq!(num, 0.0);
        assert!(matches!(sigma_a_sq(&q), Err(RateError::DegenerateStart { .. })));
        assert_eq!(srednicki_gaps(&q), Err(RateError::ZeroWeight));
        let ctx = KuboContext::at_beta(&q, vec![0, 1, 2], 0.3).unwrap();
        assert_eq!(sigma_k_sq(&q, &ctx), 0.0);
    }

    #[test]
    fn beta_solver() {
        let e = [0.0, 1.0, 2.0, 5.0];
        let idx = [0, 1, 2, 3];
        assert_eq!(solve_beta(&e, &idx, 2.0).unwrap(), 0.0);
        for target in [0.3, 1.0, 3.5, 4.9] {
            let b = solve_beta(&e, &idx, target).unwrap();
            assert!((thermal_energy(&e, b) - target).abs() < 1e-9 * 5.0);
            assert_eq!(b > 0.0, target < 2.0);
        }
        assert!(matches!(
            solve_beta(&e, &idx, 5.0),
            Err(RateError::TargetOutOfRange { .. })
        ));
        assert!(matches!(
            solve_beta(&e, &idx, 1e-300),
            Err(RateError::BetaOverflow { .. })
        ));
        assert_eq!(solve_beta(&e, &[], 1.0), Err(RateError::EmptyRestriction));
    }

    #[test]
    fn kubo_at_infinite_temperature_is_plain_autocorrelation() {
        let e = array![0.0, 0.7, 1.9];
        let a = array![
            [c(0.2), c(0.5), c(-0.1)],
            [c(0.5), c(0.0), c(0.3)],
            [c(-0.1), c(0.3), c(-0.4)]
        ];
        let q = QuenchData::new(e.clone(), Array1::from_elem(3, c(1.0 / 3f64.sqrt())), a.clone())
            .unwrap();
        let ctx = KuboContext::at_beta(&q, vec![0, 1, 2], 0.0).unwrap();
        let t = 0.83;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                if j != k {
                    num += a[[j, k]].norm_sqr() * ((e[j] - e[k]) * t).cos();
                    den += a[[j, k]].norm_sqr();
                }
            }
        }
        let got = kubo_correlation(&q, &ctx, &[0.0, t]);
        assert!((got[0] - 1.0).abs() < 1e-15);
        assert!((got[1] - num / den).abs() < 1e-14);
    }

    #[test]
    fn kubo_kernel_degenerate_limit() {
        let e = array![1.0, 1.0 + 1e-15, 2.0];
        let a = array![
            [c(0.0), c(1.0), c(0.0)],
            [c(1.0), c(0.0), c(1.0)],
            [c(0.0), c(1.0), c(0.0)]
        ];
        let q = QuenchData::new(e, Array1::from_elem(3, c(1.0 / 3f64.sqrt())), a).unwrap();
        let ctx = KuboContext::at_beta(&q, vec![0, 1, 2], 0.8).unwrap();
        let g = kubo_gaps(&q, &ctx);
        assert!(g.weights.iter().all(|w| w.is_finite() && *w > 0.0));
        // near-degenerate pair kernel tends to w_j
        let w0 = ctx.weights[0];
        let raw01 = 2.0 * w0;
        let raw12 = 2.0 * (ctx.weights[1] - ctx.weights[2]) / (0.8 * (1.0 - 1e-15));
        let ratio = g.weights[0] / g.weights[1];
        assert!((ratio - raw01 / raw12).abs() < 1e-9);
    }

    #[test]
    fn fluctuation_limits() {
        let h = 0.5;
        // cos(t) = (e^{it} + e^{-it})/2
        let terms = [(1.0, c(h)), (-1.0, c(h))];
        assert!((fluctuation_average(&terms, None) - 0.5).abs() < 1e-15);
        let finite = fluctuation_average(&terms, Some(1e7));
        assert!((finite - 0.5).abs() < 1e-6);
        // direct integral of cos^2 over [0, T]
        let t: f64 = 3.0;
        let exact = 0.5 + (2.0 * t).sin() / (4.0 * t);
        assert!((fluctuation_average(&terms, Some(t)) - exact).abs() < 1e-14);
        assert_eq!(fluctuation_average(&[(0.0, c(1.0))], None), 0.0);
    }

    #[test]
    fn form_factor() {
        let s = spectral_form_factor(&[0.0, 1.3], &[0.0, 0.4, 2.0]);
        for (v, t) in s.iter().zip([0.0, 0.4, 2.0_f64]) {
            assert!((v - (1.0 + (1.3 * t).cos()) / 2.0).abs() < 1e-14);
        }
        assert_eq!(spectral_form_factor(&[2.5], &[0.0, 7.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn correlations_are_even() {
        let q = two_level(0.9);
        let g = srednicki_gaps(&q).unwrap();
        for t in [0.1, 0.5, 3.0] {
            assert!((g.value(t) - g.value(-t)).abs() < 1e-12);
        }
    }
}
