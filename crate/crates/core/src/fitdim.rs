//! Early-time Gaussian and quadratic fits with the normalized L1
//! discrepancy, and the two effective dimensions.

use ndarray_linalg::{EigValsh, UPLO};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::QuenchData;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 5 grid points up to tau = {tau}, got {points}")]
    TooFewPoints { tau: f64, points: usize },
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
}

/// Default fit window.
pub const DEFAULT_TAU_FIT: f64 = 0.5;
/// Default grid spacing.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `a exp(-s t^2 / 2) + b`
    Gaussian,
    /// `a (1 - s t^2 / 2) + b`
    Quadratic,
}

impl FitModel {
    pub fn eval(self, rate_sq: f64, amplitude: f64, offset: f64, t: f64) -> f64 {
        match self {
            FitModel::Gaussian => amplitude * (-0.5 * rate_sq * t * t).exp() + offset,
            FitModel::Quadratic => amplitude * (1.0 - 0.5 * rate_sq * t * t) + offset,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitModel::Gaussian => "gaussian",
            FitModel::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    pub rate_sq: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// `(tau, D(tau))` pairs.
    pub dbar: Vec<(f64, f64)>,
}

fn points_up_to(dt: f64, tau: f64, len: usize) -> usize {
    // n dt <= tau, with a little slack against rounding of tau / dt
    let n = (tau / dt + 1e-9).floor() as usize + 1;
    n.min(len)
}

/// `sum_{n dt <= tau} |y_n - f_n| / sum_{n dt <= tau} |y_n|`.
pub fn dbar(series: &[f64], fitted: &[f64], dt: f64, tau: f64) -> f64 {
    let n = points_up_to(dt, tau, series.len().min(fitted.len()));
    let num: f64 = (0..n).map(|i| (series[i] - fitted[i]).abs()).sum();
    let den: f64 = series[..n].iter().map(|y| y.abs()).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn sse(model: FitModel, s: f64, amp: f64, off: f64, t: &[f64], y: &[f64]) -> f64 {
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - model.eval(s, amp, off, ti)).powi(2))
        .sum()
}

/// Gaussian rate by direct one-dimensional least squares, started from
/// the log-linear estimate when the centered data keep one sign.
fn gaussian_rate(t: &[f64], y: &[f64], amp: f64, off: f64, quadratic_guess: f64) -> f64 {
    if amp == 0.0 {
        return 0.0;
    }
    let mut guess = quadratic_guess.max(0.0);
    let ratios: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .skip(1)
        .map(|(&ti, &yi)| (ti, (yi - off) / amp))
        .collect();
    if !ratios.is_empty() && ratios.iter().all(|&(_, r)| r > 0.0) {
        // log r = -s t^2 / 2
        let num: f64 = ratios.iter().map(|&(ti, r)| -0.5 * ti * ti * r.ln()).sum();
        let den: f64 = ratios.iter().map(|&(ti, _)| 0.25 * ti.powi(4)).sum();
        if den > 0.0 && num > 0.0 {
            guess = num / den;
        }
    }
    let f = |s: f64| sse(FitModel::Gaussian, s, amp, off, t, y);
    let mut hi = (4.0 * guess).max(1e-6);
    let tmax = t.last().copied().unwrap_or(1.0).max(1e-12);
    let cap = 1e4 / (tmax * tmax);
    while f(hi) < f(0.5 * hi) && hi < cap {
        hi *= 2.0;
    }
    // golden-section search on [0, hi]
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
    }
    let s = 0.5 * (a + b);
    if f(0.0) <= f(s) {
        0.0
    } else {
        s
    }
}

/// Fits `series` (sampled at `n dt`) on `t <= tau_fit`. The amplitude is
/// fixed to `series[0] - a_infinity` and the offset to `a_infinity`, so
/// only the rate is fitted. `D(tau)` is reported for each entry of `taus`.
pub fn fit_early_decay(
    series: &[f64],
    dt: f64,
    tau_fit: f64,
    model: FitModel,
    a_infinity: f64,
    taus: &[f64],
) -> Result<FitResult, FitError> {
    if !(dt > 0.0) {
        return Err(FitError::InvalidStep(dt));
    }
    let n = points_up_to(dt, tau_fit, series.len());
    if n < 5 {
        return Err(FitError::TooFewPoints {
            tau: tau_fit,
            points: n,
        });
    }
    let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let y = &series[..n];
    let amp = series[0] - a_infinity;
    let off = a_infinity;
    // quadratic: y - off - amp = -(amp t^2 / 2) s
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let x = -0.5 * amp * ti * ti;
        sxy += x * (yi - off - amp);
        sxx += x * x;
    }
    let quad = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rate_sq = match model {
        FitModel::Quadratic => quad,
        FitModel::Gaussian => gaussian_rate(&t, y, amp, off, quad),
    };
    let fitted: Vec<f64> = (0..series.len())
        .map(|i| model.eval(rate_sq, amp, off, i as f64 * dt))
        .collect();
    let dbar = taus
        .iter()
        .map(|&tau| (tau, dbar(series, &fitted, dt, tau)))
        .collect();
    Ok(FitResult {
        model,
        rate_sq,
        amplitude: amp,
        offset: off,
        dbar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveDimensions {
    /// `sum_j |c_j|^4`.
    pub d_phi_inv: f64,
    /// `sum_{j != k} |c_j|^2 |c_k|^2 |A_jk|^2`.
    pub d_phi_a_inv: f64,
}

pub fn effective_dimensions(q: &QuenchData) -> EffectiveDimensions {
    let p = q.weights();
    let n = q.dim();
    let d_phi_inv = p.iter().map(|w| w * w).sum();
    let mut d_phi_a_inv = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                d_phi_a_inv += p[j] * p[k] * q.obs[[j, k]].norm_sqr();
            }
        }
    }
    EffectiveDimensions {
        d_phi_inv,
        d_phi_a_inv,
    }
}

/// Largest `|eigenvalue|` of the observable block in `q`.
pub fn observable_norm(q: &QuenchData) -> f64 {
    if q.dim() == 0 {
        return 0.0;
    }
    match q.obs.eigvalsh(UPLO::Lower) {
        Ok(ev) => ev.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        Err(_) => f64::NAN,
    }
}
