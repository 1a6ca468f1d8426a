use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use qrelax::model::{full_space_matrix, Hamiltonian};
use qrelax::rmt::{sample_haar_unitary, sample_rng, Summary};
use qrelax::spectral::{
    build_quench_data, diagonal_ensemble_value, QuenchData, QuenchProblem, Route,
};
use qrelax::timescales::{
    expectation_fluctuation, sigma_a_sq, sigma_g_sq, sigma_g_sq_trace, srednicki_correlation,
    srednicki_gaps, thermal_weights, time_averaged_fluctuation, KuboContext,
    DEFAULT_KUBO_THRESHOLD,
};
use qrelax::{
    block_labels, build_hamiltonian, diagonalize, expectation_timeseries, make_quench_data,
    CouplingVector, InitialStateSpec, ObservableSpec, SectorIndex,
    SectorLabels, SpinConfiguration, SymmetricBasis, DEFAULT_MAX_DIM,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn max_abs(m: &Array2<Complex64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn permutation(l: u32, f: impl Fn(SpinConfiguration) -> SpinConfiguration) -> Array2<Complex64> {
    let n = 1usize << l;
    let mut p = Array2::zeros((n, n));
    for b in 0..n {
        let to = f(SpinConfiguration::new(b as u64, l).unwrap()).bits() as usize;
        p[[to, b]] = c(1.0);
    }
    p
}

fn commutator(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    a.dot(b) - b.dot(a)
}

fn pairs() -> Vec<(InitialStateSpec, ObservableSpec)> {
    vec![
        (InitialStateSpec::Neel, ObservableSpec::a1()),
        (InitialStateSpec::DomainWallTi, ObservableSpec::A2NnZz),
        (InitialStateSpec::NeelCat, ObservableSpec::A2NnZz),
    ]
}

fn quench(l: u32, state: InitialStateSpec, obs: ObservableSpec) -> QuenchData {
    build_quench_data(&QuenchProblem::new(l, CouplingVector::default(), state, obs), None).unwrap()
}

fn full_state(l: u32, spec: &InitialStateSpec) -> Array1<Complex64> {
    let mut v = Array1::zeros(1usize << l);
    for (b, a) in spec.amplitudes(l).unwrap() {
        v[b as usize] = a;
    }
    v
}

/// `exp(m)` by scaling and squaring of a degree-24 Taylor polynomial.
fn expm(m: &Array2<Complex64>) -> Array2<Complex64> {
    let n = m.nrows();
    let norm = m
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = m.mapv(|z| z / 2f64.powi(s));
    let mut term = Array2::<Complex64>::eye(n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = term.dot(&x).mapv(|z| z / k as f64);
        sum = sum + &term;
    }
    for _ in 0..s {
        sum = sum.dot(&sum);
    }
    sum
}

#[test]
fn hamiltonian_commutes_with_magnetization_translation_and_flip() {
    for l in [4u32, 6, 8] {
        for cv in [CouplingVector::default(), CouplingVector::new(0.7, -1.3, 0.4, 2.1)] {
            let h = full_space_matrix(&Hamiltonian::new(l, cv).unwrap());
            assert!(max_abs(&(&h - &h.t().mapv(|z| z.conj()))) < 1e-12);
            let n = 1usize << l;
            let mz = Array2::from_diag(&Array1::from_iter(
                (0..n).map(|b| c(SpinConfiguration::new(b as u64, l).unwrap().magnetization() as f64)),
            ));
            let t = permutation(l, |s| s.translate(1));
            let x = permutation(l, |s| s.flip());
            assert!(max_abs(&commutator(&h, &mz)) < 1e-12);
            assert!(max_abs(&commutator(&h, &t)) < 1e-12, "L = {l}");
            assert!(max_abs(&commutator(&h, &x)) < 1e-12);
        }
    }
}

#[test]
fn observables_respect_their_declared_symmetries() {
    let l = 6;
    let t = permutation(l, |s| s.translate(1));
    let x = permutation(l, |s| s.flip());
    let a2 = full_space_matrix(&ObservableSpec::A2NnZz.bind(l));
    let a1 = full_space_matrix(&ObservableSpec::a1().bind(l));
    assert!(max_abs(&commutator(&a2, &t)) < 1e-15);
    assert!(max_abs(&commutator(&a2, &x)) < 1e-15);
    assert!(max_abs(&commutator(&a1, &t)) > 0.5);
    assert!(max_abs(&commutator(&a1, &x)) > 0.5);
}

/// `T` multiplies every symmetric state by `exp(-2 pi i k / L)` and `X` by
/// its parity.
#[test]
fn symmetric_states_are_eigenvectors_of_translation_and_flip() {
    for l in [4u32, 6, 8] {
        let t = permutation(l, |s| s.translate(1));
        let x = permutation(l, |s| s.flip());
        for lab in block_labels(l, 0, true) {
            let b = SymmetricBasis::build(l, lab, DEFAULT_MAX_DIM).unwrap();
            let phase = Complex64::from_polar(
                1.0,
                -2.0 * std::f64::consts::PI * lab.momentum.unwrap() as f64 / l as f64,
            );
            for i in 0..b.dim() {
                let mut v = Array1::<Complex64>::zeros(1usize << l);
                for (bits, a) in b.expansion(i) {
                    v[bits as usize] += a;
                }
                let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                assert!((norm - 1.0).abs() < 1e-12);
                let tv = t.dot(&v);
                assert!(tv.iter().zip(&v).all(|(a, b)| (a - phase * b).norm() < 1e-12), "{lab}");
                if let Some(p) = lab.spin_flip {
                    let xv = x.dot(&v);
                    assert!(xv.iter().zip(&v).all(|(a, b)| (a - p.sign() * b).norm() < 1e-12));
                }
            }
        }
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn block_spectra_reassemble_the_sector_spectrum() {
    for l in [4u32, 6, 8] {
        for cv in [CouplingVector::default(), CouplingVector::anisotropy_sweep(-1.4, 0.7)] {
            let sector = SymmetricBasis::build(l, SectorLabels::sector(0), DEFAULT_MAX_DIM).unwrap();
            let full = diagonalize(&build_hamiltonian(l, cv, &sector).unwrap(), None).unwrap();
            for flip in [false, true] {
                let mut blocks = Vec::new();
                for lab in block_labels(l, 0, flip) {
                    let b = SymmetricBasis::build(l, lab, DEFAULT_MAX_DIM).unwrap();
                    let h = build_hamiltonian(l, cv, &b).unwrap();
                    blocks.extend(diagonalize(&h, Some(lab)).unwrap().energies.iter().copied());
                }
                let blocks = sorted(blocks);
                assert_eq!(blocks.len(), full.dim());
                for (a, b) in blocks.iter().zip(full.energies.iter()) {
                    assert!((a - b).abs() < 1e-9, "L = {l}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn block_and_sector_routes_agree_on_dynamics_and_rates() {
    let times: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
    for l in [6u32, 8] {
        for (s, o) in pairs() {
            let base = QuenchProblem::new(l, CouplingVector::default(), s, o);
            let blocks = build_quench_data(&base, None).unwrap();
            let full = build_quench_data(&base.clone().with_route(Route::FullSector), None).unwrap();
            let a = expectation_timeseries(&blocks, &times).unwrap();
            let b = expectation_timeseries(&full, &times).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
            let (ga, gb) = (sigma_g_sq(&blocks).unwrap(), sigma_g_sq(&full).unwrap());
            assert!((ga - gb).abs() < 1e-9 * gb.abs());
            assert!((diagonal_ensemble_value(&blocks) - diagonal_ensemble_value(&full)).abs() < 1e-10);
        }
    }
}

/// Against `<psi| e^{-iHt} A e^{iHt} |psi>` on the full `2^L` space.
#[test]
fn dynamics_match_matrix_exponential() {
    let l = 6;
    let h = full_space_matrix(&Hamiltonian::new(l, CouplingVector::default()).unwrap());
    let times: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
    for (s, o) in pairs() {
        let a = full_space_matrix(&o.bind(l));
        let psi = full_state(l, &s);
        let q = quench(l, s, o);
        let series = expectation_timeseries(&q, &times).unwrap();
        for (&t, &got) in times.iter().zip(&series) {
            let u = expm(&h.mapv(|z| z * Complex64::new(0.0, t)));
            let pt = u.dot(&psi);
            let exact: Complex64 = pt.iter().zip(a.dot(&pt).iter()).map(|(x, y)| x.conj() * y).sum();
            assert!(exact.im.abs() < 1e-12);
            assert!((exact.re - got).abs() < 1e-8, "t = {t}: {got} vs {}", exact.re);
        }
    }
}

#[test]
fn energy_is_conserved() {
    let l = 8;
    let sector = Arc::new(SectorIndex::new(l, 0, DEFAULT_MAX_DIM).unwrap());
    let basis = SymmetricBasis::from_sector(sector.clone(), SectorLabels::sector(0)).unwrap();
    let h = build_hamiltonian(l, CouplingVector::default(), &basis).unwrap();
    let d = diagonalize(&h, None).unwrap();
    let psi = qrelax::model::sector_state(l, &InitialStateSpec::Neel, &sector).unwrap();
    let q = make_quench_data(&d, psi.view(), &h).unwrap();
    let e0 = q.mean_energy;
    let series = expectation_timeseries(&q, &[0.0, 0.7, 3.1, 25.0]).unwrap();
    for e in series {
        assert!((e - e0).abs() < 1e-10);
    }
}

/// `sigma_A^2 = -<A>''(0) / (<A(0)> - <A(inf)>)`, with a central difference.
#[test]
fn sigma_a_matches_curvature_of_the_series() {
    let h = 1e-3;
    for (s, o) in pairs() {
        let q = quench(8, s, o);
        let f = expectation_timeseries(&q, &[-h, 0.0, h]).unwrap();
        let curv = (f[0] - 2.0 * f[1] + f[2]) / (h * h);
        let fd = -curv / (q.initial_value() - diagonal_ensemble_value(&q));
        let exact = sigma_a_sq(&q).unwrap();
        assert!((fd - exact).abs() < 1e-5 * exact.abs(), "{fd} vs {exact}");
    }
}

#[test]
fn srednicki_gap_and_trace_forms_agree() {
    for l in [6u32, 8] {
        for (s, o) in pairs() {
            let q = quench(l, s, o);
            let a = sigma_g_sq(&q).unwrap();
            let b = sigma_g_sq_trace(&q).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
        }
    }
}

#[test]
fn thermal_state_reproduces_the_quench_energy() {
    for (s, o) in pairs() {
        let q = quench(8, s, o);
        let ctx = KuboContext::thermal(&q, DEFAULT_KUBO_THRESHOLD).unwrap();
        let e: Vec<f64> = ctx.restricted.iter().map(|&j| q.energies[j]).collect();
        let w = thermal_weights(&e, ctx.beta);
        let mean: f64 = w.iter().zip(&e).map(|(w, e)| w * e).sum();
        assert!((mean - q.mean_energy).abs() < 1e-9 * q.spectral_width());
    }
}

fn simpson(f: &[f64], dt: f64) -> f64 {
    assert!(f.len() % 2 == 1);
    let n = f.len() - 1;
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    s * dt / 3.0
}

/// Closed-form finite-horizon averages against Simpson quadrature.
#[test]
fn fluctuation_averages_match_quadrature() {
    let horizon = 10.0;
    let dt = 5e-4;
    let times: Vec<f64> = (0..=20000).map(|i| i as f64 * dt).collect();
    for (s, o) in pairs() {
        let q = quench(6, s, o);
        let tol = 1e-9 * q.spectral_width().max(1.0);
        let mut a_inf = ZERO;
        for j in 0..q.dim() {
            for k in 0..q.dim() {
                if (q.energies[j] - q.energies[k]).abs() <= tol {
                    a_inf += q.coeffs[j].conj() * q.coeffs[k] * q.obs[[j, k]];
                }
            }
        }
        let a = expectation_timeseries(&q, &times).unwrap();
        let dev: Vec<f64> = a.iter().map(|x| (x - a_inf.re).powi(2)).collect();
        let quad = simpson(&dev, dt) / horizon;
        let closed = expectation_fluctuation(&q, Some(horizon));
        assert!((quad - closed).abs() < 1e-9, "{quad} vs {closed}");

        let g = srednicki_gaps(&q).unwrap();
        let c_inf: f64 = g
            .omegas
            .iter()
            .zip(&g.weights)
            .filter(|(om, _)| om.abs() <= tol)
            .map(|(_, p)| p)
            .sum();
        let ct = srednicki_correlation(&q, &times).unwrap();
        let dev: Vec<f64> = ct.iter().map(|x| (x - c_inf).powi(2)).collect();
        let quad = simpson(&dev, dt) / horizon;
        let closed = time_averaged_fluctuation(&q, Some(horizon)).unwrap();
        assert!((quad - closed).abs() < 1e-9, "{quad} vs {closed}");
    }
}

#[test]
fn long_time_average_approaches_diagonal_ensemble() {
    let q = quench(6, InitialStateSpec::Neel, ObservableSpec::a1());
    let n = 100_000;
    let times: Vec<f64> = (0..n).map(|i| 1e4 * i as f64 / n as f64).collect();
    let mean = expectation_timeseries(&q, &times).unwrap().iter().sum::<f64>() / n as f64;
    assert!((mean - diagonal_ensemble_value(&q)).abs() < 2e-3);
}

#[test]
fn haar_matrix_element_moments() {
    let d = 8;
    let n = 20_000;
    let (m2, m4): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let u = sample_haar_unitary(d, &mut sample_rng(11, i)).unwrap();
            let p = u[[0, 0]].norm_sqr();
            (p, p * p)
        })
        .unzip();
    let s2 = Summary::of(&m2);
    let s4 = Summary::of(&m4);
    assert!(s2.z_score(1.0 / d as f64).abs() < 4.0, "{s2:?}");
    assert!(s4.z_score(2.0 / (d * (d + 1)) as f64).abs() < 4.0, "{s4:?}");
}
