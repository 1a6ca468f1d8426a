//! The six subcommands. Each `cmd_*` returns plain data; [`run`] turns it
//! into tables and writes them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::fitdim::{effective_dimensions, fit_early_decay, FitModel, FitResult};
use crate::lattice::{SectorIndex, SectorLabels, SymmetricBasis};
use crate::model::{build_hamiltonian, InitialStateSpec, ObservableSpec};
use crate::rmt::{annealed_check, gaussian_spectrum, haar_ensemble, traceless_probe, Summary};
use crate::spectral::{
    build_quench_data, diagonalize, expectation_timeseries, QuenchData, SpectralCache,
};
use crate::timescales::{
    expectation_fluctuation, kubo_correlation, rate_report, speed_limit_checks,
    srednicki_correlation, KuboContext, RateReport,
};

use super::config::{RunConfig, SpectrumKind};
use super::output::{num, opt, Header, Table};
use super::HarnessError;

/// Allowed excess of `max |dC/dt| / sigma` over 1.
pub const SPEED_LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Quench,
    Sweep,
    Ratios,
    Rmt,
    Effdim,
    CheckBounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Quench => "quench",
            Command::Sweep => "sweep",
            Command::Ratios => "ratios",
            Command::Rmt => "rmt",
            Command::Effdim => "effdim",
            Command::CheckBounds => "check-bounds",
        }
    }
}

/// One of the three standard state/observable pairs.
#[derive(Debug, Clone)]
pub struct PairSpec {
    pub label: &'static str,
    pub state: InitialStateSpec,
    pub observable: ObservableSpec,
}

/// `A1/psi`, `A2/phi` and `A2/psi'`, with `A1` on `site`.
pub fn standard_pairs(site: u32) -> Vec<PairSpec> {
    vec![
        PairSpec {
            label: "A1/psi",
            state: InitialStateSpec::Neel,
            observable: ObservableSpec::A1Site { site },
        },
        PairSpec {
            label: "A2/phi",
            state: InitialStateSpec::DomainWallTi,
            observable: ObservableSpec::A2NnZz,
        },
        PairSpec {
            label: "A2/psi'",
            state: InitialStateSpec::NeelCat,
            observable: ObservableSpec::A2NnZz,
        },
    ]
}

fn pair_data(
    cfg: &RunConfig,
    length: u32,
    pair: &PairSpec,
    cache: Option<&SpectralCache>,
) -> Result<QuenchData, HarnessError> {
    let p = cfg.problem(length, cfg.couplings, pair.state.clone(), pair.observable.clone());
    Ok(build_quench_data(&p, cache)?)
}

#[derive(Debug, Clone)]
pub struct QuenchOutput {
    pub times: Vec<f64>,
    pub a_t: Vec<f64>,
    pub c_t: Vec<f64>,
    pub c_kubo: Vec<f64>,
    pub fits: Vec<FitResult>,
    pub report: RateReport,
}

pub fn cmd_quench(cfg: &RunConfig, cache: Option<&SpectralCache>) -> Result<QuenchOutput, HarnessError> {
    cfg.validate()?;
    let q = build_quench_data(&cfg.main_problem(), cache)?;
    let report = rate_report(&q, cfg.kubo_threshold)?;
    let times = cfg.time.times();
    let a_t = expectation_timeseries(&q, &times)?;
    let c_t = srednicki_correlation(&q, &times)?;
    let ctx = KuboContext::thermal(&q, cfg.kubo_threshold)?;
    let c_kubo = kubo_correlation(&q, &ctx, &times);
    let fits = [FitModel::Gaussian, FitModel::Quadratic]
        .into_iter()
        .map(|m| fit_early_decay(&a_t, cfg.time.dt, cfg.fit.tau_fit, m, report.a_infinity, &cfg.fit.taus))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuenchOutput {
        times,
        a_t,
        c_t,
        c_kubo,
        fits,
        report,
    })
}

impl QuenchOutput {
    pub fn tables(&self, tau_fit: f64) -> Vec<Table> {
        let mut ts = Table::new("timeseries", &["t", "a_t", "c_t", "c_kubo"]);
        for i in 0..self.times.len() {
            ts.push(vec![
                num(self.times[i]),
                num(self.a_t[i]),
                num(self.c_t[i]),
                num(self.c_kubo[i]),
            ]);
        }
        let mut fits = Table::new(
            "fits",
            &["model", "tau_fit", "rate_sq", "amplitude", "offset", "tau", "dbar"],
        );
        for f in &self.fits {
            for &(tau, d) in &f.dbar {
                fits.push(vec![
                    f.model.name().to_string(),
                    num(tau_fit),
                    num(f.rate_sq),
                    num(f.amplitude),
                    num(f.offset),
                    num(tau),
                    num(d),
                ]);
            }
        }
        vec![ts, fits, report_table(&self.report)]
    }
}

fn report_table(r: &RateReport) -> Table {
    let mut t = Table::new(
        "rates",
        &[
            "sigma_a_sq",
            "sigma_g_sq",
            "sigma_k_sq",
            "beta",
            "a_initial",
            "a_infinity",
            "eff_dim_inv",
            "state_obs_eff_dim_inv",
            "mean_energy",
            "energy_variance",
            "gap_degeneracies",
        ],
    );
    t.push(vec![
        num(r.sigma_a_sq),
        num(r.sigma_g_sq),
        num(r.sigma_k_sq),
        num(r.beta),
        num(r.a_initial),
        num(r.a_infinity),
        num(r.eff_dim_inv),
        num(r.state_obs_eff_dim_inv),
        num(r.mean_energy),
        num(r.energy_variance),
        r.gap_degeneracies.to_string(),
    ]);
    t
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub j1: f64,
    pub delta: f64,
    pub rates: Result<(f64, f64, f64), String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// `max sigma_A^2 - min sigma_A^2` over the successful points.
    pub spread: Option<f64>,
    pub cut_j1: f64,
    /// `(Delta, sigma_A^2 / spread)` at `cut_j1`.
    pub cut: Vec<(f64, Option<f64>)>,
}

pub fn cmd_sweep(cfg: &RunConfig, cache: Option<&SpectralCache>) -> Result<SweepOutput, HarnessError> {
    cfg.validate()?;
    let g = &cfg.sweep;
    let j1s = g.j1_values();
    let deltas = g.delta_values();
    let points: Vec<(f64, f64)> = j1s
        .iter()
        .flat_map(|&j| deltas.iter().map(move |&d| (j, d)))
        .collect();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(j1, delta)| {
            let p = cfg.problem(cfg.length, g.couplings(j1, delta), cfg.state.spec(), cfg.observable_spec());
            let rates = build_quench_data(&p, cache)
                .map_err(|e| HarnessError::from(e).to_string())
                .and_then(|q| rate_report(&q, cfg.kubo_threshold).map_err(|e| e.to_string()))
                .map(|r| (r.sigma_a_sq, r.sigma_g_sq, r.sigma_k_sq));
            SweepRow { j1, delta, rates }
        })
        .collect();
    let ok: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.rates.as_ref().ok().map(|x| x.0))
        .filter(|x| x.is_finite())
        .collect();
    let spread = if ok.is_empty() {
        None
    } else {
        let max = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ok.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max - min)
    };
    let cut_j1 = j1s
        .iter()
        .copied()
        .min_by(|a, b| (a - g.cut_j1).abs().total_cmp(&(b - g.cut_j1).abs()))
        .unwrap_or(g.cut_j1);
    let cut = rows
        .iter()
        .filter(|r| r.j1 == cut_j1)
        .map(|r| {
            let v = match (&r.rates, spread) {
                (Ok(x), Some(s)) if s > 0.0 => Some(x.0 / s),
                _ => None,
            };
            (r.delta, v)
        })
        .collect();
    Ok(SweepOutput {
        rows,
        spread,
        cut_j1,
        cut,
    })
}

impl SweepOutput {
    pub fn tables(&self) -> Vec<Table> {
        let mut grid = Table::new(
            "sweep",
            &["j1", "delta", "sigma_a_sq", "sigma_g_sq", "sigma_k_sq", "error"],
        );
        for r in &self.rows {
            let (a, g, k, e) = match &r.rates {
                Ok((a, g, k)) => (num(*a), num(*g), num(*k), String::new()),
                Err(e) => (String::new(), String::new(), String::new(), e.clone()),
            };
            grid.push(vec![num(r.j1), num(r.delta), a, g, k, e]);
        }
        let failed = self.rows.iter().filter(|r| r.rates.is_err()).count();
        let mut summary = Table::new("sweep_summary", &["delta_sigma_a_sq", "points", "failed"]);
        summary.push(vec![opt(self.spread), self.rows.len().to_string(), failed.to_string()]);
        let mut cut = Table::new("sweep_cut", &["j1", "delta", "sigma_a_sq_normalized"]);
        for &(d, v) in &self.cut {
            cut.push(vec![num(self.cut_j1), num(d), opt(v)]);
        }
        vec![grid, summary, cut]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub length: u32,
    pub pair: &'static str,
    pub g_over_a: f64,
    pub g_over_k: f64,
    pub d_phi_inv: f64,
    pub d_phi_a_inv: f64,
}

fn length_pair_points(cfg: &RunConfig, lengths: &[u32]) -> Vec<(u32, PairSpec)> {
    lengths
        .iter()
        .flat_map(|&l| standard_pairs(cfg.site).into_iter().map(move |p| (l, p)))
        .collect()
}

fn check_site(cfg: &RunConfig, lengths: &[u32], field: &str) -> Result<(), HarnessError> {
    match lengths.iter().find(|&&l| cfg.site >= l) {
        Some(l) => Err(HarnessError::Config {
            field: field.to_string(),
            message: format!("site {} does not exist at length {l}", cfg.site),
        }),
        None => Ok(()),
    }
}

pub fn cmd_ratios(cfg: &RunConfig, cache: Option<&SpectralCache>) -> Result<Vec<RatioRow>, HarnessError> {
    cfg.validate()?;
    check_site(cfg, &cfg.ratios.lengths, "ratios.lengths")?;
    length_pair_points(cfg, &cfg.ratios.lengths)
        .par_iter()
        .map(|(l, pair)| {
            let q = pair_data(cfg, *l, pair, cache)?;
            let r = rate_report(&q, cfg.kubo_threshold)?;
            Ok(RatioRow {
                length: *l,
                pair: pair.label,
                g_over_a: r.sigma_g_sq / r.sigma_a_sq,
                g_over_k: r.sigma_g_sq / r.sigma_k_sq,
                d_phi_inv: r.eff_dim_inv,
                d_phi_a_inv: r.state_obs_eff_dim_inv,
            })
        })
        .collect()
}

fn ratio_table(rows: &[RatioRow]) -> Table {
    let mut t = Table::new(
        "ratios",
        &["length", "pair", "g_over_a", "g_over_k", "d_phi_inv", "d_phi_a_inv"],
    );
    for r in rows {
        t.push(vec![
            r.length.to_string(),
            r.pair.to_string(),
            num(r.g_over_a),
            num(r.g_over_k),
            num(r.d_phi_inv),
            num(r.d_phi_a_inv),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffdimRow {
    pub length: u32,
    pub pair: &'static str,
    pub d_phi_inv: f64,
    pub d_phi_a_inv: f64,
    /// Infinite-time average of `|<A(t)> - <A(inf)>|^2`.
    pub fluctuation: f64,
    pub gap_degeneracies: usize,
}

pub fn cmd_effdim(cfg: &RunConfig, cache: Option<&SpectralCache>) -> Result<Vec<EffdimRow>, HarnessError> {
    cfg.validate()?;
    check_site(cfg, &cfg.ratios.lengths, "ratios.lengths")?;
    length_pair_points(cfg, &cfg.ratios.lengths)
        .par_iter()
        .map(|(l, pair)| {
            let q = pair_data(cfg, *l, pair, cache)?;
            let d = effective_dimensions(&q);
            Ok(EffdimRow {
                length: *l,
                pair: pair.label,
                d_phi_inv: d.d_phi_inv,
                d_phi_a_inv: d.d_phi_a_inv,
                fluctuation: expectation_fluctuation(&q, None),
                gap_degeneracies: crate::spectral::gap_degeneracy_count(&q),
            })
        })
        .collect()
}

fn effdim_table(rows: &[EffdimRow]) -> Table {
    let mut t = Table::new(
        "effdim",
        &["length", "pair", "d_phi_inv", "d_phi_a_inv", "fluctuation", "gap_degeneracies"],
    );
    for r in rows {
        t.push(vec![
            r.length.to_string(),
            r.pair.to_string(),
            num(r.d_phi_inv),
            num(r.d_phi_a_inv),
            num(r.fluctuation),
            r.gap_degeneracies.to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub length: u32,
    pub pair: &'static str,
    /// `max_t |dC/dt| / sigma_G`
    pub srednicki: f64,
    /// `max_t |dC_Kubo/dt| / sigma_K`
    pub kubo: f64,
}

impl BoundsRow {
    pub fn holds(&self) -> bool {
        self.srednicki <= 1.0 + SPEED_LIMIT_SLACK && self.kubo <= 1.0 + SPEED_LIMIT_SLACK
    }
}

pub fn cmd_check_bounds(cfg: &RunConfig, cache: Option<&SpectralCache>) -> Result<Vec<BoundsRow>, HarnessError> {
    cfg.validate()?;
    check_site(cfg, &cfg.bounds.lengths, "bounds.lengths")?;
    let n = (cfg.bounds.t_max / cfg.bounds.dt + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * cfg.bounds.dt).collect();
    length_pair_points(cfg, &cfg.bounds.lengths)
        .iter()
        .map(|(l, pair)| {
            let q = pair_data(cfg, *l, pair, cache)?;
            let ctx = KuboContext::thermal(&q, cfg.kubo_threshold)?;
            let s = speed_limit_checks(&q, &ctx, &times)?;
            Ok(BoundsRow {
                length: *l,
                pair: pair.label,
                srednicki: s.srednicki,
                kubo: s.kubo,
            })
        })
        .collect()
}

fn bounds_table(rows: &[BoundsRow]) -> Table {
    let mut t = Table::new(
        "bounds",
        &["length", "pair", "srednicki_ratio", "kubo_ratio", "holds"],
    );
    for r in rows {
        t.push(vec![
            r.length.to_string(),
            r.pair.to_string(),
            num(r.srednicki),
            num(r.kubo),
            r.holds().to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmtRow {
    pub quantity: &'static str,
    pub mc: Option<Summary>,
    pub closed_form: Option<f64>,
}

impl RmtRow {
    pub fn z(&self) -> Option<f64> {
        match (self.mc, self.closed_form) {
            (Some(s), Some(c)) => Some(s.z_score(c)),
            _ => None,
        }
    }
}

fn rmt_spectrum(cfg: &RunConfig) -> Result<Vec<f64>, HarnessError> {
    match cfg.rmt.spectrum {
        SpectrumKind::Gaussian => Ok(gaussian_spectrum(cfg.rmt.dim, cfg.seed)),
        SpectrumKind::Heisenberg => {
            let l = cfg.rmt.spectrum_length;
            let sector = Arc::new(SectorIndex::new(l, 0, cfg.max_dim)?);
            let basis = SymmetricBasis::from_sector(sector, SectorLabels::sector(0))?;
            let h = build_hamiltonian(l, cfg.couplings, &basis)?;
            Ok(diagonalize(&h, None)?.energies.to_vec())
        }
    }
}

pub fn cmd_rmt(cfg: &RunConfig) -> Result<Vec<RmtRow>, HarnessError> {
    cfg.validate()?;
    let e = rmt_spectrum(cfg)?;
    let (a, phi) = traceless_probe(e.len());
    let s = haar_ensemble(&e, &a, &phi, cfg.rmt.samples, cfg.seed)?;
    let ann = annealed_check(&e, &a, &phi, cfg.rmt.samples, cfg.seed)?;
    let c = s.closed;
    let row = |quantity, mc, closed_form| RmtRow {
        quantity,
        mc,
        closed_form,
    };
    Ok(vec![
        row("sigma_g_num", Some(s.sigma_g_num), Some(c.sigma_g_num)),
        row("sigma_g_den", Some(s.sigma_g_den), Some(c.sigma_g_den)),
        row("sigma_a_sq", Some(s.sigma_a_sq), c.sigma_a_sq),
        row("sigma_g_sq", Some(s.sigma_g_sq), Some(c.sigma_g_sq_annealed)),
        row("sigma_k_sq", Some(s.sigma_k_sq), Some(c.sigma_k_sq)),
        row("universal", None, Some(c.universal)),
        row(
            "annealed",
            Some(Summary {
                mean: ann.mean_of_ratio,
                std: f64::NAN,
                stderr: f64::NAN,
            }),
            Some(ann.ratio_of_means),
        ),
    ])
}

fn rmt_table(rows: &[RmtRow]) -> Table {
    let mut t = Table::new(
        "rmt",
        &["quantity", "mc_mean", "mc_stderr", "closed_form", "z"],
    );
    for r in rows {
        let z = if r.quantity == "annealed" { None } else { r.z() };
        t.push(vec![
            r.quantity.to_string(),
            opt(r.mc.map(|s| s.mean)),
            opt(r.mc.map(|s| s.stderr).filter(|x| x.is_finite())),
            opt(r.closed_form),
            opt(z),
        ]);
    }
    t
}

/// Runs `command`, writes its tables to `out` and returns their paths.
pub fn run(
    command: Command,
    cfg: &RunConfig,
    cache: Option<&SpectralCache>,
    out: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let tables = match command {
        Command::Quench => cmd_quench(cfg, cache)?.tables(cfg.fit.tau_fit),
        Command::Sweep => cmd_sweep(cfg, cache)?.tables(),
        Command::Ratios => vec![ratio_table(&cmd_ratios(cfg, cache)?)],
        Command::Effdim => vec![effdim_table(&cmd_effdim(cfg, cache)?)],
        Command::CheckBounds => vec![bounds_table(&cmd_check_bounds(cfg, cache)?)],
        Command::Rmt => vec![rmt_table(&cmd_rmt(cfg)?)],
    };
    let header = Header {
        command: command.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };
    tables.iter().map(|t| t.write(out, &header)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.length = 6;
        c.time.t_max = 1.0;
        c.fit.taus = vec![0.3, 1.0];
        c.ratios.lengths = vec![6];
        c.bounds.lengths = vec![6];
        c.bounds.t_max = 2.0;
        c.rmt.samples = 50;
        c.rmt.dim = 8;
        c
    }

    #[test]
    fn quench_tables_have_expected_shape() {
        let cfg = small();
        let out = cmd_quench(&cfg, None).unwrap();
        let t = out.tables(cfg.fit.tau_fit);
        assert_eq!(t[0].rows.len(), 101);
        assert_eq!(t[1].rows.len(), 4);
        assert_eq!(t[2].rows.len(), 1);
        assert!((out.c_t[0] - 1.0).abs() < 1e-12);
        assert!((out.c_kubo[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_cardinality_and_cut() {
        let mut cfg = small();
        cfg.sweep.j1_min = -2.0;
        cfg.sweep.j1_max = -1.0;
        cfg.sweep.j1_step = 1.0;
        cfg.sweep.delta_min = 0.1;
        cfg.sweep.delta_max = 1.1;
        cfg.sweep.delta_step = 1.0;
        let s = cmd_sweep(&cfg, None).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.cut_j1, -2.0);
        assert_eq!(s.cut.len(), 2);
        assert!(s.spread.unwrap() > 0.0);
    }

    #[test]
    fn per_length_commands() {
        let cfg = small();
        assert_eq!(cmd_ratios(&cfg, None).unwrap().len(), 3);
        assert_eq!(cmd_effdim(&cfg, None).unwrap().len(), 3);
        let b = cmd_check_bounds(&cfg, None).unwrap();
        assert!(b.iter().all(BoundsRow::holds));
        let r = cmd_rmt(&cfg).unwrap();
        assert_eq!(r.len(), 7);
    }

    #[test]
    fn site_beyond_length_is_config_error() {
        let mut cfg = small();
        cfg.site = 5;
        cfg.ratios.lengths = vec![4, 6];
        assert!(matches!(
            cmd_ratios(&cfg, None),
            Err(HarnessError::Config { .. })
        ));
    }
}
