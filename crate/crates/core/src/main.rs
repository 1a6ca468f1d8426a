use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qrelax::harness::commands::{run, Command};
use qrelax::harness::{HarnessError, RunConfig, CACHE_ENV};
use qrelax::spectral::SpectralCache;

#[derive(Parser, Debug)]
#[command(name = "qrelax", version, about = "Early-time relaxation rates of a frustrated Heisenberg chain")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Spectral cache directory.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Largest sector dimension that may be built.
    #[arg(long, global = true)]
    max_dim: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Time series, early-time fits and rates for one quench.
    Quench,
    /// Rates over a (J1, Delta) grid.
    Sweep,
    /// Rate ratios and effective dimensions for the three pairs.
    Ratios,
    /// Haar ensemble averages against closed forms.
    Rmt,
    /// Effective dimensions and infinite-time fluctuations.
    Effdim,
    /// Speed limits on both correlation functions.
    CheckBounds,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Quench => Command::Quench,
            Cmd::Sweep => Command::Sweep,
            Cmd::Ratios => Command::Ratios,
            Cmd::Rmt => Command::Rmt,
            Cmd::Effdim => Command::Effdim,
            Cmd::CheckBounds => Command::CheckBounds,
        }
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(m) = cli.max_dim {
        cfg.max_dim = m;
    }
    if let Some(c) = &cli.cache {
        cfg.cache_dir = Some(c.clone());
    } else if let Some(c) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        cfg.cache_dir = Some(PathBuf::from(c));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<(), HarnessError> {
    let cfg = configure(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Numerical(format!("thread pool: {e}")))?;
    }
    let cache = match &cfg.cache_dir {
        Some(d) => Some(SpectralCache::new(d)?),
        None => None,
    };
    let command = Command::from(cli.command);
    eprintln!("qrelax {}: L = {}, seed = {}", command.name(), cfg.length, cfg.seed);
    let paths = run(command, &cfg, cache.as_ref(), &cfg.output_dir)?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
