//! `nvpol`: simulate the NV nuclear-polarization protocol, synthesize its
//! readout, fit pump rates and write plot-ready CSV.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Physics(String),
    Convergence(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Convergence(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Physics(m) => write!(f, "domain error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nvpol", version, about = "Optical-pumping nuclear polarization of a single NV center")]
#[command(after_help = config::keys_help())]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file with `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for all synthetic noise [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Electron repolarization rate k_S (1/µs)
    #[arg(long, global = true)]
    pub k_s: Option<f64>,
    /// Nuclear depolarization rate k_I (1/µs)
    #[arg(long, global = true)]
    pub k_i: Option<f64>,
    /// Laser onset delay τ_d (µs)
    #[arg(long, global = true)]
    pub tau_d: Option<f64>,
    /// Nuclear flip model: all | nn
    #[arg(long, global = true)]
    pub flip_model: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the initialization sequence and write the per-pulse population trace
    Simulate {
        /// Second laser pulse length (µs) [default: optimal]
        #[arg(long)]
        tau_l: Option<f64>,
        /// Append the MW3/MW4 purification pulses
        #[arg(long)]
        purify: bool,
        /// Pulse sequence file instead of the built-in sequence
        #[arg(long, value_name = "FILE")]
        sequence: Option<PathBuf>,
    },
    /// Tabulate A_k, P(−1,0) and P(0,0) over a grid of second-pulse lengths
    Scan {
        /// Shortest pulse (µs)
        #[arg(long, default_value_t = 0.005)]
        tau_min: f64,
        /// Longest pulse (µs)
        #[arg(long, default_value_t = 4.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Linear instead of logarithmic spacing
        #[arg(long)]
        linear: bool,
        /// Gaussian σ added to observations.csv
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit k_S, k_I (and optionally τ_d) to an observation CSV
    Fit {
        /// CSV with header tau_us,A_m1,A_p1,A_0[,P_m1_0][,sigma]
        data: PathBuf,
        /// Flip model to fit: all | nn
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        fit_tau_d: bool,
        /// Rescale data so the nine populations sum to one
        #[arg(long)]
        normalize: bool,
        /// Fit both flip models and compare them
        #[arg(long)]
        compare_models: bool,
    },
    /// Synthesize a Ramsey trace, its spectrum and the extracted line amplitudes
    Spectrum {
        /// Second laser pulse length (µs) [default: optimal]
        #[arg(long)]
        tau_l: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Synthesize an RF Rabi trace and extract P(−1,0)
    Rabi {
        /// Second laser pulse length (µs) [default: optimal]
        #[arg(long)]
        tau_l: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Second-pulse length that maximizes P(0,0)
    Optimize,
    /// Pulse-angle and initial-state sensitivity of P(0,0)
    Sensitivity {
        /// Angle errors to evaluate (rad)
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.025, 0.05])]
        dtheta: Vec<f64>,
        /// Simplex grid subdivisions for the initial-state model
        #[arg(long, default_value_t = 20)]
        grid: usize,
    },
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn resolve(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &common.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(v) = common.k_s {
        cfg.rates.k_s = v;
    }
    if let Some(v) = common.k_i {
        cfg.rates.k_i = v;
    }
    if let Some(v) = common.tau_d {
        cfg.rates.tau_d = v;
    }
    if let Some(m) = &common.flip_model {
        cfg.rates.flip_model = config::parse_flip_model(m)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve(&cli.common)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    match cli.command {
        Command::Simulate { tau_l, purify, sequence } => {
            if sequence.is_some() {
                cfg.sequence = sequence;
            }
            commands::simulate(&cfg, tau_l.or(cfg.tau_l), purify)
        }
        Command::Scan { tau_min, tau_max, points, linear, noise } => {
            commands::scan(&cfg, tau_min, tau_max, points, !linear, noise.unwrap_or(cfg.noise))
        }
        Command::Fit { data, model, fit_tau_d, normalize, compare_models } => {
            if let Some(m) = model {
                cfg.rates.flip_model = config::parse_flip_model(&m)?;
            }
            commands::fit(&cfg, &data, fit_tau_d, normalize, compare_models)
        }
        Command::Spectrum { tau_l, noise } => {
            commands::spectrum(&cfg, tau_l.or(cfg.tau_l), noise.unwrap_or(cfg.noise))
        }
        Command::Rabi { tau_l, noise } => commands::rabi(&cfg, tau_l.or(cfg.tau_l), noise.unwrap_or(cfg.noise)),
        Command::Optimize => commands::optimize(&cfg),
        Command::Sensitivity { dtheta, grid } => commands::sensitivity(&cfg, &dtheta, grid),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nvpol: {e}");
            ExitCode::from(e.code())
        }
    }
}
