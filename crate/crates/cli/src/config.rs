//! `key = value` run configuration.

use std::path::{Path, PathBuf};

use nvpol::kinetics::{FlipModel, OnsetConvention, PumpRates};
use nvpol::readout::{RamseyConfig, SpectrumOptions, Window};
use nvpol::spin::SpinSystemParams;

use crate::CliError;

/// Accepted keys with their units, shown in `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("d", "zero-field splitting D (MHz)"),
    ("a_hf", "hyperfine coupling A (MHz)"),
    ("p_quad", "quadrupole splitting P (MHz)"),
    ("gamma_e", "electron gyromagnetic ratio (MHz/mT)"),
    ("gamma_n", "nuclear gyromagnetic ratio (MHz/mT)"),
    ("b", "static field B (mT)"),
    ("k_s", "electron repolarization rate (1/µs)"),
    ("k_i", "nuclear depolarization rate (1/µs)"),
    ("tau_d", "laser onset delay (µs)"),
    ("flip_model", "all | nn"),
    ("onset", "delay | advance"),
    ("start", "simulated | ideal (skip the first laser pulse)"),
    ("sequence", "pulse sequence file"),
    ("tau_l", "second laser pulse length (µs)"),
    ("nu_det", "Ramsey detuning (MHz)"),
    ("phi_c", "Ramsey phase offset (rad)"),
    ("t2_star", "dephasing time T2* (µs)"),
    ("t_max", "longest Ramsey free evolution (µs)"),
    ("dt", "Ramsey sampling step (µs)"),
    ("reference_mhz", "MW reference frequency (MHz)"),
    ("window", "none | hann"),
    ("zero_pad", "zero-padding factor"),
    ("omega1", "RF Rabi angular frequency (rad/µs)"),
    ("rabi_t_max", "Rabi trace length (µs)"),
    ("rabi_dt", "Rabi sampling step (µs)"),
    ("noise", "Gaussian noise σ added to synthetic data"),
    ("seed", "random seed"),
    ("out_dir", "output directory"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spin: SpinSystemParams,
    pub rates: PumpRates,
    pub ideal_start: bool,
    pub sequence: Option<PathBuf>,
    pub tau_l: Option<f64>,
    pub ramsey: RamseyConfig,
    pub spectrum: SpectrumOptions,
    pub omega1: f64,
    pub rabi_t_max: f64,
    pub rabi_dt: f64,
    pub noise: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spin: SpinSystemParams::default(),
            rates: PumpRates::default(),
            ideal_start: false,
            sequence: None,
            tau_l: None,
            ramsey: RamseyConfig::default(),
            spectrum: SpectrumOptions::default(),
            omega1: 2.0 * std::f64::consts::PI * 0.05,
            rabi_t_max: 100.0,
            rabi_dt: 0.5,
            noise: 0.0,
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

fn num(key: &str, v: &str) -> Result<f64, CliError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Usage(format!("{key}: '{v}' is not a number")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "d" => self.spin.d = num(key, v)?,
            "a_hf" => self.spin.a_hf = num(key, v)?,
            "p_quad" => self.spin.p_quad = num(key, v)?,
            "gamma_e" => self.spin.gamma_e = num(key, v)?,
            "gamma_n" => self.spin.gamma_n = num(key, v)?,
            "b" => self.spin.b = num(key, v)?,
            "k_s" => self.rates.k_s = num(key, v)?,
            "k_i" => self.rates.k_i = num(key, v)?,
            "tau_d" => self.rates.tau_d = num(key, v)?,
            "flip_model" => self.rates.flip_model = parse_flip_model(v)?,
            "onset" => {
                self.rates.onset = match v.to_ascii_lowercase().as_str() {
                    "delay" => OnsetConvention::Delay,
                    "advance" => OnsetConvention::Advance,
                    _ => return Err(CliError::Usage(format!("onset: expected delay|advance, got '{v}'"))),
                }
            }
            "start" => {
                self.ideal_start = match v.to_ascii_lowercase().as_str() {
                    "simulated" => false,
                    "ideal" => true,
                    _ => return Err(CliError::Usage(format!("start: expected simulated|ideal, got '{v}'"))),
                }
            }
            "sequence" => self.sequence = Some(PathBuf::from(v)),
            "tau_l" => self.tau_l = Some(num(key, v)?),
            "nu_det" => self.ramsey.nu_det = num(key, v)?,
            "phi_c" => self.ramsey.phi_c = num(key, v)?,
            "t2_star" => self.ramsey.t2_star = num(key, v)?,
            "t_max" => self.ramsey.t_max = num(key, v)?,
            "dt" => self.ramsey.dt = num(key, v)?,
            "reference_mhz" => self.ramsey.reference_mhz = Some(num(key, v)?),
            "window" => {
                self.spectrum.window = match v.to_ascii_lowercase().as_str() {
                    "none" => Window::None,
                    "hann" => Window::Hann,
                    _ => return Err(CliError::Usage(format!("window: expected none|hann, got '{v}'"))),
                }
            }
            "zero_pad" => {
                self.spectrum.zero_pad_factor = v
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| CliError::Usage(format!("zero_pad: '{v}' is not a positive integer")))?
            }
            "omega1" => self.omega1 = num(key, v)?,
            "rabi_t_max" => self.rabi_t_max = num(key, v)?,
            "rabi_dt" => self.rabi_dt = num(key, v)?,
            "noise" => {
                let n = num(key, v)?;
                if n < 0.0 {
                    return Err(CliError::Usage("noise must be >= 0".into()));
                }
                self.noise = n;
            }
            "seed" => {
                self.seed = v.parse().map_err(|_| CliError::Usage(format!("seed: '{v}' is not an integer")))?
            }
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(CliError::Usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected 'key = value'", n + 1)))?;
            self.set(k, v).map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }
}

pub fn parse_flip_model(v: &str) -> Result<FlipModel, CliError> {
    match v.to_ascii_lowercase().as_str() {
        "all" | "all-pairs" => Ok(FlipModel::AllPairs),
        "nn" | "nearest-neighbor" => Ok(FlipModel::NearestNeighbor),
        _ => Err(CliError::Usage(format!("flip model: expected all|nn, got '{v}'"))),
    }
}

pub fn keys_help() -> String {
    let mut s = String::from("Config file: one `key = value` per line, `#` comments. Precedence: defaults < --config < --set < dedicated flags.\nKeys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<14} {d}\n"));
    }
    s.push_str("\nExit codes: 0 ok, 2 usage/config, 3 physics/domain, 4 fit convergence.");
    s
}
