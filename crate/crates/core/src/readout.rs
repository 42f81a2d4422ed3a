//! Partial state tomography: synthetic Ramsey free-induction decays and
//! nuclear Rabi oscillations, their spectra, and the extraction of line
//! amplitudes and populations.
//!
//! A Ramsey line for nuclear projection k has amplitude A_k = P(0,k) − P(−1,k)
//! (hard π/2 pulses drive all three m_S = 0 → −1 lines equally). The phase
//! advance of the second π/2 pulse is folded into an effective line frequency
//! δν_k + ν_det. Fluorescence is a linear readout of populations.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::PopulationVector;
use crate::spin::{esr_line, SpinSystemParams};

/// P(−1,−1) above this biases the Rabi readout formula.
pub const RABI_BIAS_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("non-uniform sampling at sample {0}")]
    NonUniform(usize),
    #[error("lines at {a} and {b} MHz are not separated by more than 2 bins ({bin} MHz)")]
    Unresolved { a: f64, b: f64, bin: f64 },
    #[error("line at {0} MHz lies outside the spectrum")]
    OutOfRange(f64),
    #[error("signal spans {periods:.2} Rabi periods; at least 2 are needed")]
    InsufficientData { periods: f64 },
    #[error("invalid readout configuration: {0}")]
    InvalidConfig(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Window {
    None,
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyConfig {
    /// Detuning of the second π/2 pulse phase advance (MHz).
    pub nu_det: f64,
    /// Constant phase offset (rad).
    pub phi_c: f64,
    /// Dephasing time (µs).
    pub t2_star: f64,
    /// Longest free evolution time (µs).
    pub t_max: f64,
    /// Sampling step (µs).
    pub dt: f64,
    /// MW reference frequency (MHz); `None` uses the m_I = 0 line.
    pub reference_mhz: Option<f64>,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        RamseyConfig {
            nu_det: 5.0,
            phi_c: 0.0,
            t2_star: 40.0,
            t_max: 4.0,
            dt: 0.005,
            reference_mhz: None,
        }
    }
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<(), ReadoutError> {
        if !(self.dt > 0.0) {
            return Err(ReadoutError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt) {
            return Err(ReadoutError::InvalidConfig("t_max must be >= dt".into()));
        }
        if !(self.t2_star > 0.0) {
            return Err(ReadoutError::InvalidConfig("T2* must be > 0".into()));
        }
        Ok(())
    }

    fn times(&self) -> Vec<f64> {
        uniform_times(self.t_max, self.dt)
    }
}

fn uniform_times(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt + 1e-9).floor() as usize + 1;
    (0..n).map(|i| i as f64 * dt).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self, ReadoutError> {
        if t.len() != y.len() {
            return Err(ReadoutError::InvalidSeries(format!(
                "{} times but {} values",
                t.len(),
                y.len()
            )));
        }
        if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(ReadoutError::InvalidSeries(format!("times not increasing at {}", i + 1)));
        }
        Ok(TimeSeries { t, y })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn map_y(&self, f: impl Fn(f64, f64) -> f64) -> TimeSeries {
        let y = self.t.iter().zip(&self.y).map(|(&t, &y)| f(t, y)).collect();
        TimeSeries { t: self.t.clone(), y }
    }

    /// Uniform step, or the first sample where spacing deviates by > 1e−6 relative.
    pub fn uniform_step(&self) -> Result<f64, ReadoutError> {
        if self.len() < 2 {
            return Err(ReadoutError::InvalidSeries("need at least 2 samples".into()));
        }
        let dt = self.t[1] - self.t[0];
        for (i, w) in self.t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(ReadoutError::NonUniform(i + 1));
            }
        }
        Ok(dt)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ReadoutError> {
        writeln!(out, "# t_us,y")?;
        for (t, y) in self.t.iter().zip(&self.y) {
            writeln!(out, "{},{}", crate::fmt_sig(*t), crate::fmt_sig(*y))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, ReadoutError> {
        let (t, y) = read_two_columns(input, "# t_us,y")?;
        TimeSeries::new(t, y)
    }
}

fn read_two_columns<R: BufRead>(input: R, header: &str) -> Result<(Vec<f64>, Vec<f64>), ReadoutError> {
    let mut lines = input.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(ReadoutError::Csv(format!("expected header '{header}', got '{first}'")));
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let mut next = || -> Result<f64, ReadoutError> {
            cols.next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| ReadoutError::Csv(format!("bad row {}: '{line}'", n + 2)))
        };
        a.push(next()?);
        b.push(next()?);
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    freq: Vec<f64>,
    amp: Vec<f64>,
    phase: Vec<f64>,
    /// Bin width 1/(n_padded·dt), MHz.
    pub resolution: f64,
    pub dt: f64,
    pub n_padded: usize,
}

impl Spectrum {
    pub fn freq(&self) -> &[f64] {
        &self.freq
    }

    pub fn amp(&self) -> &[f64] {
        &self.amp
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    /// Σ|X_k|²·dt/N over the full two-sided spectrum, reconstructed from the
    /// stored non-negative bins. Equals Σ|y − ȳ|²·dt for an unwindowed input.
    pub fn energy(&self) -> f64 {
        let n = self.n_padded;
        let last = self.amp.len() - 1;
        let mut s = 0.0;
        for (k, a) in self.amp.iter().enumerate() {
            let mult = if k == 0 || (n.is_multiple_of(2) && k == last) { 1.0 } else { 2.0 };
            s += mult * a * a;
        }
        s * self.dt / n as f64
    }

    fn nearest_bin(&self, f: f64) -> usize {
        ((f / self.resolution).round().max(0.0) as usize).min(self.amp.len() - 1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ReadoutError> {
        writeln!(out, "# f_MHz,amp")?;
        for (f, a) in self.freq.iter().zip(&self.amp) {
            writeln!(out, "{},{}", crate::fmt_sig(*f), crate::fmt_sig(*a))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub zero_pad_factor: usize,
    pub window: Window,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { zero_pad_factor: 8, window: Window::Hann }
    }
}

/// Magnitude and phase of the DFT of (y − ȳ), non-negative frequencies only.
pub fn spectrum(ts: &TimeSeries, opts: SpectrumOptions) -> Result<Spectrum, ReadoutError> {
    let dt = ts.uniform_step()?;
    if opts.zero_pad_factor == 0 {
        return Err(ReadoutError::InvalidConfig("zero-pad factor must be >= 1".into()));
    }
    let n = ts.len();
    let n_padded = n * opts.zero_pad_factor;
    let mean = ts.y.iter().sum::<f64>() / n as f64;

    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n_padded];
    for (i, (slot, y)) in buf.iter_mut().zip(&ts.y).enumerate() {
        let w = match opts.window {
            Window::None => 1.0,
            Window::Hann => 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos(),
        };
        *slot = Complex64::new((y - mean) * w, 0.0);
    }
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(n_padded);
    fft.process(&mut buf);

    let bins = n_padded / 2 + 1;
    let resolution = 1.0 / (n_padded as f64 * dt);
    Ok(Spectrum {
        freq: (0..bins).map(|k| k as f64 * resolution).collect(),
        amp: buf[..bins].iter().map(|c| c.norm()).collect(),
        phase: buf[..bins].iter().map(|c| c.arg()).collect(),
        resolution,
        dt,
        n_padded,
    })
}

/// Ramsey line frequencies (MHz) in the rotating frame, per nuclear projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFrequencies {
    pub m1: f64,
    pub p1: f64,
    pub zero: f64,
}

impl LineFrequencies {
    fn as_array(&self) -> [f64; 3] {
        [self.m1, self.p1, self.zero]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LineAmplitudes {
    pub a_m1: f64,
    pub a_p1: f64,
    pub a_0: f64,
}

impl LineAmplitudes {
    /// A_k = P(0,k) − P(−1,k).
    pub fn from_populations(p: &PopulationVector) -> Self {
        LineAmplitudes {
            a_m1: p.get(0, -1) - p.get(-1, -1),
            a_p1: p.get(0, 1) - p.get(-1, 1),
            a_0: p.get(0, 0) - p.get(-1, 0),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a_m1.abs().max(self.a_p1.abs()).max(self.a_0.abs())
    }
}

/// Effective frequencies δν_k + ν_det of the three m_S = 0 → −1 lines.
pub fn ramsey_line_frequencies(params: &SpinSystemParams, cfg: &RamseyConfig) -> LineFrequencies {
    let line = |k| esr_line(params, k).expect("m_I in range");
    let reference = cfg.reference_mhz.unwrap_or_else(|| line(0));
    let shifted = |k| line(k) - reference + cfg.nu_det;
    LineFrequencies { m1: shifted(-1), p1: shifted(1), zero: shifted(0) }
}

fn ramsey_from_amplitudes(amps: &LineAmplitudes, lines: &LineFrequencies, cfg: &RamseyConfig) -> TimeSeries {
    let t = cfg.times();
    let terms = [(amps.a_m1, lines.m1), (amps.a_p1, lines.p1), (amps.a_0, lines.zero)];
    let y = t
        .iter()
        .map(|&tr| {
            let envelope = (-tr / cfg.t2_star).exp();
            terms
                .iter()
                .map(|&(a, f)| a * (2.0 * PI * f * tr + cfg.phi_c).cos())
                .sum::<f64>()
                * envelope
        })
        .collect();
    TimeSeries { t, y }
}

/// y(t_R) = Σ_k A_k·cos(2π(δν_k + ν_det)t_R + φ_c)·exp(−t_R/T2*).
pub fn ramsey_signal(
    p: &PopulationVector,
    params: &SpinSystemParams,
    cfg: &RamseyConfig,
) -> Result<TimeSeries, ReadoutError> {
    cfg.validate()?;
    let lines = ramsey_line_frequencies(params, cfg);
    Ok(ramsey_from_amplitudes(&LineAmplitudes::from_populations(p), &lines, cfg))
}

/// Ramsey signal for explicitly given line amplitudes.
pub fn ramsey_signal_from_amplitudes(
    amps: &LineAmplitudes,
    params: &SpinSystemParams,
    cfg: &RamseyConfig,
) -> Result<TimeSeries, ReadoutError> {
    cfg.validate()?;
    let lines = ramsey_line_frequencies(params, cfg);
    Ok(ramsey_from_amplitudes(amps, &lines, cfg))
}

/// Peak height and phase of a unit-amplitude line under the same sampling,
/// damping, window and padding as the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub phase: f64,
}

pub fn calibrate(cfg: &RamseyConfig, opts: SpectrumOptions) -> Result<Calibration, ReadoutError> {
    cfg.validate()?;
    let unit = LineAmplitudes { a_m1: 0.0, a_p1: 0.0, a_0: 1.0 };
    let f = cfg.nu_det.abs();
    let lines = LineFrequencies { m1: f, p1: f, zero: f };
    let sp = spectrum(&ramsey_from_amplitudes(&unit, &lines, cfg), opts)?;
    let (peak, phase) = peak_near(&sp, f);
    if peak <= 0.0 {
        return Err(ReadoutError::InvalidConfig("calibration line has no spectral weight".into()));
    }
    Ok(Calibration { scale: 1.0 / peak, phase })
}

fn peak_near(sp: &Spectrum, f: f64) -> (f64, f64) {
    let centre = sp.nearest_bin(f);
    let lo = centre.saturating_sub(1);
    let hi = (centre + 1).min(sp.amp.len() - 1);
    let best = (lo..=hi)
        .max_by(|&a, &b| sp.amp[a].total_cmp(&sp.amp[b]))
        .expect("non-empty range");
    (sp.amp[best], sp.phase[best])
}

/// Signed line amplitudes: peak magnitude within ±1 bin of each expected line,
/// times `calib.scale`; the sign comes from the peak phase relative to the
/// calibration phase.
pub fn extract_line_amplitudes(
    sp: &Spectrum,
    expected: &LineFrequencies,
    calib: &Calibration,
) -> Result<LineAmplitudes, ReadoutError> {
    let f = expected.as_array().map(f64::abs);
    let f_max = sp.freq.last().copied().unwrap_or(0.0);
    for &x in &f {
        if x > f_max {
            return Err(ReadoutError::OutOfRange(x));
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if (f[i] - f[j]).abs() <= 2.0 * sp.resolution {
                return Err(ReadoutError::Unresolved { a: f[i], b: f[j], bin: sp.resolution });
            }
        }
    }
    let signed = |x: f64| {
        let (mag, phase) = peak_near(sp, x);
        let sign = if (phase - calib.phase).cos() < 0.0 { -1.0 } else { 1.0 };
        sign * mag * calib.scale
    };
    Ok(LineAmplitudes { a_m1: signed(f[0]), a_p1: signed(f[1]), a_0: signed(f[2]) })
}

/// Full Ramsey tomography of a population vector: synthesize, transform, extract.
pub fn ramsey_tomography(
    p: &PopulationVector,
    params: &SpinSystemParams,
    cfg: &RamseyConfig,
    opts: SpectrumOptions,
) -> Result<(TimeSeries, Spectrum, LineAmplitudes), ReadoutError> {
    let ts = ramsey_signal(p, params, cfg)?;
    let sp = spectrum(&ts, opts)?;
    let calib = calibrate(cfg, opts)?;
    let amps = extract_line_amplitudes(&sp, &ramsey_line_frequencies(params, cfg), &calib)?;
    Ok((ts, sp, amps))
}

/// P_{m_S=0}(t_RF) = P(0,−1) + P(0,+1) + P(−1,0)·(1 + cos ω₁t)/2.
pub fn rabi_signal(
    p: &PopulationVector,
    omega1: f64,
    t_max: f64,
    dt: f64,
) -> Result<TimeSeries, ReadoutError> {
    if !(dt > 0.0 && t_max >= dt) {
        return Err(ReadoutError::InvalidConfig("need dt > 0 and t_max >= dt".into()));
    }
    if let Some(bias) = rabi_bias(p) {
        log::warn!("P(-1,-1) = {bias:.4} is not negligible; Rabi readout formula is biased");
    }
    let base = p.get(0, -1) + p.get(0, 1);
    let osc = p.get(-1, 0);
    let t = uniform_times(t_max, dt);
    let y = t.iter().map(|&t| base + osc * (1.0 + (omega1 * t).cos()) / 2.0).collect();
    Ok(TimeSeries { t, y })
}

/// `Some(P(−1,−1))` when it exceeds [`RABI_BIAS_THRESHOLD`].
pub fn rabi_bias(p: &PopulationVector) -> Option<f64> {
    let v = p.get(-1, -1);
    (v > RABI_BIAS_THRESHOLD).then_some(v)
}

/// Linear least-squares fit of c₀ + c₁·cos(ω₁t + φ); returns 2|c₁| ≈ P(−1,0).
pub fn extract_rabi_population(ts: &TimeSeries, omega1: f64) -> Result<f64, ReadoutError> {
    if ts.len() < 3 {
        return Err(ReadoutError::InsufficientData { periods: 0.0 });
    }
    let span = ts.t[ts.len() - 1] - ts.t[0];
    let periods = span * omega1.abs() / (2.0 * PI);
    if periods < 2.0 {
        return Err(ReadoutError::InsufficientData { periods });
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (&t, &y) in ts.t.iter().zip(&ts.y) {
        let basis = Vector3::new(1.0, (omega1 * t).cos(), (omega1 * t).sin());
        normal += basis * basis.transpose();
        rhs += basis * y;
    }
    let coef = normal
        .cholesky()
        .ok_or_else(|| ReadoutError::InvalidSeries("degenerate Rabi design matrix".into()))?
        .solve(&rhs);
    Ok(2.0 * coef[1].hypot(coef[2]))
}
