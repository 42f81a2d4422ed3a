//! Sensitivity of the prepared |0,0⟩ population to pulse-angle errors and to
//! the state left by the first laser pulse.

use serde::{Deserialize, Serialize};

use super::optimize::optimize_pulse_duration;
use super::AnalysisError;
use crate::kinetics::{PopulationVector, PumpRates};
use crate::pulse::{run_sequence, standard_init_sequence, InitPulseErrors, PulseSequence};

/// Copy of `seq` with every rotation pulse made perfect.
fn perfect(seq: &PulseSequence) -> PulseSequence {
    let mut out = seq.clone();
    for i in 0..seq.len() {
        if let Some(s) = out.with_angle_error(i, 0.0) {
            out = s;
        }
    }
    out
}

/// P₀,₀(perfect pulses) − P₀,₀(angle error `dtheta` on pulse `index` only).
pub fn pulse_angle_sensitivity(
    seq: &PulseSequence,
    rates: &PumpRates,
    p0: &PopulationVector,
    dtheta: f64,
    index: usize,
) -> Result<f64, AnalysisError> {
    if index >= seq.len() {
        return Err(AnalysisError::IndexOutOfRange { index, len: seq.len() });
    }
    let base = perfect(seq);
    let bent = base.with_angle_error(index, dtheta).ok_or(AnalysisError::NotARotation(index))?;
    let ideal = run_sequence(p0, &base, rates)?.final_state.get(0, 0);
    let actual = run_sequence(p0, &bent, rates)?.final_state.get(0, 0);
    Ok(ideal - actual)
}

/// Points (P1, P2) = (i/n, j/n) with i + j ≤ n.
pub fn simplex_grid(n: usize) -> Vec<(f64, f64)> {
    let n = n.max(1);
    let mut pts = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            pts.push((i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    pts
}

/// Affine model P₀,₀ ≈ c0 + c1·(P1 + P2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStateModel {
    pub c0: f64,
    pub c1: f64,
    /// Largest |P₀,₀ − (c0 + c1·s)| over the grid.
    pub max_deviation: f64,
    /// Commanded second-laser duration used (µs).
    pub tau_l: f64,
    /// (P1, P2, P₀,₀) for every grid point.
    pub samples: Vec<(f64, f64, f64)>,
}

/// Runs the purifying sequence at the optimal τ_L from (P1, P2, 1 − P1 − P2, 0, …),
/// i.e. the state just after the first laser pulse, and fits the affine model.
pub fn initial_state_sensitivity(
    rates: &PumpRates,
    points: &[(f64, f64)],
) -> Result<InitialStateModel, AnalysisError> {
    const EDGE: f64 = 1e-12;
    if points.len() < 2 {
        return Err(AnalysisError::InvalidData("need at least two grid points".into()));
    }
    for &(p1, p2) in points {
        if !(p1 >= -EDGE && p2 >= -EDGE && p1 + p2 <= 1.0 + EDGE) {
            return Err(AnalysisError::OutsideSimplex { p1, p2 });
        }
    }
    let opt = optimize_pulse_duration(rates, &PopulationVector::swap_initialized())?;
    let seq = standard_init_sequence(opt.commanded, true, &InitPulseErrors::default()).without_leading_laser();

    let mut samples = Vec::with_capacity(points.len());
    for &(p1, p2) in points {
        let (p1, p2) = (p1.max(0.0), p2.max(0.0));
        let rest = (1.0 - p1 - p2).max(0.0);
        let p0 = PopulationVector::new([p1, p2, rest, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])?;
        let p00 = run_sequence(&p0, &seq, rates)?.final_state.get(0, 0);
        samples.push((p1, p2, p00));
    }

    let n = samples.len() as f64;
    let s_mean = samples.iter().map(|s| s.0 + s.1).sum::<f64>() / n;
    let y_mean = samples.iter().map(|s| s.2).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 + s.1 - s_mean).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(AnalysisError::InvalidData("grid points all share the same P1 + P2".into()));
    }
    let sxy: f64 = samples.iter().map(|s| (s.0 + s.1 - s_mean) * (s.2 - y_mean)).sum();
    let c1 = sxy / sxx;
    let c0 = y_mean - c1 * s_mean;
    let max_deviation = samples
        .iter()
        .map(|s| (s.2 - c0 - c1 * (s.0 + s.1)).abs())
        .fold(0.0, f64::max);
    Ok(InitialStateModel { c0, c1, max_deviation, tau_l: opt.commanded, samples })
}
