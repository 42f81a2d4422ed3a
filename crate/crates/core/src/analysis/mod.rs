//! Rate fitting, pulse-length optimization and error budgets.

pub mod budget;
pub mod fit;
pub mod lm;
pub mod observations;
pub mod optimize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{propagate, KineticsError, PopulationVector, PumpRates};
use crate::pulse::SequenceError;

pub use budget::{initial_state_sensitivity, pulse_angle_sensitivity, simplex_grid, InitialStateModel};
pub use fit::{compare_flip_models, fit_rates, flip_models_distinguishable, FitOptions, FitResult, ModelComparison};
pub use observations::{Observation, ObservationSet};
pub use optimize::{optimize_pulse_duration, stationarity_residual, swap_init_stationary_time, PulseOptimum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("fit did not converge after {iterations} iterations (cost {cost:e})")]
    NonConvergence { iterations: usize, cost: f64 },
    #[error("singular Jacobian: the data do not constrain every parameter")]
    SingularJacobian,
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("m_S = 0 subspace is empty; purity undefined")]
    UndefinedPurity,
    #[error("pulse index {index} out of range for a sequence of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("pulse {0} is not an MW or RF rotation")]
    NotARotation(usize),
    #[error("initial state ({p1}, {p2}) outside the simplex")]
    OutsideSimplex { p1: f64, p2: f64 },
}

/// Quantities read out after the second laser pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub a_m1: f64,
    pub a_p1: f64,
    pub a_0: f64,
    pub p_m1_0: f64,
    pub p_00: f64,
}

impl Observables {
    pub fn from_populations(p: &PopulationVector) -> Self {
        Observables {
            a_m1: p.get(0, -1) - p.get(-1, -1),
            a_p1: p.get(0, 1) - p.get(-1, 1),
            a_0: p.get(0, 0) - p.get(-1, 0),
            p_m1_0: p.get(-1, 0),
            p_00: p.get(0, 0),
        }
    }
}

/// Propagates `p_init` through a laser pulse of commanded length `tau_l`.
pub fn predict_observables(
    rates: &PumpRates,
    tau_l: f64,
    p_init: &PopulationVector,
) -> Result<Observables, AnalysisError> {
    if !(tau_l >= 0.0) {
        return Err(KineticsError::NegativeTime(tau_l).into());
    }
    let p = propagate(p_init, rates, rates.effective_time(tau_l))?;
    Ok(Observables::from_populations(&p))
}

/// Fraction of the m_S = 0 population that sits in |0,0⟩.
pub fn subspace_purity(p: &PopulationVector) -> Result<f64, AnalysisError> {
    let total = p.electron_zero();
    if !(total > 0.0) {
        return Err(AnalysisError::UndefinedPurity);
    }
    Ok(p.get(0, 0) / total)
}

/// m_S = 0 populations (P₀,₀, P₀,₋₁, P₀,₊₁) from line amplitudes and P(−1,0),
/// assuming P(−1,±1) vanish.
pub fn reconstruct_populations(a_0: f64, a_m1: f64, a_p1: f64, p_m1_0: f64) -> (f64, f64, f64) {
    (a_0 + p_m1_0, a_m1, a_p1)
}
