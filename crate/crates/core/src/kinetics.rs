//! Laser-pumping rate equations dP/dt = M·P over the nine product states.
//!
//! Two propagators are provided: the matrix exponential of the constant rate
//! matrix (valid for both nuclear-flip models) and the closed-form solution for
//! the all-pairs model, which divides by (3k_I − k_S) and is refused near that
//! removable singularity.

use std::fmt;
use std::ops::Index;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spin::NUM_STATES;

pub type Matrix9 = SMatrix<f64, NUM_STATES, NUM_STATES>;
pub type Vector9 = SVector<f64, NUM_STATES>;

/// Tolerance on Σp enforced when building a [`PopulationVector`].
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Entries this far below zero are accepted as rounding noise.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;
/// Relative width of the 3k_I ≈ k_S band where closed forms are refused.
pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticsError {
    #[error("invalid population vector: {0}")]
    InvalidPopulation(String),
    #[error("invalid pump rates: {0}")]
    InvalidRates(String),
    #[error("closed-form solution is only available for the all-pairs flip model")]
    UnsupportedVariant,
    #[error("3k_I = {three_k_i} is within the degeneracy band of k_S = {k_s}; use the numeric propagator")]
    DegenerateRates { k_s: f64, three_k_i: f64 },
    #[error("negative propagation time {0}")]
    NegativeTime(f64),
}

/// Occupation probabilities of the nine states in [`crate::spin::BASIS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationVector([f64; NUM_STATES]);

impl PopulationVector {
    pub fn new(p: [f64; NUM_STATES]) -> Result<Self, KineticsError> {
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || !(-NEGATIVE_TOLERANCE..=1.0 + NEGATIVE_TOLERANCE).contains(&v) {
                return Err(KineticsError::InvalidPopulation(format!(
                    "entry {i} = {v} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(KineticsError::InvalidPopulation(format!("entries sum to {sum}")));
        }
        Ok(PopulationVector(p))
    }

    /// Rescales non-negative weights onto the simplex.
    pub fn normalize(weights: [f64; NUM_STATES]) -> Result<Self, KineticsError> {
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(KineticsError::InvalidPopulation(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(KineticsError::InvalidPopulation("weights sum to zero".into()));
        }
        Ok(PopulationVector(weights.map(|w| w / sum)))
    }

    /// Output of a propagator; may sit a few ulps outside the simplex.
    pub(crate) fn from_raw(p: [f64; NUM_STATES]) -> Self {
        PopulationVector(p)
    }

    /// All nine states equally occupied.
    pub fn depolarized() -> Self {
        PopulationVector([1.0 / 9.0; NUM_STATES])
    }

    /// Electron spin in m_S = 0, nuclear spin unpolarized: (1,1,1,0,…)/3.
    pub fn electron_polarized() -> Self {
        let t = 1.0 / 3.0;
        PopulationVector([t, t, t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// Nuclear spin in m_I = 0, electron unpolarized: (0,0,1,0,0,1,0,0,1)/3.
    pub fn swap_initialized() -> Self {
        let t = 1.0 / 3.0;
        PopulationVector([0.0, 0.0, t, 0.0, 0.0, t, 0.0, 0.0, t])
    }

    pub fn as_array(&self) -> &[f64; NUM_STATES] {
        &self.0
    }

    pub fn to_vector(&self) -> Vector9 {
        Vector9::from_column_slice(&self.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Population of |m_S, m_I⟩.
    pub fn get(&self, m_s: i8, m_i: i8) -> f64 {
        let idx = crate::spin::state_index(m_s, m_i).expect("quantum numbers in {-1,0,1}");
        self.0[idx]
    }

    /// Total population of the m_S = 0 manifold.
    pub fn electron_zero(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn max_abs_diff(&self, other: &PopulationVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for PopulationVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for PopulationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        f.write_str(")")
    }
}

/// Which nuclear-spin flips the laser induces within m_S = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum FlipModel {
    /// Every pair of nuclear states exchanges at k_I (Δm_I = ±1, ±2).
    #[default]
    AllPairs,
    /// Only Δm_I = ±1 flips: (−1 ↔ 0) and (0 ↔ +1).
    NearestNeighbor,
}

impl fmt::Display for FlipModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlipModel::AllPairs => f.write_str("all-pairs"),
            FlipModel::NearestNeighbor => f.write_str("nearest-neighbor"),
        }
    }
}

/// How the onset delay τ_d maps a commanded laser duration τ to pumping time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum OnsetConvention {
    /// Pumping starts τ_d after the command: t = max(0, τ − τ_d).
    #[default]
    Delay,
    /// τ_d is added to the commanded duration: t = τ + τ_d.
    Advance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpRates {
    /// Electron repolarization rate m_S = ±1 → 0 (1/µs).
    pub k_s: f64,
    /// Nuclear depolarization rate within m_S = 0 (1/µs).
    pub k_i: f64,
    /// Laser onset delay (µs).
    pub tau_d: f64,
    pub flip_model: FlipModel,
    pub onset: OnsetConvention,
}

impl Default for PumpRates {
    fn default() -> Self {
        PumpRates {
            k_s: 1.0 / 0.29,
            k_i: 1.0 / 4.7,
            tau_d: 0.045,
            flip_model: FlipModel::AllPairs,
            onset: OnsetConvention::Delay,
        }
    }
}

impl PumpRates {
    pub fn new(k_s: f64, k_i: f64, tau_d: f64, flip_model: FlipModel) -> Result<Self, KineticsError> {
        let r = PumpRates { k_s, k_i, tau_d, flip_model, onset: OnsetConvention::Delay };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), KineticsError> {
        if !(self.k_s.is_finite() && self.k_s > 0.0) {
            return Err(KineticsError::InvalidRates(format!("k_S must be > 0, got {}", self.k_s)));
        }
        if !(self.k_i.is_finite() && self.k_i >= 0.0) {
            return Err(KineticsError::InvalidRates(format!("k_I must be >= 0, got {}", self.k_i)));
        }
        if !(self.tau_d.is_finite() && self.tau_d >= 0.0) {
            return Err(KineticsError::InvalidRates(format!(
                "tau_d must be >= 0, got {}",
                self.tau_d
            )));
        }
        Ok(())
    }

    /// Pumping time produced by a laser pulse commanded for `tau` µs.
    pub fn effective_time(&self, tau: f64) -> f64 {
        match self.onset {
            OnsetConvention::Delay => (tau - self.tau_d).max(0.0),
            OnsetConvention::Advance => tau + self.tau_d,
        }
    }

    /// Commanded duration that yields pumping time `t_eff` (inverse of
    /// [`PumpRates::effective_time`] on its non-clamped branch).
    pub fn commanded_time(&self, t_eff: f64) -> f64 {
        match self.onset {
            OnsetConvention::Delay => t_eff + self.tau_d,
            OnsetConvention::Advance => (t_eff - self.tau_d).max(0.0),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        (3.0 * self.k_i - self.k_s).abs() < DEGENERACY_THRESHOLD * self.k_s
    }
}

/// Generator M of the rate equations, column = source state, row = target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMatrix(Matrix9);

impl RateMatrix {
    pub fn matrix(&self) -> &Matrix9 {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn column_sums(&self) -> [f64; NUM_STATES] {
        std::array::from_fn(|c| self.0.column(c).sum())
    }

    pub fn apply(&self, p: &PopulationVector) -> Vector9 {
        self.0 * p.to_vector()
    }
}

pub fn build_rate_matrix(rates: &PumpRates) -> Result<RateMatrix, KineticsError> {
    rates.validate()?;
    let (ks, ki) = (rates.k_s, rates.k_i);
    let mut m = Matrix9::zeros();

    // m_S = ±1 decays to the m_S = 0 state with the same m_I
    for excited in 3..NUM_STATES {
        m[(excited, excited)] = -ks;
        m[(excited % 3, excited)] = ks;
    }

    // nuclear flips inside m_S = 0; indices 0: m_I=-1, 1: m_I=+1, 2: m_I=0
    let pairs: &[(usize, usize)] = match rates.flip_model {
        FlipModel::AllPairs => &[(0, 1), (0, 2), (1, 2)],
        FlipModel::NearestNeighbor => &[(0, 2), (1, 2)],
    };
    for &(a, b) in pairs {
        m[(a, b)] += ki;
        m[(b, a)] += ki;
        m[(a, a)] -= ki;
        m[(b, b)] -= ki;
    }
    Ok(RateMatrix(m))
}

/// exp(M·t)·p0 via the matrix exponential of the constant generator.
pub fn propagate_numeric(
    p0: &PopulationVector,
    rates: &PumpRates,
    t: f64,
) -> Result<PopulationVector, KineticsError> {
    if t < 0.0 {
        return Err(KineticsError::NegativeTime(t));
    }
    let m = build_rate_matrix(rates)?;
    if t == 0.0 {
        return Ok(*p0);
    }
    let propagator = (m.0 * t).exp();
    let out = propagator * p0.to_vector();
    Ok(PopulationVector::from_raw(std::array::from_fn(|i| out[i])))
}

fn check_closed_form(rates: &PumpRates, t: f64) -> Result<(), KineticsError> {
    rates.validate()?;
    if t < 0.0 {
        return Err(KineticsError::NegativeTime(t));
    }
    if rates.flip_model != FlipModel::AllPairs {
        return Err(KineticsError::UnsupportedVariant);
    }
    if rates.is_degenerate() {
        return Err(KineticsError::DegenerateRates { k_s: rates.k_s, three_k_i: 3.0 * rates.k_i });
    }
    Ok(())
}

/// Closed-form solution of the all-pairs model for an arbitrary initial state.
///
/// Coefficients use 1-based names P1..P9 for the basis order. The printed
/// form has `3b·e^{−3k_S t}` in the first component; the exponent must be
/// `−k_S t` (the a/b pair mirrors c/f and g/h), which is what is evaluated here.
pub fn propagate_closed_form(
    p0: &PopulationVector,
    rates: &PumpRates,
    t: f64,
) -> Result<PopulationVector, KineticsError> {
    check_closed_form(rates, t)?;
    let (ks, ki) = (rates.k_s, rates.k_i);
    let [p1, p2, p3, p4, p5, p6, p7, p8, p9] = p0.0;

    let a = ks - 3.0 * ki * p3 + 6.0 * ki * p1 - 3.0 * ki * p2 - 3.0 * ks * p1 - 3.0 * ks * p4
        - 3.0 * ks * p7;
    let b = ki * p3 - ki + ki * p1 + ki * p2 + ks * p4 + ks * p7;
    let c = ki * p3 - ki + ki * p1 + ki * p2 + ks * p5 + ks * p8;
    let f = ks - 3.0 * ki * p3 - 3.0 * ki * p1 + 6.0 * ki * p2 - 3.0 * ks * p5 - 3.0 * ks * p2
        - 3.0 * ks * p8;
    let g = ks - ki - ks * (p5 + p4 + p7 + p8) + (ki - ks) * (p3 + p1 + p2);
    let h = 6.0 * ki * p3 - 2.0 * ks + 3.0 * ks * (p5 + p4 + p7 + p8) - 3.0 * (ki - ks) * (p1 + p2);

    let es = (-ks * t).exp();
    let ei = (-3.0 * ki * t).exp();
    let den = 3.0 * ki - ks;
    let third = 1.0 / 3.0;

    Ok(PopulationVector::from_raw([
        third * (1.0 + (a * ei + 3.0 * b * es) / den),
        third * (1.0 + (3.0 * c * es + f * ei) / den),
        third * (1.0 + (3.0 * g * es + h * ei) / den),
        p4 * es,
        p5 * es,
        p6 * es,
        p7 * es,
        p8 * es,
        p9 * es,
    ]))
}

/// Closed-form evolution from the swap-initialized state (0,0,1,0,0,1,0,0,1)/3.
pub fn propagate_swap_init(rates: &PumpRates, t: f64) -> Result<PopulationVector, KineticsError> {
    check_closed_form(rates, t)?;
    let (ks, ki) = (rates.k_s, rates.k_i);
    let es = (-ks * t).exp();
    let ei = (-3.0 * ki * t).exp();
    let den = 3.0 * ki - ks;
    let side = 1.0 - es * 2.0 * ki / den - ei * (ki - ks) / den;
    let center = 1.0 - es * 2.0 * (ki - ks) / den + ei * 2.0 * (ki - ks) / den;
    let third = 1.0 / 3.0;
    Ok(PopulationVector::from_raw([
        third * side,
        third * side,
        third * center,
        0.0,
        0.0,
        third * es,
        0.0,
        0.0,
        third * es,
    ]))
}

/// Closed form when it applies, matrix exponential otherwise; `t = 0` returns `p0` unchanged.
pub fn propagate(
    p0: &PopulationVector,
    rates: &PumpRates,
    t: f64,
) -> Result<PopulationVector, KineticsError> {
    if t == 0.0 {
        rates.validate()?;
        return Ok(*p0);
    }
    if rates.flip_model == FlipModel::AllPairs && !rates.is_degenerate() {
        propagate_closed_form(p0, rates, t)
    } else {
        propagate_numeric(p0, rates, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub populations: PopulationVector,
    /// False when k_I = 0: each m_S = 0 nuclear population is then conserved
    /// separately and the long-time limit depends on the initial state.
    pub ergodic: bool,
}

/// Fixed point (1/3, 1/3, 1/3, 0, …) of the pumping dynamics.
pub fn steady_state(rates: &PumpRates) -> Result<SteadyState, KineticsError> {
    rates.validate()?;
    let ergodic = rates.k_i > 0.0;
    if !ergodic {
        log::warn!("k_I = 0: nuclear populations in m_S = 0 are individually conserved");
    }
    Ok(SteadyState { populations: PopulationVector::electron_polarized(), ergodic })
}
