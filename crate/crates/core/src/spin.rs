//! Ground-state spin Hamiltonian of the NV electron spin (S=1) coupled to a
//! ¹⁴N nuclear spin (I=1), with the field along the NV axis.
//!
//! The Hamiltonian is diagonal in the product basis |m_S, m_I⟩, so every
//! quantity here is a closed-form function of the two quantum numbers.
//! Units: MHz, mT.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of product states |m_S, m_I⟩.
pub const NUM_STATES: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpinError {
    #[error("invalid quantum numbers (m_S={m_s}, m_I={m_i}); both must be in {{-1, 0, +1}}")]
    InvalidLabel { m_s: i8, m_i: i8 },
    #[error("state index {0} out of range 0..9")]
    InvalidIndex(usize),
    #[error("invalid spin parameters: {0}")]
    InvalidParams(String),
}

/// Hamiltonian constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    /// Zero-field splitting (MHz).
    pub d: f64,
    /// Hyperfine coupling A_zz (MHz).
    pub a_hf: f64,
    /// Nuclear quadrupole coupling (MHz).
    pub p_quad: f64,
    /// Electron gyromagnetic ratio (MHz/mT), signed.
    pub gamma_e: f64,
    /// Nuclear gyromagnetic ratio (MHz/mT).
    pub gamma_n: f64,
    /// Field along the NV axis (mT).
    pub b: f64,
}

impl Default for SpinSystemParams {
    fn default() -> Self {
        SpinSystemParams {
            d: 2870.0,
            a_hf: -2.16,
            p_quad: -4.95,
            gamma_e: -28.0,
            gamma_n: 3.1e-3,
            b: 6.1,
        }
    }
}

impl SpinSystemParams {
    pub fn validate(&self) -> Result<(), SpinError> {
        let all = [self.d, self.a_hf, self.p_quad, self.gamma_e, self.gamma_n, self.b];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SpinError::InvalidParams("non-finite constant".into()));
        }
        if self.d <= 0.0 {
            return Err(SpinError::InvalidParams(format!("D must be > 0, got {}", self.d)));
        }
        if self.b < 0.0 {
            return Err(SpinError::InvalidParams(format!("B must be >= 0, got {}", self.b)));
        }
        Ok(())
    }
}

/// A product state |m_S, m_I⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateLabel {
    m_s: i8,
    m_i: i8,
}

/// Basis order used for every population vector:
/// (0,−1; 0,+1; 0,0; −1,−1; −1,+1; −1,0; +1,−1; +1,+1; +1,0).
///
/// This is a listing order only; it is not sorted by energy.
pub const BASIS: [StateLabel; NUM_STATES] = [
    StateLabel { m_s: 0, m_i: -1 },
    StateLabel { m_s: 0, m_i: 1 },
    StateLabel { m_s: 0, m_i: 0 },
    StateLabel { m_s: -1, m_i: -1 },
    StateLabel { m_s: -1, m_i: 1 },
    StateLabel { m_s: -1, m_i: 0 },
    StateLabel { m_s: 1, m_i: -1 },
    StateLabel { m_s: 1, m_i: 1 },
    StateLabel { m_s: 1, m_i: 0 },
];

impl StateLabel {
    pub fn new(m_s: i8, m_i: i8) -> Result<Self, SpinError> {
        if !(-1..=1).contains(&m_s) || !(-1..=1).contains(&m_i) {
            return Err(SpinError::InvalidLabel { m_s, m_i });
        }
        Ok(StateLabel { m_s, m_i })
    }

    pub fn m_s(&self) -> i8 {
        self.m_s
    }

    pub fn m_i(&self) -> i8 {
        self.m_i
    }

    pub fn index(&self) -> usize {
        // electron block offset, then nuclear order (-1, +1, 0) within a block
        let block = match self.m_s {
            0 => 0,
            -1 => 3,
            _ => 6,
        };
        let within = match self.m_i {
            -1 => 0,
            1 => 1,
            _ => 2,
        };
        block + within
    }

    pub fn from_index(index: usize) -> Result<Self, SpinError> {
        BASIS.get(index).copied().ok_or(SpinError::InvalidIndex(index))
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn signed(v: i8) -> &'static str {
            match v {
                -1 => "-1",
                0 => "0",
                _ => "+1",
            }
        }
        write!(f, "{},{}", signed(self.m_s), signed(self.m_i))
    }
}

impl std::str::FromStr for StateLabel {
    type Err = SpinError;

    /// Parses `m_S,m_I`, e.g. `0,+1` or `-1,0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SpinError::InvalidParams(format!("cannot parse state label '{s}'"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let m_s: i8 = a.trim().trim_start_matches('+').parse().map_err(|_| bad())?;
        let m_i: i8 = b.trim().trim_start_matches('+').parse().map_err(|_| bad())?;
        StateLabel::new(m_s, m_i)
    }
}

/// Index of a (m_S, m_I) pair in [`BASIS`].
pub fn state_index(m_s: i8, m_i: i8) -> Result<usize, SpinError> {
    StateLabel::new(m_s, m_i).map(|l| l.index())
}

pub fn state_label(index: usize) -> Result<StateLabel, SpinError> {
    StateLabel::from_index(index)
}

/// D·m_S² − γ_e·B·m_S + P·m_I² − γ_n·B·m_I + A·m_S·m_I, in MHz.
pub fn energy(params: &SpinSystemParams, label: StateLabel) -> f64 {
    let ms = f64::from(label.m_s);
    let mi = f64::from(label.m_i);
    params.d * ms * ms - params.gamma_e * params.b * ms + params.p_quad * mi * mi
        - params.gamma_n * params.b * mi
        + params.a_hf * ms * mi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionKind {
    /// Electron flip, |Δm_S| = 1 at fixed m_I.
    Mw,
    /// Nuclear flip, |Δm_I| = 1 at fixed m_S.
    Rf,
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionKind::Mw => f.write_str("MW"),
            TransitionKind::Rf => f.write_str("RF"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    pub from: StateLabel,
    pub to: StateLabel,
    pub kind: TransitionKind,
    /// |E(to) − E(from)| in MHz.
    pub freq_mhz: f64,
}

/// Selection-rule classification of an unordered pair, if it is allowed at all.
pub fn allowed_kind(a: StateLabel, b: StateLabel) -> Option<TransitionKind> {
    let dms = (a.m_s - b.m_s).abs();
    let dmi = (a.m_i - b.m_i).abs();
    match (dms, dmi) {
        (1, 0) => Some(TransitionKind::Mw),
        (0, 1) => Some(TransitionKind::Rf),
        _ => None,
    }
}

/// All selection-rule-allowed transitions, each unordered pair listed once
/// (`from` precedes `to` in the basis order).
///
/// MW: 6 lines (m_S = 0 ↔ ±1 for each m_I). RF: 6 lines (m_I = 0 ↔ ±1 for each m_S).
pub fn transition_frequencies(params: &SpinSystemParams) -> Vec<TransitionLine> {
    let mut lines = Vec::with_capacity(12);
    for (i, &a) in BASIS.iter().enumerate() {
        for &b in &BASIS[i + 1..] {
            if let Some(kind) = allowed_kind(a, b) {
                lines.push(TransitionLine {
                    from: a,
                    to: b,
                    kind,
                    freq_mhz: (energy(params, b) - energy(params, a)).abs(),
                });
            }
        }
    }
    lines
}

/// Frequency of the m_S = 0 → −1 line for nuclear projection `m_i`.
pub fn esr_line(params: &SpinSystemParams, m_i: i8) -> Result<f64, SpinError> {
    let lower = StateLabel::new(0, m_i)?;
    let upper = StateLabel::new(-1, m_i)?;
    Ok((energy(params, upper) - energy(params, lower)).abs())
}
