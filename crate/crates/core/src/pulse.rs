//! Pulse sequences acting on populations.
//!
//! Laser pulses propagate the rate equations; MW and RF π pulses exchange the
//! populations of one selection-rule-allowed pair, with an angle error reducing
//! the exchanged fraction to sin²((π + Δθ)/2). Coherences are never tracked.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetics::{propagate, KineticsError, PopulationVector, PumpRates};
use crate::spin::{allowed_kind, SpinError, StateLabel, TransitionKind};

/// Duration of the first, electron-initializing laser pulse (µs).
pub const INIT_LASER_US: f64 = 5.0;
/// Nominal π-pulse durations of the hardware sequence (µs).
pub const MW1_PI_US: f64 = 3.874;
pub const MW2_PI_US: f64 = 1.456;
pub const RF_PI_US: f64 = 105.908;
pub const MW_PURIFY_PI_US: f64 = 3.874;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("{kind} transition {from} <-> {to} violates the selection rule (Δm_S={dms}, Δm_I={dmi})")]
    SelectionRule { kind: TransitionKind, from: StateLabel, to: StateLabel, dms: i8, dmi: i8 },
    #[error("negative duration {0} µs")]
    NegativeDuration(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateLabel,
    pub to: StateLabel,
}

impl Transition {
    pub fn new(from: StateLabel, to: StateLabel) -> Self {
        Transition { from, to }
    }

    fn labels(m: [(i8, i8); 2]) -> Self {
        let l = |(s, i): (i8, i8)| StateLabel::new(s, i).expect("static label");
        Transition { from: l(m[0]), to: l(m[1]) }
    }
}

/// Checks that `from ↔ to` is an allowed transition of the given kind.
pub fn validate_transition(
    kind: TransitionKind,
    from: StateLabel,
    to: StateLabel,
) -> Result<(), SequenceError> {
    if allowed_kind(from, to) == Some(kind) {
        Ok(())
    } else {
        Err(SequenceError::SelectionRule {
            kind,
            from,
            to,
            dms: to.m_s() - from.m_s(),
            dmi: to.m_i() - from.m_i(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseKind {
    Laser { duration: f64 },
    MwPi { transition: Transition, angle_error: f64 },
    RfPi { transition: Transition, angle_error: f64 },
    Delay { duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub kind: PulseKind,
    pub label: Option<String>,
    /// Hardware duration of a π pulse, recorded as metadata only.
    pub nominal_us: Option<f64>,
}

impl Pulse {
    pub fn laser(duration: f64) -> Self {
        Pulse { kind: PulseKind::Laser { duration }, label: None, nominal_us: None }
    }

    pub fn delay(duration: f64) -> Self {
        Pulse { kind: PulseKind::Delay { duration }, label: None, nominal_us: None }
    }

    pub fn mw(from: StateLabel, to: StateLabel, angle_error: f64) -> Self {
        Pulse {
            kind: PulseKind::MwPi { transition: Transition::new(from, to), angle_error },
            label: None,
            nominal_us: None,
        }
    }

    pub fn rf(from: StateLabel, to: StateLabel, angle_error: f64) -> Self {
        Pulse {
            kind: PulseKind::RfPi { transition: Transition::new(from, to), angle_error },
            label: None,
            nominal_us: None,
        }
    }

    pub fn labeled(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn with_nominal(mut self, us: f64) -> Self {
        self.nominal_us = Some(us);
        self
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self.kind, PulseKind::MwPi { .. } | PulseKind::RfPi { .. })
    }

    /// Copy of a rotation pulse with its angle error replaced; other kinds unchanged.
    pub fn with_angle_error(&self, err: f64) -> Pulse {
        let mut p = self.clone();
        match &mut p.kind {
            PulseKind::MwPi { angle_error, .. } | PulseKind::RfPi { angle_error, .. } => {
                *angle_error = err
            }
            _ => {}
        }
        p
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        match self.kind {
            PulseKind::Laser { duration } | PulseKind::Delay { duration } => {
                if !(duration >= 0.0) {
                    return Err(SequenceError::NegativeDuration(duration));
                }
                Ok(())
            }
            PulseKind::MwPi { transition, .. } => {
                validate_transition(TransitionKind::Mw, transition.from, transition.to)
            }
            PulseKind::RfPi { transition, .. } => {
                validate_transition(TransitionKind::Rf, transition.from, transition.to)
            }
        }
    }
}

/// Fraction of population exchanged by a nominal π rotation with error `angle_error`.
pub fn swap_weight(angle_error: f64) -> f64 {
    let s = ((std::f64::consts::PI + angle_error) / 2.0).sin();
    s * s
}

fn exchange(p: &PopulationVector, t: Transition, w: f64) -> PopulationVector {
    let (a, b) = (t.from.index(), t.to.index());
    let mut out = *p.as_array();
    let (pa, pb) = (out[a], out[b]);
    out[a] = (1.0 - w) * pa + w * pb;
    out[b] = (1.0 - w) * pb + w * pa;
    PopulationVector::from_raw(out)
}

pub fn apply_pulse(
    p: &PopulationVector,
    pulse: &Pulse,
    rates: &PumpRates,
) -> Result<PopulationVector, SequenceError> {
    pulse.validate()?;
    match pulse.kind {
        PulseKind::Laser { duration } => Ok(propagate(p, rates, rates.effective_time(duration))?),
        PulseKind::MwPi { transition, angle_error } | PulseKind::RfPi { transition, angle_error } => {
            Ok(exchange(p, transition, swap_weight(angle_error)))
        }
        PulseKind::Delay { .. } => Ok(*p),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseSequence {
    pub name: String,
    pulses: Vec<Pulse>,
}

impl PulseSequence {
    pub fn new(name: &str, pulses: Vec<Pulse>) -> Result<Self, SequenceError> {
        for p in &pulses {
            p.validate()?;
        }
        Ok(PulseSequence { name: name.to_string(), pulses })
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Same sequence with one rotation pulse's angle error replaced.
    pub fn with_angle_error(&self, index: usize, err: f64) -> Option<PulseSequence> {
        let target = self.pulses.get(index)?;
        if !target.is_rotation() {
            return None;
        }
        let mut pulses = self.pulses.clone();
        pulses[index] = target.with_angle_error(err);
        Some(PulseSequence { name: self.name.clone(), pulses })
    }

    /// Drops a leading laser pulse, if present.
    pub fn without_leading_laser(&self) -> PulseSequence {
        let skip = matches!(self.pulses.first().map(|p| &p.kind), Some(PulseKind::Laser { .. }));
        PulseSequence {
            name: self.name.clone(),
            pulses: self.pulses[usize::from(skip)..].to_vec(),
        }
    }

    /// One-pulse-per-line text form; see [`FromStr`] for the grammar.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(s, "NAME {}", self.name);
        }
        for p in &self.pulses {
            let _ = writeln!(s, "{p}");
        }
        s
    }
}

impl fmt::Display for Pulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PulseKind::Laser { duration } => write!(f, "LASER {duration}")?,
            PulseKind::Delay { duration } => write!(f, "DELAY {duration}")?,
            PulseKind::MwPi { transition, angle_error } => {
                write!(f, "MW {} {} err={angle_error}", transition.from, transition.to)?
            }
            PulseKind::RfPi { transition, angle_error } => {
                write!(f, "RF {} {} err={angle_error}", transition.from, transition.to)?
            }
        }
        if let Some(d) = self.nominal_us {
            write!(f, " dur={d}")?;
        }
        if let Some(l) = &self.label {
            write!(f, " label={l}")?;
        }
        Ok(())
    }
}

impl FromStr for PulseSequence {
    type Err = SequenceError;

    /// Grammar, one directive per line, `#` starts a comment, keywords are
    /// case-insensitive:
    ///
    /// ```text
    /// NAME  <free text>
    /// LASER <duration_us> [dur=<us>] [label=<name>]
    /// DELAY <duration_us> [label=<name>]
    /// MW    <m_S,m_I> <m_S,m_I> [err=<rad>] [dur=<us>] [label=<name>]
    /// RF    <m_S,m_I> <m_S,m_I> [err=<rad>] [dur=<us>] [label=<name>]
    /// ```
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut name = String::new();
        let mut pulses = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |msg: String| SequenceError::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or("").to_ascii_uppercase();
            if keyword == "NAME" {
                name = line[4..].trim().to_string();
                continue;
            }
            let rest: Vec<&str> = tokens.collect();
            let (positional, options): (Vec<&str>, Vec<&str>) =
                rest.into_iter().partition(|t| !t.contains('='));
            let mut angle_error = 0.0;
            let mut nominal = None;
            let mut label = None;
            for opt in options {
                let (k, v) = opt.split_once('=').expect("partitioned on '='");
                match k.to_ascii_lowercase().as_str() {
                    "err" => {
                        angle_error =
                            v.parse().map_err(|_| err(format!("bad angle error '{v}'")))?
                    }
                    "dur" => {
                        nominal = Some(
                            v.parse::<f64>().map_err(|_| err(format!("bad duration '{v}'")))?,
                        )
                    }
                    "label" => label = Some(v.to_string()),
                    other => return Err(err(format!("unknown option '{other}'"))),
                }
            }
            let number = |s: Option<&&str>| -> Result<f64, SequenceError> {
                let s = s.ok_or_else(|| err("missing duration".into()))?;
                s.parse().map_err(|_| err(format!("bad number '{s}'")))
            };
            let state = |s: Option<&&str>| -> Result<StateLabel, SequenceError> {
                let s = s.ok_or_else(|| err("missing state label".into()))?;
                s.parse().map_err(|e: SpinError| err(e.to_string()))
            };
            let expected_args = match keyword.as_str() {
                "LASER" | "DELAY" => 1,
                "MW" | "RF" => 2,
                other => return Err(err(format!("unknown pulse kind '{other}'"))),
            };
            if positional.len() != expected_args {
                return Err(err(format!(
                    "{keyword} takes {expected_args} argument(s), got {}",
                    positional.len()
                )));
            }
            let kind = match keyword.as_str() {
                "LASER" => PulseKind::Laser { duration: number(positional.first())? },
                "DELAY" => PulseKind::Delay { duration: number(positional.first())? },
                "MW" => PulseKind::MwPi {
                    transition: Transition::new(state(positional.first())?, state(positional.get(1))?),
                    angle_error,
                },
                _ => PulseKind::RfPi {
                    transition: Transition::new(state(positional.first())?, state(positional.get(1))?),
                    angle_error,
                },
            };
            let pulse = Pulse { kind, label, nominal_us: nominal };
            pulse.validate().map_err(|e| err(e.to_string()))?;
            pulses.push(pulse);
        }
        PulseSequence::new(&name, pulses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub final_state: PopulationVector,
    /// Populations after each pulse.
    pub steps: Vec<PopulationVector>,
}

pub fn run_sequence(
    p0: &PopulationVector,
    seq: &PulseSequence,
    rates: &PumpRates,
) -> Result<Trace, SequenceError> {
    let mut state = *p0;
    let mut steps = Vec::with_capacity(seq.len());
    for pulse in seq.pulses() {
        state = apply_pulse(&state, pulse, rates)?;
        steps.push(state);
    }
    Ok(Trace { final_state: state, steps })
}

/// Angle errors (rad) of the rotation pulses in the initialization sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitPulseErrors {
    pub mw1: f64,
    pub mw2: f64,
    pub rf1: f64,
    pub rf2: f64,
    pub mw3: f64,
    pub mw4: f64,
}

/// Initialization sequence:
/// laser(5 µs), MW1 |0,+1⟩↔|+1,+1⟩, MW2 |0,−1⟩↔|−1,−1⟩, RF1 |+1,+1⟩↔|+1,0⟩,
/// RF2 |−1,−1⟩↔|−1,0⟩, laser(τ_L), and with `purify` MW3 |0,−1⟩↔|+1,−1⟩ and
/// MW4 |0,+1⟩↔|+1,+1⟩.
pub fn standard_init_sequence(tau_l: f64, purify: bool, errors: &InitPulseErrors) -> PulseSequence {
    let mw = |m, e, label, dur| {
        let t = Transition::labels(m);
        Pulse::mw(t.from, t.to, e).labeled(label).with_nominal(dur)
    };
    let rf = |m, e, label| {
        let t = Transition::labels(m);
        Pulse::rf(t.from, t.to, e).labeled(label).with_nominal(RF_PI_US)
    };
    let mut pulses = vec![
        Pulse::laser(INIT_LASER_US).labeled("L1"),
        mw([(0, 1), (1, 1)], errors.mw1, "MW1", MW1_PI_US),
        mw([(0, -1), (-1, -1)], errors.mw2, "MW2", MW2_PI_US),
        rf([(1, 1), (1, 0)], errors.rf1, "RF1"),
        rf([(-1, -1), (-1, 0)], errors.rf2, "RF2"),
        Pulse::laser(tau_l).labeled("L2"),
    ];
    if purify {
        pulses.push(mw([(0, -1), (1, -1)], errors.mw3, "MW3", MW_PURIFY_PI_US));
        pulses.push(mw([(0, 1), (1, 1)], errors.mw4, "MW4", MW_PURIFY_PI_US));
    }
    let name = if purify { "init+purify" } else { "init" };
    PulseSequence::new(name, pulses).expect("standard sequence obeys selection rules")
}

/// How the state before the sequence is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StartMode {
    /// Start fully depolarized and simulate the first laser pulse.
    #[default]
    Simulated,
    /// Assume the first laser pulse produced (1,1,1,0,…)/3 exactly; it is skipped.
    Ideal,
}

/// Initial populations and the sequence to actually run for a start mode.
pub fn prepare_start(mode: StartMode, seq: &PulseSequence) -> (PopulationVector, PulseSequence) {
    match mode {
        StartMode::Simulated => (PopulationVector::depolarized(), seq.clone()),
        StartMode::Ideal => (PopulationVector::electron_polarized(), seq.without_leading_laser()),
    }
}
