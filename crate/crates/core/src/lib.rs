//! Optical-pumping nuclear polarization of a single NV center with a ¹⁴N spin.
//!
//! - [`spin`]: nine-state basis, energies and transition lines.
//! - [`kinetics`]: laser rate equations, closed-form and matrix-exponential propagators.
//! - [`pulse`]: MW/RF π pulses, laser pulses and sequences.
//! - [`readout`]: synthetic Ramsey and Rabi readout and their inversion.
//! - [`analysis`]: rate fitting, pulse-length optimization and error budgets.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod kinetics;
pub mod pulse;
pub mod readout;
pub mod spin;

/// Formats `x` with 9 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
