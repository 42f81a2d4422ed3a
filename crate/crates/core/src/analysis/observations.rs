//! Amplitude-vs-pulse-length data sets and their CSV form
//! `tau_us,A_m1,A_p1,A_0[,P_m1_0][,sigma]`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Commanded second-laser duration (µs).
    pub tau_l: f64,
    pub a_m1: f64,
    pub a_p1: f64,
    pub a_0: f64,
    /// P(−1,0) from the Rabi readout, when measured.
    pub p_m1_0: Option<f64>,
    /// Standard deviation applied to every value of the row.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationSet {
    rows: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(rows: Vec<Observation>) -> Result<Self, AnalysisError> {
        let bad = |msg: String| Err(AnalysisError::InvalidData(msg));
        for (i, r) in rows.iter().enumerate() {
            if !(r.tau_l >= 0.0) {
                return bad(format!("row {i}: tau_L must be >= 0"));
            }
            for v in [Some(r.a_m1), Some(r.a_p1), Some(r.a_0), r.p_m1_0].into_iter().flatten() {
                if !(-1.0..=1.0).contains(&v) {
                    return bad(format!("row {i}: value {v} outside [-1, 1]"));
                }
            }
            if let Some(s) = r.sigma {
                if !(s > 0.0) {
                    return bad(format!("row {i}: sigma must be > 0"));
                }
            }
        }
        if rows.windows(2).any(|w| !(w[1].tau_l > w[0].tau_l)) {
            return bad("tau_L must be strictly increasing".into());
        }
        let with_p = rows.iter().filter(|r| r.p_m1_0.is_some()).count();
        if with_p != 0 && with_p != rows.len() {
            return bad("P_m1_0 must be given for all rows or none".into());
        }
        let with_sigma = rows.iter().filter(|r| r.sigma.is_some()).count();
        if with_sigma != 0 && with_sigma != rows.len() {
            return bad("sigma must be given for all rows or none".into());
        }
        Ok(ObservationSet { rows })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_rabi(&self) -> bool {
        self.rows.first().is_some_and(|r| r.p_m1_0.is_some())
    }

    pub fn has_sigma(&self) -> bool {
        self.rows.first().is_some_and(|r| r.sigma.is_some())
    }

    /// Number of scalar values a fit is made against.
    pub fn value_count(&self) -> usize {
        self.rows.len() * if self.has_rabi() { 4 } else { 3 }
    }

    pub fn header(&self) -> String {
        let mut h = String::from("tau_us,A_m1,A_p1,A_0");
        if self.has_rabi() {
            h.push_str(",P_m1_0");
        }
        if self.has_sigma() {
            h.push_str(",sigma");
        }
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        for r in &self.rows {
            let mut line = [r.tau_l, r.a_m1, r.a_p1, r.a_0]
                .iter()
                .map(|v| crate::fmt_sig(*v))
                .collect::<Vec<_>>()
                .join(",");
            for v in [r.p_m1_0, r.sigma].into_iter().flatten() {
                line.push(',');
                line.push_str(&crate::fmt_sig(v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, AnalysisError> {
        let mut lines = input.lines().map(|l| l.map_err(|e| AnalysisError::Csv(e.to_string())));
        let header = loop {
            match lines.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() && !l.trim_start().starts_with('#') {
                        break l;
                    }
                }
                None => return Err(AnalysisError::Csv("empty file".into())),
            }
        };
        let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let has_p = match cols.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["tau_us", "A_m1", "A_p1", "A_0"] => (false, false),
            ["tau_us", "A_m1", "A_p1", "A_0", "P_m1_0"] => (true, false),
            ["tau_us", "A_m1", "A_p1", "A_0", "sigma"] => (false, true),
            ["tau_us", "A_m1", "A_p1", "A_0", "P_m1_0", "sigma"] => (true, true),
            _ => {
                return Err(AnalysisError::Csv(format!(
                    "header must be tau_us,A_m1,A_p1,A_0[,P_m1_0][,sigma]; got '{header}'"
                )))
            }
        };
        let (with_p, with_sigma) = has_p;
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| AnalysisError::Csv(format!("line {}: non-numeric value", n + 2)))?;
            if vals.len() != cols.len() {
                return Err(AnalysisError::Csv(format!(
                    "line {}: expected {} columns, got {}",
                    n + 2,
                    cols.len(),
                    vals.len()
                )));
            }
            rows.push(Observation {
                tau_l: vals[0],
                a_m1: vals[1],
                a_p1: vals[2],
                a_0: vals[3],
                p_m1_0: with_p.then(|| vals[4]),
                sigma: with_sigma.then(|| vals[vals.len() - 1]),
            });
        }
        ObservationSet::new(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tau: f64) -> Observation {
        Observation { tau_l: tau, a_m1: 0.1, a_p1: 0.1, a_0: 0.2, p_m1_0: Some(0.3), sigma: None }
    }

    #[test]
    fn validation() {
        assert!(ObservationSet::new(vec![row(0.1), row(0.2)]).is_ok());
        assert!(ObservationSet::new(vec![row(0.2), row(0.1)]).is_err());
        assert!(ObservationSet::new(vec![Observation { a_0: 1.5, ..row(0.1) }]).is_err());
        assert!(ObservationSet::new(vec![row(0.1), Observation { p_m1_0: None, ..row(0.2) }]).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let set = ObservationSet::new(vec![row(0.005), row(0.5), row(4.0)]).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("tau_us,A_m1,A_p1,A_0,P_m1_0\n"));
        assert_eq!(ObservationSet::read_csv(&buf[..]).unwrap(), set);
    }

    #[test]
    fn missing_column_rejected() {
        let text = "tau_us,A_m1,A_0\n0.1,0.2,0.3\n";
        assert!(matches!(ObservationSet::read_csv(text.as_bytes()), Err(AnalysisError::Csv(_))));
        let short = "tau_us,A_m1,A_p1,A_0\n0.1,0.2,0.3\n";
        assert!(ObservationSet::read_csv(short.as_bytes()).is_err());
    }

    #[test]
    fn sigma_column() {
        let text = "tau_us,A_m1,A_p1,A_0,sigma\n0.1,0.2,0.3,0.1,0.01\n";
        let set = ObservationSet::read_csv(text.as_bytes()).unwrap();
        assert!(set.has_sigma() && !set.has_rabi());
        assert_eq!(set.rows()[0].sigma, Some(0.01));
    }
}
