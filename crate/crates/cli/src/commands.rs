//! Subcommand implementations.

use std::io::BufReader;
use std::path::Path;

use nvpol::analysis::fit::log_grid;
use nvpol::analysis::{
    compare_flip_models, fit_rates, initial_state_sensitivity, optimize_pulse_duration,
    predict_observables, pulse_angle_sensitivity, simplex_grid, stationarity_residual, subspace_purity,
    swap_init_stationary_time, FitOptions, FitResult, Observables, Observation, ObservationSet,
};
use nvpol::kinetics::{PopulationVector, PumpRates};
use nvpol::pulse::{prepare_start, run_sequence, standard_init_sequence, InitPulseErrors, PulseSequence, StartMode};
use nvpol::readout::{
    calibrate, extract_line_amplitudes, extract_rabi_population, rabi_bias, rabi_signal, ramsey_line_frequencies,
    ramsey_signal, spectrum as compute_spectrum, LineAmplitudes, TimeSeries,
};
use nvpol::spin::{StateLabel, BASIS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{kv, kvf, out_path, write_json, write_text, Table};
use crate::CliError;

/// Reference optimum the model output is compared against.
const REFERENCE_TAU_US: f64 = 0.48;
const REFERENCE_P00: f64 = 0.778;

fn start_mode(cfg: &RunConfig) -> StartMode {
    if cfg.ideal_start {
        StartMode::Ideal
    } else {
        StartMode::Simulated
    }
}

fn column_name(l: &StateLabel) -> String {
    let tag = |m: i8| match m {
        -1 => "m1",
        1 => "p1",
        _ => "0",
    };
    format!("P_{}_{}", tag(l.m_s()), tag(l.m_i()))
}

fn population_header() -> Vec<String> {
    BASIS.iter().map(column_name).collect()
}

fn validate_rates(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.rates.validate()?;
    cfg.spin.validate().map_err(|e| CliError::Physics(e.to_string()))
}

fn optimal_tau(rates: &PumpRates) -> Result<f64, CliError> {
    Ok(optimize_pulse_duration(rates, &PopulationVector::swap_initialized())?.commanded)
}

fn tau_or_optimal(cfg: &RunConfig, tau_l: Option<f64>) -> Result<f64, CliError> {
    match tau_l {
        Some(t) if !(t >= 0.0) => Err(CliError::Usage(format!("tau_l must be >= 0, got {t}"))),
        Some(t) => Ok(t),
        None => optimal_tau(&cfg.rates),
    }
}

fn load_sequence(path: &Path) -> Result<PulseSequence, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read sequence {}: {e}", path.display())))?;
    text.parse::<PulseSequence>()
        .map_err(|e| CliError::from(e).prefixed(&path.display().to_string()))
}

impl CliError {
    fn prefixed(self, origin: &str) -> CliError {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{origin}: {m}")),
            CliError::Physics(m) => CliError::Physics(format!("{origin}: {m}")),
            CliError::Convergence(m) => CliError::Convergence(format!("{origin}: {m}")),
        }
    }
}

/// Start state and pulses to run for the configured sequence.
fn sequence_for(cfg: &RunConfig, tau_l: f64, purify: bool) -> Result<(PopulationVector, PulseSequence), CliError> {
    let seq = match &cfg.sequence {
        Some(p) => load_sequence(p)?,
        None => standard_init_sequence(tau_l, purify, &InitPulseErrors::default()),
    };
    Ok(prepare_start(start_mode(cfg), &seq))
}

fn add_noise(ts: &TimeSeries, sigma: f64, rng: &mut ChaCha8Rng) -> Result<TimeSeries, CliError> {
    if sigma == 0.0 {
        return Ok(ts.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CliError::Usage(format!("noise: {e}")))?;
    let y = ts.y().iter().map(|&y| y + normal.sample(rng)).collect();
    Ok(TimeSeries::new(ts.t().to_vec(), y)?)
}

fn print_amplitudes(prefix: &str, a: &LineAmplitudes) {
    kvf(&format!("{prefix}A_m1"), a.a_m1);
    kvf(&format!("{prefix}A_p1"), a.a_p1);
    kvf(&format!("{prefix}A_0"), a.a_0);
}

#[derive(Serialize)]
struct SimulationSummary {
    sequence: String,
    tau_l_us: Option<f64>,
    final_populations: Vec<f64>,
    a_m1: f64,
    a_p1: f64,
    a_0: f64,
    p_m1_0: f64,
    p_00: f64,
    subspace_purity: Option<f64>,
}

pub fn simulate(cfg: &RunConfig, tau_l: Option<f64>, purify: bool) -> Result<(), CliError> {
    validate_rates(cfg)?;
    let tau = if cfg.sequence.is_some() { None } else { Some(tau_or_optimal(cfg, tau_l)?) };
    let (p0, seq) = sequence_for(cfg, tau.unwrap_or(0.0), purify)?;
    let trace = run_sequence(&p0, &seq, &cfg.rates)?;

    let header = population_header();
    let mut cols = vec!["step", "pulse"];
    cols.extend(header.iter().map(String::as_str));
    let mut table = Table::new(&cols);
    table.labeled_row(Some("0,start"), p0.as_array());
    for (i, (pulse, p)) in seq.pulses().iter().zip(&trace.steps).enumerate() {
        let name = pulse.label.clone().unwrap_or_else(|| {
            pulse.to_string().split_whitespace().next().unwrap_or("pulse").to_string()
        });
        table.labeled_row(Some(&format!("{},{name}", i + 1)), p.as_array());
    }
    table.write(&out_path(&cfg.out_dir, "trace.csv"))?;

    let fin = trace.final_state;
    let obs = Observables::from_populations(&fin);
    let purity = subspace_purity(&fin).ok();
    kv("sequence", &seq.name);
    if let Some(t) = tau {
        kvf("tau_l_us", t);
    }
    for (name, v) in header.iter().zip(fin.as_array()) {
        kvf(name, *v);
    }
    print_amplitudes("", &LineAmplitudes { a_m1: obs.a_m1, a_p1: obs.a_p1, a_0: obs.a_0 });
    kvf("P_m1_0", obs.p_m1_0);
    kvf("P_00", obs.p_00);
    match purity {
        Some(p) => kvf("subspace_purity", p),
        None => kv("subspace_purity", "undefined"),
    }
    write_json(
        &out_path(&cfg.out_dir, "summary.json"),
        &SimulationSummary {
            sequence: seq.name.clone(),
            tau_l_us: tau,
            final_populations: fin.as_array().to_vec(),
            a_m1: obs.a_m1,
            a_p1: obs.a_p1,
            a_0: obs.a_0,
            p_m1_0: obs.p_m1_0,
            p_00: obs.p_00,
            subspace_purity: purity,
        },
    )
}

pub fn scan(cfg: &RunConfig, tau_min: f64, tau_max: f64, points: usize, log: bool, noise: f64) -> Result<(), CliError> {
    validate_rates(cfg)?;
    if points == 0 {
        return Err(CliError::Usage("points must be >= 1".into()));
    }
    if !(tau_min >= 0.0 && tau_max >= tau_min) {
        return Err(CliError::Usage("need 0 <= tau_min <= tau_max".into()));
    }
    if log && tau_min <= 0.0 {
        return Err(CliError::Usage("logarithmic grid needs tau_min > 0 (or use --linear)".into()));
    }
    if !(noise >= 0.0) {
        return Err(CliError::Usage("noise must be >= 0".into()));
    }
    let grid = if points == 1 {
        vec![tau_min]
    } else if log {
        log_grid(tau_min, tau_max, points)
    } else {
        (0..points).map(|i| tau_min + (tau_max - tau_min) * i as f64 / (points - 1) as f64).collect()
    };
    // the second pulse is modeled from the ideal swap-initialized state
    let p_init = PopulationVector::swap_initialized();
    let mut table = Table::new(&["tau_us", "A_m1", "A_p1", "A_0", "P_m1_0", "P_00"]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, noise).map_err(|e| CliError::Usage(format!("noise: {e}")))?;
    let mut jitter = |v: f64| if noise > 0.0 { (v + normal.sample(&mut rng)).clamp(-1.0, 1.0) } else { v };
    let mut rows = Vec::with_capacity(grid.len());
    let mut best = (0.0, f64::NEG_INFINITY);
    for &tau in &grid {
        let o = predict_observables(&cfg.rates, tau, &p_init)?;
        table.row(&[tau, o.a_m1, o.a_p1, o.a_0, o.p_m1_0, o.p_00]);
        if o.p_00 > best.1 {
            best = (tau, o.p_00);
        }
        rows.push(Observation {
            tau_l: tau,
            a_m1: jitter(o.a_m1),
            a_p1: jitter(o.a_p1),
            a_0: jitter(o.a_0),
            p_m1_0: Some(jitter(o.p_m1_0)),
            sigma: (noise > 0.0).then_some(noise),
        });
    }
    table.write(&out_path(&cfg.out_dir, "scan.csv"))?;
    let set = ObservationSet::new(rows)?;
    let mut buf = Vec::new();
    set.write_csv(&mut buf).map_err(|e| CliError::Usage(e.to_string()))?;
    write_text(&out_path(&cfg.out_dir, "observations.csv"), &String::from_utf8_lossy(&buf))?;
    kv("points", grid.len());
    kvf("grid_max_tau_us", best.0);
    kvf("grid_max_P_00", best.1);
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    electron_time_us: f64,
    electron_time_err_us: f64,
    nuclear_time_us: f64,
    nuclear_time_err_us: f64,
    aicc: f64,
}

fn report(r: &FitResult) -> FitReport<'_> {
    let (ts, es) = r.electron_time();
    let (ti, ei) = r.nuclear_time();
    FitReport {
        result: r,
        electron_time_us: ts,
        electron_time_err_us: es,
        nuclear_time_us: ti,
        nuclear_time_err_us: ei,
        aicc: r.aicc(),
    }
}

fn print_fit(prefix: &str, r: &FitResult) {
    let (ts, es) = r.electron_time();
    let (ti, ei) = r.nuclear_time();
    kv(&format!("{prefix}flip_model"), r.flip_model);
    kvf(&format!("{prefix}k_s"), r.k_s);
    kvf(&format!("{prefix}k_s_err"), r.std_errors[0]);
    kvf(&format!("{prefix}k_i"), r.k_i);
    kvf(&format!("{prefix}k_i_err"), r.std_errors[1]);
    kvf(&format!("{prefix}tau_d"), r.tau_d);
    if r.tau_d_fitted {
        kvf(&format!("{prefix}tau_d_err"), r.std_errors[2]);
    }
    kvf(&format!("{prefix}inv_k_s_us"), ts);
    kvf(&format!("{prefix}inv_k_s_err_us"), es);
    kvf(&format!("{prefix}inv_k_i_us"), ti);
    kvf(&format!("{prefix}inv_k_i_err_us"), ei);
    kvf(&format!("{prefix}residual_norm"), r.residual_norm);
    kv(&format!("{prefix}iterations"), r.iterations);
}

fn write_residuals(path: &Path, data: &ObservationSet, r: &FitResult) -> Result<(), CliError> {
    let mut cols = vec!["tau_us", "r_A_m1", "r_A_p1", "r_A_0"];
    let width = if data.has_rabi() {
        cols.push("r_P_m1_0");
        4
    } else {
        3
    };
    let mut table = Table::new(&cols);
    for (row, res) in data.rows().iter().zip(r.residuals.chunks(width)) {
        let mut vals = vec![row.tau_l];
        vals.extend_from_slice(res);
        table.row(&vals);
    }
    table.write(path)
}

pub fn fit(cfg: &RunConfig, data: &Path, fit_tau_d: bool, normalize: bool, compare: bool) -> Result<(), CliError> {
    validate_rates(cfg)?;
    let file = std::fs::File::open(data)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", data.display())))?;
    let set = ObservationSet::read_csv(BufReader::new(file))
        .map_err(|e| CliError::from(e).prefixed(&data.display().to_string()))?;
    let opts = FitOptions { fit_tau_d, normalize, initial: PopulationVector::swap_initialized(), ..Default::default() };
    let result = fit_rates(&set, &cfg.rates, &opts)?;
    print_fit("", &result);
    write_json(&out_path(&cfg.out_dir, "fit.json"), &report(&result))?;
    write_residuals(&out_path(&cfg.out_dir, "residuals.csv"), &set, &result)?;
    if compare {
        let cmp = compare_flip_models(&set, &cfg.rates, &opts)?;
        print_fit("all.", &cmp.all_pairs);
        print_fit("nn.", &cmp.nearest_neighbor);
        kvf("delta_aicc", cmp.delta_aicc);
        kv("distinguishable", cmp.distinguishable);
        kv("preferred", cmp.preferred.map_or("none".to_string(), |m| m.to_string()));
        #[derive(Serialize)]
        struct Comparison<'a> {
            all_pairs: FitReport<'a>,
            nearest_neighbor: FitReport<'a>,
            delta_aicc: f64,
            distinguishable: bool,
            preferred: Option<String>,
        }
        write_json(
            &out_path(&cfg.out_dir, "comparison.json"),
            &Comparison {
                all_pairs: report(&cmp.all_pairs),
                nearest_neighbor: report(&cmp.nearest_neighbor),
                delta_aicc: cmp.delta_aicc,
                distinguishable: cmp.distinguishable,
                preferred: cmp.preferred.map(|m| m.to_string()),
            },
        )?;
    }
    Ok(())
}

fn readout_state(cfg: &RunConfig, tau_l: Option<f64>) -> Result<(f64, PopulationVector), CliError> {
    validate_rates(cfg)?;
    let tau = tau_or_optimal(cfg, tau_l)?;
    let (p0, seq) = sequence_for(cfg, tau, false)?;
    Ok((tau, run_sequence(&p0, &seq, &cfg.rates)?.final_state))
}

pub fn spectrum(cfg: &RunConfig, tau_l: Option<f64>, noise: f64) -> Result<(), CliError> {
    if !(noise >= 0.0) {
        return Err(CliError::Usage("noise must be >= 0".into()));
    }
    let (tau, p) = readout_state(cfg, tau_l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ts = add_noise(&ramsey_signal(&p, &cfg.spin, &cfg.ramsey)?, noise, &mut rng)?;
    let sp = compute_spectrum(&ts, cfg.spectrum)?;
    let calib = calibrate(&cfg.ramsey, cfg.spectrum)?;
    let lines = ramsey_line_frequencies(&cfg.spin, &cfg.ramsey);
    let got = extract_line_amplitudes(&sp, &lines, &calib)?;
    let mut buf = Vec::new();
    ts.write_csv(&mut buf)?;
    write_text(&out_path(&cfg.out_dir, "ramsey.csv"), &String::from_utf8_lossy(&buf))?;
    buf.clear();
    sp.write_csv(&mut buf)?;
    write_text(&out_path(&cfg.out_dir, "spectrum.csv"), &String::from_utf8_lossy(&buf))?;
    kvf("tau_l_us", tau);
    kvf("line_m1_mhz", lines.m1);
    kvf("line_p1_mhz", lines.p1);
    kvf("line_0_mhz", lines.zero);
    kvf("resolution_mhz", sp.resolution);
    print_amplitudes("", &got);
    print_amplitudes("model_", &LineAmplitudes::from_populations(&p));
    Ok(())
}

pub fn rabi(cfg: &RunConfig, tau_l: Option<f64>, noise: f64) -> Result<(), CliError> {
    if !(noise >= 0.0) {
        return Err(CliError::Usage("noise must be >= 0".into()));
    }
    let (tau, p) = readout_state(cfg, tau_l)?;
    if let Some(b) = rabi_bias(&p) {
        eprintln!("nvpol: warning: P(-1,-1) = {b} biases the Rabi readout");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ts = add_noise(&rabi_signal(&p, cfg.omega1, cfg.rabi_t_max, cfg.rabi_dt)?, noise, &mut rng)?;
    let est = extract_rabi_population(&ts, cfg.omega1)?;
    let mut buf = Vec::new();
    ts.write_csv(&mut buf)?;
    write_text(&out_path(&cfg.out_dir, "rabi.csv"), &String::from_utf8_lossy(&buf))?;
    kvf("tau_l_us", tau);
    kvf("P_m1_0", est);
    kvf("model_P_m1_0", p.get(-1, 0));
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport {
    effective_time_us: f64,
    commanded_tau_us: f64,
    p00_max: f64,
    interior: bool,
    analytic_effective_time_us: Option<f64>,
    stationarity_residual: f64,
    reference_tau_us: f64,
    reference_p00: f64,
    delta_tau_us: f64,
    delta_p00: f64,
}

pub fn optimize(cfg: &RunConfig) -> Result<(), CliError> {
    validate_rates(cfg)?;
    let opt = optimize_pulse_duration(&cfg.rates, &PopulationVector::swap_initialized())?;
    let rep = OptimizeReport {
        effective_time_us: opt.effective_time,
        commanded_tau_us: opt.commanded,
        p00_max: opt.p00_max,
        interior: opt.interior,
        analytic_effective_time_us: swap_init_stationary_time(&cfg.rates),
        stationarity_residual: stationarity_residual(&cfg.rates, opt.effective_time),
        reference_tau_us: REFERENCE_TAU_US,
        reference_p00: REFERENCE_P00,
        delta_tau_us: opt.commanded - REFERENCE_TAU_US,
        delta_p00: opt.p00_max - REFERENCE_P00,
    };
    kvf("effective_time_us", rep.effective_time_us);
    kvf("commanded_tau_us", rep.commanded_tau_us);
    kvf("p00_max", rep.p00_max);
    kv("interior", rep.interior);
    match rep.analytic_effective_time_us {
        Some(t) => kvf("analytic_effective_time_us", t),
        None => kv("analytic_effective_time_us", "none"),
    }
    kvf("stationarity_residual", rep.stationarity_residual);
    kvf("delta_tau_us", rep.delta_tau_us);
    kvf("delta_p00", rep.delta_p00);
    write_json(&out_path(&cfg.out_dir, "optimize.json"), &rep)
}

pub fn sensitivity(cfg: &RunConfig, dtheta: &[f64], grid: usize) -> Result<(), CliError> {
    validate_rates(cfg)?;
    if grid == 0 {
        return Err(CliError::Usage("grid must be >= 1".into()));
    }
    let tau = optimal_tau(&cfg.rates)?;
    let (p0, seq) = sequence_for(cfg, tau, true)?;
    let mut table = Table::new(&["pulse", "dtheta_rad", "delta_P_00", "ratio_to_dtheta_sq_over_4"]);
    for (idx, pulse) in seq.pulses().iter().enumerate().filter(|(_, p)| p.is_rotation()) {
        let name = pulse.label.clone().unwrap_or_else(|| format!("pulse{idx}"));
        for &d in dtheta {
            let loss = pulse_angle_sensitivity(&seq, &cfg.rates, &p0, d, idx)?;
            let ratio = if d == 0.0 { f64::NAN } else { loss / (d * d / 4.0) };
            table.labeled_row(Some(&name), &[d, loss, ratio]);
            kvf(&format!("{name}.dP00[{}]", nvpol::fmt_sig(d)), loss);
        }
    }
    table.write(&out_path(&cfg.out_dir, "sensitivity.csv"))?;

    let model = initial_state_sensitivity(&cfg.rates, &simplex_grid(grid))?;
    let mut t = Table::new(&["P1", "P2", "P_00"]);
    for &(a, b, c) in &model.samples {
        t.row(&[a, b, c]);
    }
    t.write(&out_path(&cfg.out_dir, "initial_state.csv"))?;
    kvf("tau_l_us", model.tau_l);
    kvf("c0", model.c0);
    kvf("c1", model.c1);
    kvf("max_linearity_deviation", model.max_deviation);
    Ok(())
}
