//! Weighted nonlinear least-squares estimation of the pump rates from
//! amplitude-vs-τ_L data.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmFailure, LmOptions};
use super::observations::{Observation, ObservationSet};
use super::{predict_observables, AnalysisError};
use crate::kinetics::{FlipModel, PopulationVector, PumpRates};

/// Minimum number of τ_L rows and the minimum max/min ratio of the grid.
pub const MIN_ROWS: usize = 6;
pub const MIN_SPAN_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub fit_tau_d: bool,
    /// Rescale the data so that A_−1 + A_+1 + A_0 + 3·P(−1,0) = 1 on average.
    pub normalize: bool,
    /// State before the second laser pulse.
    pub initial: PopulationVector,
    pub lm: LmOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fit_tau_d: false,
            normalize: false,
            initial: PopulationVector::swap_initialized(),
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub k_s: f64,
    pub k_i: f64,
    pub tau_d: f64,
    pub flip_model: FlipModel,
    /// Covariance of (k_S, k_I, τ_d); the τ_d row and column are zero when it was held fixed.
    pub covariance: [[f64; 3]; 3],
    pub std_errors: [f64; 3],
    /// ‖r‖ of the weighted residuals at the optimum.
    pub residual_norm: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub n_values: usize,
    pub n_params: usize,
    /// Factor the data were divided by before fitting (1 without normalization).
    pub normalization: f64,
    pub tau_d_fitted: bool,
}

impl FitResult {
    pub fn rates(&self, template: &PumpRates) -> PumpRates {
        PumpRates { k_s: self.k_s, k_i: self.k_i, tau_d: self.tau_d, flip_model: self.flip_model, ..*template }
    }

    /// 1/k_S and its standard error (µs).
    pub fn electron_time(&self) -> (f64, f64) {
        (1.0 / self.k_s, self.std_errors[0] / (self.k_s * self.k_s))
    }

    /// 1/k_I and its standard error (µs).
    pub fn nuclear_time(&self) -> (f64, f64) {
        (1.0 / self.k_i, self.std_errors[1] / (self.k_i * self.k_i))
    }

    pub fn rss(&self) -> f64 {
        self.residual_norm * self.residual_norm
    }

    /// Small-sample corrected Akaike information criterion on the weighted RSS.
    pub fn aicc(&self) -> f64 {
        let n = self.n_values as f64;
        let k = self.n_params as f64;
        let rss = self.rss().max(f64::MIN_POSITIVE);
        n * (rss / n).ln() + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0).max(1.0)
    }
}

fn observed(row: &Observation, with_rabi: bool) -> impl Iterator<Item = f64> {
    [Some(row.a_m1), Some(row.a_p1), Some(row.a_0), if with_rabi { row.p_m1_0 } else { None }]
        .into_iter()
        .flatten()
}

/// Mean of A_−1 + A_+1 + A_0 + 3·P(−1,0) over rows; the model value is exactly 1
/// for the swap-initialized start (P(+1,0) = P(−1,0), P(±1,±1) = 0).
pub fn normalization_factor(data: &ObservationSet) -> Result<f64, AnalysisError> {
    if !data.has_rabi() {
        return Err(AnalysisError::InvalidData("normalization needs the P_m1_0 column".into()));
    }
    let sum: f64 = data
        .rows()
        .iter()
        .map(|r| r.a_m1 + r.a_p1 + r.a_0 + 3.0 * r.p_m1_0.unwrap_or(0.0))
        .sum();
    let f = sum / data.len() as f64;
    if !(f > 0.0) {
        return Err(AnalysisError::InvalidData(format!("normalization factor {f} is not positive")));
    }
    Ok(f)
}

fn check_design(data: &ObservationSet) -> Result<(), AnalysisError> {
    if data.len() < MIN_ROWS {
        return Err(AnalysisError::InvalidData(format!(
            "need at least {MIN_ROWS} rows, got {}",
            data.len()
        )));
    }
    let first = data.rows()[0].tau_l;
    let last = data.rows()[data.len() - 1].tau_l;
    if first > 0.0 && last / first < MIN_SPAN_RATIO {
        return Err(AnalysisError::InvalidData("tau_L grid must span at least one decade".into()));
    }
    Ok(())
}

pub fn fit_rates(
    data: &ObservationSet,
    guess: &PumpRates,
    opts: &FitOptions,
) -> Result<FitResult, AnalysisError> {
    guess.validate()?;
    if !(guess.k_i > 0.0) {
        return Err(AnalysisError::InvalidData("initial k_I must be > 0 for a log-space fit".into()));
    }
    check_design(data)?;
    let with_rabi = data.has_rabi();
    let norm = if opts.normalize { normalization_factor(data)? } else { 1.0 };

    let mut targets = Vec::with_capacity(data.value_count());
    let mut weights = Vec::with_capacity(data.value_count());
    for row in data.rows() {
        let w = row.sigma.map_or(1.0, |s| norm / s);
        for v in observed(row, with_rabi) {
            targets.push(v / norm);
            weights.push(w);
        }
    }

    let n_params = if opts.fit_tau_d { 3 } else { 2 };
    let mut x0 = vec![guess.k_s.ln(), guess.k_i.ln()];
    if opts.fit_tau_d {
        x0.push(guess.tau_d);
    }
    let unpack = |x: &DVector<f64>| PumpRates {
        k_s: x[0].exp(),
        k_i: x[1].exp(),
        tau_d: if opts.fit_tau_d { x[2] } else { guess.tau_d },
        ..*guess
    };

    let residuals = |x: &DVector<f64>| -> DVector<f64> {
        let mut rates = unpack(x);
        // negative τ_d trial points are evaluated at the boundary
        rates.tau_d = rates.tau_d.max(0.0);
        let mut out = DVector::zeros(targets.len());
        let mut i = 0;
        for row in data.rows() {
            let pred = match predict_observables(&rates, row.tau_l, &opts.initial) {
                Ok(p) => p,
                Err(_) => return DVector::from_element(targets.len(), f64::NAN),
            };
            let model = [Some(pred.a_m1), Some(pred.a_p1), Some(pred.a_0), with_rabi.then_some(pred.p_m1_0)];
            for m in model.into_iter().flatten() {
                out[i] = (m - targets[i]) * weights[i];
                i += 1;
            }
        }
        out
    };

    let report = minimize(residuals, DVector::from_vec(x0), &opts.lm).map_err(|e| match e {
        LmFailure::NonConvergence { iterations, cost } => AnalysisError::NonConvergence { iterations, cost },
        LmFailure::SingularJacobian => AnalysisError::SingularJacobian,
        LmFailure::NonFinite => AnalysisError::InvalidData("model produced non-finite residuals".into()),
    })?;

    let best = unpack(&report.x);
    let n = targets.len();
    let jt_j = report.jacobian.transpose() * &report.jacobian;
    let inv = jt_j.try_inverse().ok_or(AnalysisError::SingularJacobian)?;
    let rss = report.residuals.norm_squared();
    // absolute weights when σ is given, otherwise scale by the residual variance
    let scale = if data.has_sigma() { 1.0 } else { rss / (n.saturating_sub(n_params)).max(1) as f64 };
    let mut grad = DMatrix::<f64>::zeros(n_params, n_params);
    grad[(0, 0)] = best.k_s;
    grad[(1, 1)] = best.k_i;
    if opts.fit_tau_d {
        grad[(2, 2)] = 1.0;
    }
    let cov_p = &grad * inv * &grad * scale;
    let mut cov = Matrix3::<f64>::zeros();
    for i in 0..n_params {
        for j in 0..n_params {
            cov[(i, j)] = cov_p[(i, j)];
        }
    }
    let covariance: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| cov[(i, j)]));
    let std_errors = std::array::from_fn(|i| cov[(i, i)].max(0.0).sqrt());

    Ok(FitResult {
        k_s: best.k_s,
        k_i: best.k_i,
        tau_d: best.tau_d.max(0.0),
        flip_model: guess.flip_model,
        covariance,
        std_errors,
        residual_norm: rss.sqrt(),
        residuals: report.residuals.iter().copied().collect(),
        iterations: report.iterations,
        n_values: n,
        n_params,
        normalization: norm,
        tau_d_fitted: opts.fit_tau_d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub all_pairs: FitResult,
    pub nearest_neighbor: FitResult,
    /// AICc(nearest-neighbor) − AICc(all-pairs); positive favours all-pairs.
    pub delta_aicc: f64,
    /// False when the two variants predict identical data for this initial state.
    pub distinguishable: bool,
    /// Lower-AICc variant; `None` when the variants are indistinguishable.
    pub preferred: Option<FlipModel>,
}

/// Whether the all-pairs and nearest-neighbor variants can produce different
/// trajectories from `p`.
///
/// The only dynamical difference is the direct (0,−1) ↔ (0,+1) exchange, which
/// acts on d = P(0,−1) − P(0,+1). d stays zero for all t exactly when it starts
/// at zero and the m_S = ±1 populations feeding m_I = −1 and +1 are equal.
pub fn flip_models_distinguishable(p: &PopulationVector) -> bool {
    const TOL: f64 = 1e-12;
    let d = p.get(0, -1) - p.get(0, 1);
    let feed = p.get(-1, -1) + p.get(1, -1) - p.get(-1, 1) - p.get(1, 1);
    d.abs() > TOL || feed.abs() > TOL
}

/// Fits both nuclear-flip variants and picks the one with lower AICc.
pub fn compare_flip_models(
    data: &ObservationSet,
    guess: &PumpRates,
    opts: &FitOptions,
) -> Result<ModelComparison, AnalysisError> {
    let all_pairs = fit_rates(data, &PumpRates { flip_model: FlipModel::AllPairs, ..*guess }, opts)?;
    let nearest_neighbor =
        fit_rates(data, &PumpRates { flip_model: FlipModel::NearestNeighbor, ..*guess }, opts)?;
    let delta_aicc = nearest_neighbor.aicc() - all_pairs.aicc();
    let distinguishable = flip_models_distinguishable(&opts.initial);
    if !distinguishable {
        log::warn!("flip models are indistinguishable from this initial state");
    }
    let preferred = distinguishable.then_some(if delta_aicc >= 0.0 {
        FlipModel::AllPairs
    } else {
        FlipModel::NearestNeighbor
    });
    Ok(ModelComparison { all_pairs, nearest_neighbor, delta_aicc, distinguishable, preferred })
}

/// Noise-free observations predicted by `rates` on a τ_L grid.
pub fn synthesize_observations(
    rates: &PumpRates,
    taus: &[f64],
    initial: &PopulationVector,
    with_rabi: bool,
) -> Result<ObservationSet, AnalysisError> {
    let rows = taus
        .iter()
        .map(|&tau| {
            let p = predict_observables(rates, tau, initial)?;
            Ok(Observation {
                tau_l: tau,
                a_m1: p.a_m1,
                a_p1: p.a_p1,
                a_0: p.a_0,
                p_m1_0: with_rabi.then_some(p.p_m1_0),
                sigma: None,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    ObservationSet::new(rows)
}

/// `n` log-spaced points between `lo` and `hi`, inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_recovery_noise_free() {
        let truth = PumpRates::default();
        let data = synthesize_observations(&truth, &log_grid(0.005, 10.0, 20), &PopulationVector::swap_initialized(), true)
            .unwrap();
        let guess = PumpRates { k_s: 2.0, k_i: 0.1, ..truth };
        let fit = fit_rates(&data, &guess, &FitOptions::default()).unwrap();
        assert!(((fit.k_s - truth.k_s) / truth.k_s).abs() < 1e-6);
        assert!(((fit.k_i - truth.k_i) / truth.k_i).abs() < 1e-6);
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn exact_recovery_with_tau_d() {
        let truth = PumpRates::default();
        let data = synthesize_observations(&truth, &log_grid(0.005, 10.0, 25), &PopulationVector::swap_initialized(), true)
            .unwrap();
        let guess = PumpRates { k_s: 3.0, k_i: 0.15, tau_d: 0.03, ..truth };
        let opts = FitOptions { fit_tau_d: true, ..Default::default() };
        let fit = fit_rates(&data, &guess, &opts).unwrap();
        assert!(((fit.k_s - truth.k_s) / truth.k_s).abs() < 1e-6, "{}", fit.k_s);
        assert!(((fit.k_i - truth.k_i) / truth.k_i).abs() < 1e-6);
        assert!((fit.tau_d - truth.tau_d).abs() < 1e-6);
    }

    #[test]
    fn rejects_short_or_narrow_grids() {
        let truth = PumpRates::default();
        let init = PopulationVector::swap_initialized();
        let few = synthesize_observations(&truth, &[0.1, 0.2, 0.3], &init, false).unwrap();
        assert!(matches!(fit_rates(&few, &truth, &FitOptions::default()), Err(AnalysisError::InvalidData(_))));
        let narrow = synthesize_observations(&truth, &log_grid(1.0, 2.0, 8), &init, false).unwrap();
        assert!(fit_rates(&narrow, &truth, &FitOptions::default()).is_err());
    }

    #[test]
    fn flat_regime_is_singular() {
        // every point inside the onset delay: nothing depends on the rates
        let truth = PumpRates { tau_d: 0.2, ..Default::default() };
        let init = PopulationVector::swap_initialized();
        let data = synthesize_observations(&truth, &log_grid(0.001, 0.15, 8), &init, true).unwrap();
        let r = fit_rates(&data, &truth, &FitOptions::default());
        assert!(matches!(r, Err(AnalysisError::SingularJacobian)), "{r:?}");
    }

    #[test]
    fn normalization_undoes_contrast() {
        let truth = PumpRates::default();
        let init = PopulationVector::swap_initialized();
        let clean = synthesize_observations(&truth, &log_grid(0.005, 10.0, 20), &init, true).unwrap();
        let scaled = ObservationSet::new(
            clean
                .rows()
                .iter()
                .map(|r| Observation {
                    a_m1: 0.8 * r.a_m1,
                    a_p1: 0.8 * r.a_p1,
                    a_0: 0.8 * r.a_0,
                    p_m1_0: r.p_m1_0.map(|p| 0.8 * p),
                    ..*r
                })
                .collect(),
        )
        .unwrap();
        assert!((normalization_factor(&clean).unwrap() - 1.0).abs() < 1e-12);
        assert!((normalization_factor(&scaled).unwrap() - 0.8).abs() < 1e-12);
        let opts = FitOptions { normalize: true, ..Default::default() };
        let fit = fit_rates(&scaled, &PumpRates { k_s: 2.0, k_i: 0.3, ..truth }, &opts).unwrap();
        assert!(((fit.k_s - truth.k_s) / truth.k_s).abs() < 1e-6);
        assert!(((fit.k_i - truth.k_i) / truth.k_i).abs() < 1e-6);
        let no_rabi = synthesize_observations(&truth, &log_grid(0.005, 10.0, 20), &init, false).unwrap();
        assert!(fit_rates(&no_rabi, &truth, &opts).is_err());
    }

    #[test]
    fn generating_model_is_preferred() {
        let init = asymmetric_start();
        let grid = log_grid(0.005, 10.0, 20);
        let opts = FitOptions { initial: init, ..Default::default() };
        for model in [FlipModel::AllPairs, FlipModel::NearestNeighbor] {
            let truth = PumpRates { flip_model: model, ..Default::default() };
            let data = synthesize_observations(&truth, &grid, &init, true).unwrap();
            let cmp = compare_flip_models(&data, &PumpRates::default(), &opts).unwrap();
            assert!(cmp.distinguishable);
            assert_eq!(cmp.preferred, Some(model));
        }
    }

    #[test]
    fn swap_start_cannot_separate_models() {
        let init = PopulationVector::swap_initialized();
        assert!(!flip_models_distinguishable(&init));
        assert!(flip_models_distinguishable(&asymmetric_start()));
        let truth = PumpRates { flip_model: FlipModel::NearestNeighbor, ..Default::default() };
        let data = synthesize_observations(&truth, &log_grid(0.005, 10.0, 20), &init, true).unwrap();
        let cmp = compare_flip_models(&data, &PumpRates::default(), &FitOptions::default()).unwrap();
        assert_eq!(cmp.preferred, None);
        assert!(((cmp.all_pairs.k_i - truth.k_i) / truth.k_i).abs() < 1e-6);
    }

    fn asymmetric_start() -> PopulationVector {
        PopulationVector::new([0.3, 0.0, 0.2, 0.0, 0.0, 0.25, 0.0, 0.0, 0.25]).unwrap()
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.005, 10.0, 20);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.005).abs() < 1e-15 && (g[19] - 10.0).abs() < 1e-12);
    }
}
