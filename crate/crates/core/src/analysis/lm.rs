//! Small dense Levenberg–Marquardt solver with a central-difference Jacobian.
//!
//! Minimizes ½‖r(x)‖². Steps solve (JᵀJ + λ·diag(JᵀJ))δ = −Jᵀr; a step is
//! accepted only if it lowers the cost, so accepted costs are non-increasing.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the cost by less than this, relatively.
    pub rel_cost_tol: f64,
    /// Stop when ‖Jᵀr‖∞ falls below this.
    pub gradient_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, rel_cost_tol: 1e-10, gradient_tol: 1e-8, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LmFailure {
    NonConvergence { iterations: usize, cost: f64 },
    SingularJacobian,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// ½‖r‖² after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

impl LmReport {
    pub fn cost(&self) -> f64 {
        *self.cost_history.last().expect("history starts with the initial cost")
    }
}

pub fn numeric_jacobian<F>(f: &F, x: &DVector<f64>, r0: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

fn half_sq(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

pub fn minimize<F>(f: F, x0: DVector<f64>, opts: &LmOptions) -> Result<LmReport, LmFailure>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0;
    let mut r = f(&x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(LmFailure::NonFinite);
    }
    let mut jac = numeric_jacobian(&f, &x, &r);
    let mut cost = half_sq(&r);
    let mut history = vec![cost];
    let mut lambda = opts.initial_lambda;

    let singular = |jt_j: &DMatrix<f64>| {
        let sv = jt_j.clone().singular_values();
        let max = sv.max();
        max <= 0.0 || sv.min() <= 1e-14 * max
    };
    if singular(&(jac.transpose() * &jac)) {
        return Err(LmFailure::SingularJacobian);
    }

    for iter in 0..opts.max_iterations {
        let grad = jac.transpose() * &r;
        if grad.amax() < opts.gradient_tol || cost == 0.0 {
            return Ok(LmReport { x, residuals: r, jacobian: jac, cost_history: history, iterations: iter });
        }
        let jt_j = jac.transpose() * &jac;

        // inner loop: raise λ until a step decreases the cost
        let mut accepted = None;
        for _ in 0..60 {
            let mut damped = jt_j.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jt_j[(i, i)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let x_new = &x + &step;
            let r_new = f(&x_new);
            let c_new = if r_new.iter().all(|v| v.is_finite()) { half_sq(&r_new) } else { f64::INFINITY };
            if c_new < cost {
                lambda = (lambda / 3.0).max(1e-12);
                accepted = Some((x_new, r_new, c_new, step));
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }

        let Some((x_new, r_new, c_new, step)) = accepted else {
            // no descent direction left at machine precision: stationary point
            return Ok(LmReport { x, residuals: r, jacobian: jac, cost_history: history, iterations: iter });
        };
        let rel_change = (cost - c_new) / cost.max(f64::MIN_POSITIVE);
        x = x_new;
        r = r_new;
        cost = c_new;
        history.push(cost);
        jac = numeric_jacobian(&f, &x, &r);
        let tiny_step = step.amax() < 1e-14 * (1.0 + x.amax());
        if rel_change < opts.rel_cost_tol || tiny_step {
            return Ok(LmReport { x, residuals: r, jacobian: jac, cost_history: history, iterations: iter + 1 });
        }
    }
    Err(LmFailure::NonConvergence { iterations: opts.max_iterations, cost })
}
