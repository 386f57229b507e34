//! Levenberg-Marquardt for small dense least-squares problems.
//!
//! Each iteration solves `(J'J + lambda D) delta = -J'r`, where `D` is the
//! running maximum of `diag(J'J)`. The damping `lambda` shrinks by
//! `damping_down` after a step that lowers the cost and grows by `damping_up`
//! after one that does not.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    /// Stop when `max |J'r|` drops below this.
    pub gradient_tolerance: f64,
    /// Stop when `|delta| <= tol (|p| + tol)` after an accepted step.
    pub step_tolerance: f64,
    /// Cap on accepted iterations.
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Damping beyond which the normal equations are considered singular.
    pub max_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            max_iterations: 200,
            initial_damping: 1e-9,
            damping_up: 10.0,
            damping_down: 10.0,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Standard errors from `s^2 (J'J)^-1` with `s^2 = |r|^2 / (m - n)`.
    pub param_std: Vec<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    /// Accepted steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// Cost `|r|^2 / 2` after the initial point and after every accepted
    /// step.
    pub cost_history: Vec<f64>,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimises `|residual(p)|^2` starting from `init`.
///
/// `residual` returns the `m` residuals, `jacobian` the `m x n` matrix of
/// their partial derivatives. Numerical trouble (non-finite residuals,
/// singular systems at maximal damping) ends the run with
/// `converged = false` rather than an error; only dimension mismatches and
/// non-finite starting points are errors.
pub fn levenberg_marquardt<R, J>(residual: R, jacobian: J, init: &[f64], opts: &LmOptions) -> Result<FitResult>
where
    R: Fn(&[f64]) -> DVector<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    if init.is_empty() || init.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("initial parameters must be finite and non-empty"));
    }
    let n = init.len();
    let mut p = DVector::from_column_slice(init);
    let mut r = residual(p.as_slice());
    let m = r.len();
    let mut jac = jacobian(p.as_slice());
    if jac.nrows() != m || jac.ncols() != n {
        return Err(Error::domain(format!(
            "jacobian is {}x{}, expected {m}x{n}",
            jac.nrows(),
            jac.ncols()
        )));
    }

    let mut current = cost(&r);
    let mut history = vec![current];
    let mut lambda = opts.initial_damping;
    let mut scale = DVector::<f64>::zeros(n);
    let mut iterations = 0;
    let mut converged = false;

    if current.is_finite() {
        loop {
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &r;
            if grad.iter().any(|g| !g.is_finite()) {
                break;
            }
            if grad.amax() < opts.gradient_tolerance {
                converged = true;
                break;
            }
            if iterations >= opts.max_iterations {
                break;
            }
            for i in 0..n {
                scale[i] = scale[i].max(jtj[(i, i)]).max(f64::MIN_POSITIVE);
            }

            let mut accepted = None;
            while lambda <= opts.max_damping {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * scale[i];
                }
                let step = a.cholesky().map(|c| c.solve(&(-&grad)));
                if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                    let trial = &p + &step;
                    let r_trial = residual(trial.as_slice());
                    let c_trial = cost(&r_trial);
                    if c_trial.is_finite() && c_trial < current {
                        accepted = Some((step, trial, r_trial, c_trial));
                        break;
                    }
                }
                lambda *= opts.damping_up;
            }
            let Some((step, trial, r_trial, c_trial)) = accepted else {
                break;
            };
            iterations += 1;
            lambda = (lambda / opts.damping_down).max(f64::MIN_POSITIVE);
            let small_step = step.norm() <= opts.step_tolerance * (p.norm() + opts.step_tolerance);
            p = trial;
            r = r_trial;
            current = c_trial;
            history.push(current);
            jac = jacobian(p.as_slice());
            if small_step {
                converged = true;
                break;
            }
        }
    }

    let param_std = parameter_std(&jac, r.norm_squared(), m);
    Ok(FitResult {
        params: p.as_slice().to_vec(),
        param_std,
        residual_norm: r.norm(),
        iterations,
        converged,
        cost_history: history,
    })
}

fn parameter_std(jac: &DMatrix<f64>, ssr: f64, m: usize) -> Vec<f64> {
    let n = jac.ncols();
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = ssr / dof;
    let jtj = jac.transpose() * jac;
    let cov = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    (0..n).map(|i| (cov[(i, i)].abs() * s2).sqrt()).collect()
}
