//! Truncated Newton minimization of the objective for a fixed basis set.
//!
//! Each outer step solves `(∇²E + λI) d = -∇E` approximately with a Krylov
//! method driven only by Hessian-vector products, then backtracks along `d`
//! until the Armijo condition holds.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Columns;
use crate::objective::{eval_objective, hessian_vec, EvalResult, ObjectiveContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TronConfig {
    /// Stop once `‖∇E‖ ≤ grad_tol · max(1, ‖∇E(β⁰)‖)`.
    pub grad_tol: f64,
    pub max_newton_iters: usize,
    /// Inner solve stops at `‖H d - rhs‖ ≤ cg_rel_tol · ‖rhs‖`.
    pub cg_rel_tol: f64,
    pub cg_max_iters: usize,
    pub ls_backtrack: f64,
    pub ls_armijo: f64,
    pub ls_max_steps: usize,
    /// Relative ridge added to the Hessian operator, scaled by the mean of diag(K_{J,J}).
    pub damping: f64,
}

impl Default for TronConfig {
    fn default() -> Self {
        TronConfig {
            grad_tol: 1e-3,
            max_newton_iters: 50,
            cg_rel_tol: 0.1,
            cg_max_iters: 200,
            ls_backtrack: 0.5,
            ls_armijo: 1e-4,
            ls_max_steps: 30,
            damping: 1e-12,
        }
    }
}

impl TronConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.grad_tol, self.cg_rel_tol];
        if positive.iter().any(|&x| !(x > 0.0)) || self.max_newton_iters == 0 || self.cg_max_iters == 0 {
            return Err(Error::InvalidConfig("TRON tolerances and iteration caps must be positive".into()));
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.ls_backtrack) || !unit(self.ls_armijo) {
            return Err(Error::InvalidConfig("line-search factors must lie in (0, 1)".into()));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::InvalidConfig("damping must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Result of one inner Krylov solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub direction: Vec<f64>,
    pub iterations: usize,
    /// `‖H d_m - rhs‖` for `m = 0, 1, …` (starting from `d_0 = 0`).
    pub residual_norms: Vec<f64>,
    /// Non-finite or nonpositive curvature was met before any progress; the
    /// direction is `rhs` itself.
    pub breakdown: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Approximately solves `H d = rhs` for a symmetric positive (semi)definite
/// operator by conjugate residuals, the member of the conjugate-gradient
/// family whose residual norm never increases.
///
/// Every iteration costs one operator application.
pub fn cg_solve<F>(mut hess: F, rhs: &[f64], cfg: &TronConfig) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let rhs_norm = norm(rhs);
    let mut residual_norms = vec![rhs_norm];
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            direction: x,
            iterations: 0,
            residual_norms,
            breakdown: false,
        });
    }
    let target = cfg.cg_rel_tol * rhs_norm;

    let ar = hess(&r)?;
    let mut p = r.clone();
    let mut r_ar = dot(&r, &ar);
    let mut ap = ar;
    let mut iterations = 0;

    while iterations < cfg.cg_max_iters {
        let ap_ap = dot(&ap, &ap);
        if !(r_ar > 0.0) || !r_ar.is_finite() || !(ap_ap > 0.0) || !ap_ap.is_finite() {
            if iterations == 0 {
                warn!("Krylov breakdown on first iteration; using steepest descent");
                return Ok(CgOutcome {
                    direction: rhs.to_vec(),
                    iterations,
                    residual_norms,
                    breakdown: true,
                });
            }
            break;
        }
        let alpha = r_ar / ap_ap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        let rn = norm(&r);
        residual_norms.push(rn);
        if rn <= target {
            break;
        }
        let ar_next = hess(&r)?;
        let r_ar_next = dot(&r, &ar_next);
        let beta = r_ar_next / r_ar;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar_next[i] + beta * ap[i];
        }
        r_ar = r_ar_next;
    }
    Ok(CgOutcome {
        direction: x,
        iterations,
        residual_norms,
        breakdown: false,
    })
}

/// One accepted Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TronStep {
    pub value_before: f64,
    pub value_after: f64,
    /// Gradient norm at the start of the step.
    pub grad_norm: f64,
    pub cg_iterations: usize,
    pub step: f64,
    /// `∇Eᵀd` at the start of the step.
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct TronOutcome {
    pub beta: Vec<f64>,
    /// Objective state at `beta`.
    pub at: EvalResult,
    pub steps: Vec<TronStep>,
    pub converged: bool,
    pub line_search_failed: bool,
}

impl TronOutcome {
    pub fn value(&self) -> f64 {
        self.at.value
    }
}

fn mean_diagonal<K: Columns>(cols: &K) -> f64 {
    let d = cols.n_cols();
    if d == 0 {
        return 0.0;
    }
    (0..d).map(|c| cols.column(c)[cols.basis_index(c)]).sum::<f64>() / d as f64
}

/// Minimizes the objective from `beta_init`. Never increases the objective.
pub fn minimize<K: Columns>(ctx: &ObjectiveContext<'_, K>, beta_init: &[f64], cfg: &TronConfig) -> Result<TronOutcome> {
    let at = eval_objective(ctx, beta_init)?;
    minimize_from(ctx, beta_init.to_vec(), at, cfg)
}

/// As [`minimize`], reusing an evaluation already made at `beta`.
pub fn minimize_from<K: Columns>(
    ctx: &ObjectiveContext<'_, K>,
    mut beta: Vec<f64>,
    mut at: EvalResult,
    cfg: &TronConfig,
) -> Result<TronOutcome> {
    cfg.validate()?;
    if !at.value.is_finite() {
        return Err(Error::Diverged(format!("objective is {} at the starting point", at.value)));
    }
    let tol = cfg.grad_tol * norm(&at.grad).max(1.0);
    let lambda = cfg.damping * mean_diagonal(ctx.columns).max(1.0);
    let mut steps = Vec::new();
    let mut converged = false;
    let mut line_search_failed = false;

    for _ in 0..cfg.max_newton_iters {
        let grad_norm = norm(&at.grad);
        if grad_norm <= tol {
            converged = true;
            break;
        }
        let rhs: Vec<f64> = at.grad.iter().map(|g| -g).collect();
        let inner = cg_solve(
            |v| {
                let mut hv = hessian_vec(ctx, &at, v)?;
                axpy(lambda, v, &mut hv);
                Ok(hv)
            },
            &rhs,
            cfg,
        )?;
        let mut direction = inner.direction;
        let mut slope = dot(&at.grad, &direction);
        if !(slope < 0.0) {
            direction = rhs;
            slope = -grad_norm * grad_norm;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.ls_max_steps {
            let mut trial = beta.clone();
            axpy(t, &direction, &mut trial);
            let next = eval_objective(ctx, &trial)?;
            if next.value <= at.value + cfg.ls_armijo * t * slope {
                accepted = Some((trial, next));
                break;
            }
            t *= cfg.ls_backtrack;
        }
        let Some((trial, next)) = accepted else {
            warn!("line search failed after {} halvings at ‖∇E‖ = {grad_norm:.3e}", cfg.ls_max_steps);
            line_search_failed = true;
            break;
        };
        steps.push(TronStep {
            value_before: at.value,
            value_after: next.value,
            grad_norm,
            cg_iterations: inner.iterations,
            step: t,
            slope,
        });
        beta = trial;
        at = next;
    }
    if !converged && !line_search_failed && norm(&at.grad) <= tol {
        converged = true;
    }
    Ok(TronOutcome {
        beta,
        at,
        steps,
        converged,
        line_search_failed,
    })
}
