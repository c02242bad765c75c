//! Squared-hinge pairwise objective over a basis subset:
//!
//! ```text
//! E(β) = ½ βᵀ K_{J,J} β + (C/2) Σ_{(i,j) ∈ P×N} max(0, 1 - f_i + f_j)²,   f = K_{·,J} β
//! ```
//!
//! Value, gradient and generalized Hessian-vector products are assembled from
//! per-example [`PairStats`] instead of looping over pairs. Expanding the
//! squared residual over each example's violating partners gives
//!
//! ```text
//! loss = (C/2) [ p_β - 2(Σ_P l⁻f - Σ_N l⁺f) + Σ_P l⁻f² + Σ_N l⁺f² - 2 Σ_P f γ⁻(f) ]
//! ∇E   = K_{J,J} β + C K_{·,J}ᵀ g,   g_q = (l⁺_q + l⁻_q) f_q - γ⁺_q(f) - γ⁻_q(f) - (l⁻_q - l⁺_q)
//! ∇²E v = K_{J,J} v + C K_{·,J}ᵀ h,  h_q = (l⁺_q + l⁻_q) s_q - γ⁺_q(s) - γ⁻_q(s),  s = K_{·,J} v
//! ```
//!
//! where positives carry only `l⁻, γ⁻` and negatives only `l⁺, γ⁺`. The
//! Hessian keeps the violating set frozen at the point it was evaluated.
//! [`eval_objective_oracle`] and [`hessian_vec_oracle`] loop over pairs
//! directly and serve as the reference for all of the above.

use crate::error::{Error, Result};
use crate::kernel::Columns;
use crate::pairstats::{PairStats, ViolationIndex};

/// Everything the objective needs besides the coefficients.
pub struct ObjectiveContext<'a, K: Columns> {
    pub columns: &'a K,
    /// Loss weight `C > 0`.
    pub c: f64,
    pub positives: &'a [usize],
    pub negatives: &'a [usize],
}

impl<K: Columns> Clone for ObjectiveContext<'_, K> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<K: Columns> Copy for ObjectiveContext<'_, K> {}

impl<'a, K: Columns> ObjectiveContext<'a, K> {
    pub fn new(columns: &'a K, c: f64, positives: &'a [usize], negatives: &'a [usize]) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
        }
        Ok(ObjectiveContext {
            columns,
            c,
            positives,
            negatives,
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.n_cols()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            })
        }
    }

    /// `K_{J,J} v` read off a full score vector `s = K_{·,J} v`.
    fn basis_rows(&self, s: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|c| s[self.columns.basis_index(c)]).collect()
    }
}

pub(crate) fn gather(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Loss and per-example gradient weights for a fixed score vector.
#[derive(Debug, Clone)]
pub struct LossState {
    pub index: ViolationIndex,
    pub stats: PairStats,
    /// Unweighted pair loss `½ Σ_SV r²` (multiply by `C`).
    pub half_sq_loss: f64,
    /// `g` over all `l` examples (multiply by `C`).
    pub weights: Vec<f64>,
}

impl LossState {
    pub fn new(scores: &[f64], positives: &[usize], negatives: &[usize]) -> Self {
        let f_pos = gather(scores, positives);
        let f_neg = gather(scores, negatives);
        let index = ViolationIndex::build(&f_pos, &f_neg);
        let stats = index.stats(&f_pos, &f_neg);

        let mut linear = 0.0;
        let mut quad = 0.0;
        let mut cross = 0.0;
        let mut weights = vec![0.0; scores.len()];
        for (a, &row) in positives.iter().enumerate() {
            let (l, f, g) = (stats.l_minus[a] as f64, f_pos[a], stats.gamma_minus[a]);
            linear += l * f;
            quad += l * f * f;
            cross += f * g;
            weights[row] = l * f - g - l;
        }
        for (b, &row) in negatives.iter().enumerate() {
            let (l, f, g) = (stats.l_plus[b] as f64, f_neg[b], stats.gamma_plus[b]);
            linear -= l * f;
            quad += l * f * f;
            weights[row] = l * f - g + l;
        }
        let half_sq_loss = 0.5 * (stats.p_beta as f64 - 2.0 * linear + quad - 2.0 * cross);

        LossState {
            index,
            stats,
            half_sq_loss,
            weights,
        }
    }

    /// Generalized-Hessian weights `h` for a direction with scores `s`.
    pub fn curvature_weights(&self, s: &[f64], positives: &[usize], negatives: &[usize]) -> Vec<f64> {
        let s_pos = gather(s, positives);
        let s_neg = gather(s, negatives);
        let (gm, gp) = self.index.gamma(&s_pos, &s_neg);
        let mut h = vec![0.0; s.len()];
        for (a, &row) in positives.iter().enumerate() {
            h[row] = self.stats.l_minus[a] as f64 * s_pos[a] - gm[a];
        }
        for (b, &row) in negatives.iter().enumerate() {
            h[row] = self.stats.l_plus[b] as f64 * s_neg[b] - gp[b];
        }
        h
    }
}

/// Objective value and gradient at one coefficient vector, plus the state
/// needed for Hessian-vector products at that point.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub value: f64,
    pub grad: Vec<f64>,
    /// `K_{·,J} β`
    pub scores: Vec<f64>,
    pub loss: LossState,
}

impl EvalResult {
    pub fn stats(&self) -> &PairStats {
        &self.loss.stats
    }
}

pub fn eval_objective<K: Columns>(ctx: &ObjectiveContext<'_, K>, beta: &[f64]) -> Result<EvalResult> {
    ctx.check_len(beta)?;
    let scores = ctx.columns.scores(beta)?;
    let loss = LossState::new(&scores, ctx.positives, ctx.negatives);
    let kjj_beta = ctx.basis_rows(&scores);
    let reg = 0.5 * beta.iter().zip(&kjj_beta).map(|(b, k)| b * k).sum::<f64>();
    let value = reg + ctx.c * loss.half_sq_loss;

    let kt_g = ctx.columns.transpose_mul(&loss.weights)?;
    let grad = kjj_beta
        .iter()
        .zip(&kt_g)
        .map(|(r, g)| r + ctx.c * g)
        .collect();
    Ok(EvalResult {
        value,
        grad,
        scores,
        loss,
    })
}

/// Generalized Hessian at `at` applied to `v`.
pub fn hessian_vec<K: Columns>(ctx: &ObjectiveContext<'_, K>, at: &EvalResult, v: &[f64]) -> Result<Vec<f64>> {
    ctx.check_len(v)?;
    let s = ctx.columns.scores(v)?;
    let h = at.loss.curvature_weights(&s, ctx.positives, ctx.negatives);
    let kt_h = ctx.columns.transpose_mul(&h)?;
    Ok(ctx
        .basis_rows(&s)
        .iter()
        .zip(&kt_h)
        .map(|(r, x)| r + ctx.c * x)
        .collect())
}

/// Row `r` of `K_{·,J}` times `beta`, summed directly.
fn row_dot<K: Columns>(cols: &K, r: usize, beta: &[f64]) -> f64 {
    (0..cols.n_cols()).map(|c| cols.column(c)[r] * beta[c]).sum()
}

/// `K_{J,J} v` from the dense basis block.
fn block_mul<K: Columns>(cols: &K, v: &[f64]) -> Vec<f64> {
    let d = cols.n_cols();
    let block = cols.basis_block();
    (0..d)
        .map(|a| (0..d).map(|b| block[a * d + b] * v[b]).sum())
        .collect()
}

/// Pair-loop reference: `(value, gradient)` in `O(pn·|J|)`.
pub fn eval_objective_oracle<K: Columns>(ctx: &ObjectiveContext<'_, K>, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    ctx.check_len(beta)?;
    let cols = ctx.columns;
    let d = cols.n_cols();
    let kjj_beta = block_mul(cols, beta);
    let mut value = 0.5 * beta.iter().zip(&kjj_beta).map(|(b, k)| b * k).sum::<f64>();
    let mut grad = kjj_beta;
    for &i in ctx.positives {
        for &j in ctx.negatives {
            let r = (1.0 - row_dot(cols, i, beta)) + row_dot(cols, j, beta);
            if r > 0.0 {
                value += 0.5 * ctx.c * r * r;
                for (c, g) in grad.iter_mut().enumerate().take(d) {
                    *g -= ctx.c * r * (cols.column(c)[i] - cols.column(c)[j]);
                }
            }
        }
    }
    Ok((value, grad))
}

/// Pair-loop reference for the generalized Hessian-vector product at `beta`.
pub fn hessian_vec_oracle<K: Columns>(ctx: &ObjectiveContext<'_, K>, beta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    ctx.check_len(beta)?;
    ctx.check_len(v)?;
    let cols = ctx.columns;
    let mut out = block_mul(cols, v);
    for &i in ctx.positives {
        for &j in ctx.negatives {
            let r = (1.0 - row_dot(cols, i, beta)) + row_dot(cols, j, beta);
            if r > 0.0 {
                let dv = row_dot(cols, i, v) - row_dot(cols, j, v);
                for (c, o) in out.iter_mut().enumerate() {
                    *o += ctx.c * (cols.column(c)[i] - cols.column(c)[j]) * dv;
                }
            }
        }
    }
    Ok(out)
}
