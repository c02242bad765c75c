//! Greedy basis selection: grow `J` one kernel basis function at a time.
//!
//! Each step samples `κ` candidate training examples outside `J`, scores
//! them by the objective value reachable after admitting them, admits the
//! best, and periodically re-optimizes all coefficients with truncated Newton.

use std::time::Instant;

use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SparseVec};
use crate::error::{Error, Result};
use crate::eval::{auc, TieMode};
use crate::kernel::{Augmented, Columns, KernelCache, KernelSpec};
use crate::objective::{eval_objective, gather, EvalResult, LossState, ObjectiveContext};
use crate::tron::{minimize, minimize_from, TronConfig};

/// Candidates within this much of the best score count as tied; the lowest
/// example index wins.
const TIE_EPS: f64 = 1e-12;
const ONEDIM_MAX_ITERS: usize = 20;
const ONEDIM_STEP_TOL: f64 = 1e-6;
const ONEDIM_MAX_HALVINGS: usize = 30;

/// How a candidate basis function is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Re-optimize every coefficient with the candidate included.
    FullRefit,
    /// Optimize only the candidate's coefficient, others frozen.
    OneDim,
}

/// When the full coefficient re-optimization runs during growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ratio", rename_all = "lowercase")]
pub enum RetrainSchedule {
    Always,
    /// Whenever `|J|` equals `⌊ratio^j⌋` for some integer `j ≥ 0`.
    Geometric(f64),
}

impl RetrainSchedule {
    /// The default milestone ratio, `2^{1/4}`.
    pub fn quarter_octave() -> Self {
        RetrainSchedule::Geometric(2f64.powf(0.25))
    }

    pub fn fires(&self, size: usize) -> bool {
        match *self {
            RetrainSchedule::Always => true,
            RetrainSchedule::Geometric(ratio) => {
                let mut j = 0;
                loop {
                    let x = ratio.powi(j);
                    let milestone = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.floor() } as usize;
                    if milestone == size {
                        return true;
                    }
                    if milestone > size {
                        return false;
                    }
                    j += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EarlyStop {
    None,
    /// Stop after `patience` admissions without a validation-AUC gain above
    /// `min_delta`, keeping the best prefix of `J`.
    ValAuc { patience: usize, min_delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub d_max: usize,
    pub kappa: usize,
    pub method: Method,
    pub retrain: RetrainSchedule,
    pub rng_seed: u64,
    pub early_stop: EarlyStop,
    pub tron: TronConfig,
    /// Tie convention for the AUC values recorded in the trace.
    pub tie: TieMode,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            d_max: 100,
            kappa: 100,
            method: Method::OneDim,
            retrain: RetrainSchedule::quarter_octave(),
            rng_seed: 42,
            early_stop: EarlyStop::ValAuc {
                patience: 10,
                min_delta: 1e-4,
            },
            tron: TronConfig::default(),
            tie: TieMode::Strict,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self, l: usize) -> Result<()> {
        if self.kappa == 0 || self.kappa > l {
            return Err(Error::InvalidConfig(format!("kappa must lie in [1, {l}], got {}", self.kappa)));
        }
        if self.d_max > l {
            return Err(Error::InvalidConfig(format!("d_max {} exceeds the {l} training examples", self.d_max)));
        }
        if let RetrainSchedule::Geometric(r) = self.retrain {
            if !(r > 1.0) || !r.is_finite() {
                return Err(Error::InvalidConfig(format!("geometric retrain ratio must exceed 1, got {r}")));
            }
        }
        if let EarlyStop::ValAuc { patience, min_delta } = self.early_stop {
            if patience == 0 || !(min_delta >= 0.0) {
                return Err(Error::InvalidConfig("early stopping needs patience ≥ 1 and min_delta ≥ 0".into()));
            }
        }
        self.tron.validate()
    }
}

/// A trained sparse kernel expansion `f(x) = Σ_c β_c k(x, basis_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Training-row indices of the basis functions, in admission order.
    pub basis: Vec<usize>,
    pub beta: Vec<f64>,
    pub spec: KernelSpec,
    pub basis_vectors: Vec<SparseVec>,
    pub c: f64,
}

impl ModelState {
    pub fn empty(spec: KernelSpec, c: f64) -> Self {
        ModelState {
            basis: Vec::new(),
            beta: Vec::new(),
            spec,
            basis_vectors: Vec::new(),
            c,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn predict(&self, x: &SparseVec) -> f64 {
        self.beta
            .iter()
            .zip(&self.basis_vectors)
            .map(|(b, v)| b * self.spec.eval(x, v))
            .sum()
    }
}

/// One row per admitted basis function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub basis_count: usize,
    pub objective: f64,
    pub train_auc: f64,
    pub val_auc: Option<f64>,
    pub elapsed_sec: f64,
}

#[derive(Debug, Clone)]
pub struct GrowOutcome {
    pub model: ModelState,
    pub trace: Vec<TraceRecord>,
    /// Final objective value.
    pub objective: f64,
    /// Every example was admitted before reaching `d_max`.
    pub exhausted: bool,
    pub early_stopped: bool,
    pub line_search_failures: usize,
}

/// Objective after admitting a candidate, with its coefficient(s).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub value: f64,
    /// Coefficients for `J ∪ {q}`, candidate last.
    pub beta: Vec<f64>,
}

/// Newton–Raphson on the candidate coefficient alone.
///
/// `at` is the objective state at `beta` for the current basis in `ctx`;
/// `column` holds `k(x_r, x_q)` for every training row. Returns `(E_q, β_q*)`.
pub fn score_candidate_onedim(
    ctx: &ObjectiveContext<'_, KernelCache>,
    at: &EvalResult,
    q: usize,
    column: &[f64],
) -> (f64, f64) {
    debug_assert!(!ctx.columns.contains(q), "candidate {q} is already a basis function");
    let reg0 = at.value - ctx.c * at.loss.half_sq_loss;
    let f_q = at.scores[q];
    let k_qq = column[q];
    let energy = |t: f64, loss: &LossState| reg0 + t * f_q + 0.5 * t * t * k_qq + ctx.c * loss.half_sq_loss;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut t = 0.0;
    let mut value = at.value;
    let mut loss = at.loss.clone();
    for _ in 0..ONEDIM_MAX_ITERS {
        let d1 = f_q + t * k_qq + ctx.c * dot(column, &loss.weights);
        let h = loss.curvature_weights(column, ctx.positives, ctx.negatives);
        let d2 = k_qq + ctx.c * dot(column, &h);
        if !(d2 > 0.0) || !d1.is_finite() {
            break;
        }
        let step = -d1 / d2;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..ONEDIM_MAX_HALVINGS {
            let t_new = t + scale * step;
            let scores: Vec<f64> = at.scores.iter().zip(column).map(|(f, k)| f + t_new * k).collect();
            let loss_new = LossState::new(&scores, ctx.positives, ctx.negatives);
            let v = energy(t_new, &loss_new);
            if v <= value {
                accepted = Some((t_new, v, loss_new));
                break;
            }
            scale *= 0.5;
        }
        let Some((t_new, v, loss_new)) = accepted else {
            break;
        };
        let moved = (t_new - t).abs();
        t = t_new;
        value = v;
        loss = loss_new;
        if moved < ONEDIM_STEP_TOL {
            break;
        }
    }
    (value, t)
}

/// Joint re-optimization of `(β_J, β_q)`, started from the one-dimensional optimum
/// so it never scores worse than [`score_candidate_onedim`].
pub fn score_candidate_fullrefit(
    ctx: &ObjectiveContext<'_, KernelCache>,
    at: &EvalResult,
    beta: &[f64],
    q: usize,
    column: &[f64],
    tron: &TronConfig,
) -> Result<CandidateScore> {
    let (_, t) = score_candidate_onedim(ctx, at, q, column);
    let aug = Augmented {
        base: ctx.columns,
        column,
        index: q,
    };
    let actx = ObjectiveContext::new(&aug, ctx.c, ctx.positives, ctx.negatives)?;
    let mut start = beta.to_vec();
    start.push(t);
    let out = minimize(&actx, &start, tron)?;
    Ok(CandidateScore {
        value: out.value(),
        beta: out.beta,
    })
}

fn score_candidate(
    ctx: &ObjectiveContext<'_, KernelCache>,
    at: &EvalResult,
    beta: &[f64],
    q: usize,
    column: &[f64],
    cfg: &GreedyConfig,
) -> Result<CandidateScore> {
    match cfg.method {
        Method::OneDim => {
            let (value, t) = score_candidate_onedim(ctx, at, q, column);
            let mut b = beta.to_vec();
            b.push(t);
            Ok(CandidateScore { value, beta: b })
        }
        Method::FullRefit => score_candidate_fullrefit(ctx, at, beta, q, column, &cfg.tron),
    }
}

struct ValidationTracker<'a> {
    val: &'a Dataset,
    cache: KernelCache,
}

impl ValidationTracker<'_> {
    fn auc(&self, beta: &[f64], tie: TieMode) -> Result<f64> {
        let s = self.cache.scores(beta)?;
        auc(&gather(&s, self.val.positives()), &gather(&s, self.val.negatives()), tie)
    }
}

/// Runs greedy growth on `ds` until `d_max`, candidate exhaustion, or early stopping.
///
/// Early stopping needs `val`; it is ignored otherwise. Results depend only
/// on the inputs and `cfg.rng_seed`, never on the rayon thread count.
pub fn grow(ds: &Dataset, spec: KernelSpec, c: f64, cfg: &GreedyConfig, val: Option<&Dataset>) -> Result<GrowOutcome> {
    cfg.validate(ds.len())?;
    let start = Instant::now();
    let l = ds.len();
    let mut cache = KernelCache::new(spec, l, cfg.d_max);
    let mut tracker = val.map(|v| ValidationTracker {
        val: v,
        cache: KernelCache::new(spec, v.len(), cfg.d_max),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut beta: Vec<f64> = Vec::new();
    let mut in_basis = vec![false; l];

    let ctx = ObjectiveContext::new(&cache, c, ds.positives(), ds.negatives())?;
    let mut at = eval_objective(&ctx, &beta)?;
    if !at.value.is_finite() {
        return Err(Error::Diverged(format!("objective is {} at β = 0", at.value)));
    }

    let mut trace = Vec::new();
    let mut exhausted = false;
    let mut early_stopped = false;
    let mut line_search_failures = 0;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0usize;

    let train_auc = |scores: &[f64]| auc(&gather(scores, ds.positives()), &gather(scores, ds.negatives()), cfg.tie);

    while cache.basis().len() < cfg.d_max {
        let pool: Vec<usize> = (0..l).filter(|&i| !in_basis[i]).collect();
        if pool.is_empty() {
            exhausted = true;
            warn!("candidate pool exhausted at |J| = {}", cache.basis().len());
            break;
        }
        let take = cfg.kappa.min(pool.len());
        let candidates: Vec<usize> = sample(&mut rng, pool.len(), take).into_iter().map(|k| pool[k]).collect();

        let ctx = ObjectiveContext::new(&cache, c, ds.positives(), ds.negatives())?;
        let columns: Vec<Vec<f64>> = candidates.iter().map(|&q| spec.column(ds.rows(), ds.row(q))).collect();
        let scored: Vec<CandidateScore> = candidates
            .par_iter()
            .zip(&columns)
            .map(|(&q, col)| score_candidate(&ctx, &at, &beta, q, col, cfg))
            .collect::<Result<_>>()?;

        let min_value = scored.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
        if !min_value.is_finite() {
            return Err(Error::Diverged(format!("candidate objective is {min_value}")));
        }
        let pick = (0..candidates.len())
            .filter(|&k| scored[k].value <= min_value + TIE_EPS)
            .min_by_key(|&k| candidates[k])
            .expect("at least one candidate attains the minimum");
        let q = candidates[pick];
        let mut columns = columns;
        let column = columns.swap_remove(pick);
        beta = scored[pick].beta.clone();

        cache.push_column(q, column)?;
        in_basis[q] = true;
        if let Some(tr) = tracker.as_mut() {
            let col = spec.column(tr.val.rows(), ds.row(q));
            tr.cache.push_column(q, col)?;
        }

        let ctx = ObjectiveContext::new(&cache, c, ds.positives(), ds.negatives())?;
        at = eval_objective(&ctx, &beta)?;
        if cfg.retrain.fires(cache.basis().len()) {
            let out = minimize_from(&ctx, beta, at, &cfg.tron)?;
            line_search_failures += usize::from(out.line_search_failed);
            beta = out.beta;
            at = out.at;
        }

        let val_auc = tracker.as_ref().map(|tr| tr.auc(&beta, cfg.tie)).transpose()?;
        trace.push(TraceRecord {
            basis_count: beta.len(),
            objective: at.value,
            train_auc: train_auc(&at.scores)?,
            val_auc,
            elapsed_sec: start.elapsed().as_secs_f64(),
        });

        if let (EarlyStop::ValAuc { patience, min_delta }, Some(a)) = (cfg.early_stop, val_auc) {
            match &best {
                Some((b, _, _)) if a <= b + min_delta => since_best += 1,
                _ => {
                    best = Some((a, beta.len(), beta.clone()));
                    since_best = 0;
                }
            }
            if since_best >= patience {
                early_stopped = true;
                break;
            }
        }
    }

    if early_stopped {
        let (a, len, b) = best.expect("early stopping implies a best prefix");
        info!("early stop: keeping |J| = {len} (validation AUC {a:.4})");
        cache.truncate(len);
        beta = b;
    }

    let ctx = ObjectiveContext::new(&cache, c, ds.positives(), ds.negatives())?;
    let out = minimize(&ctx, &beta, &cfg.tron)?;
    line_search_failures += usize::from(out.line_search_failed);
    beta = out.beta;
    let at = out.at;
    if let Some(tr) = tracker.as_mut() {
        tr.cache.truncate(beta.len());
    }
    let final_record = TraceRecord {
        basis_count: beta.len(),
        objective: at.value,
        train_auc: train_auc(&at.scores)?,
        val_auc: tracker.as_ref().map(|tr| tr.auc(&beta, cfg.tie)).transpose()?,
        elapsed_sec: start.elapsed().as_secs_f64(),
    };
    match trace.last_mut() {
        Some(last) if last.basis_count == final_record.basis_count => *last = final_record,
        _ => trace.push(final_record),
    }

    let basis = cache.basis().to_vec();
    let model = ModelState {
        basis_vectors: basis.iter().map(|&q| ds.row(q).clone()).collect(),
        basis,
        beta,
        spec,
        c,
    };
    Ok(GrowOutcome {
        model,
        trace,
        objective: at.value,
        exhausted,
        early_stopped,
        line_search_failures,
    })
}
