//! AUC, prediction and the `(C, σ)` cross-validation grid search.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{stratified_folds, Dataset, SparseVec, SplitPlan};
use crate::error::{Error, Result};
use crate::greedy::{grow, GreedyConfig, ModelState};
use crate::kernel::KernelSpec;

/// How a tied (positive, negative) score pair is credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Only `f(x⁺) > f(x⁻)` counts.
    #[default]
    Strict,
    /// Ties earn half credit.
    Half,
}

fn check_nonempty(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        Err(Error::MissingClass {
            positives: pos.len(),
            negatives: neg.len(),
        })
    } else {
        Ok(())
    }
}

/// Fraction of (positive, negative) pairs ranked correctly, by sorting the
/// negatives once and binary-searching each positive: `O(l log l)`.
pub fn auc(pos: &[f64], neg: &[f64], tie: TieMode) -> Result<f64> {
    check_nonempty(pos, neg)?;
    let mut sorted = neg.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut below: u64 = 0;
    let mut equal: u64 = 0;
    for &s in pos {
        let lt = sorted.partition_point(|&x| x < s);
        below += lt as u64;
        if tie == TieMode::Half {
            equal += (sorted.partition_point(|&x| x <= s) - lt) as u64;
        }
    }
    let pairs = pos.len() as f64 * neg.len() as f64;
    Ok((below as f64 + 0.5 * equal as f64) / pairs)
}

/// Pair-loop AUC, `O(pn)`.
pub fn auc_oracle(pos: &[f64], neg: &[f64], tie: TieMode) -> Result<f64> {
    check_nonempty(pos, neg)?;
    let mut credit = 0.0;
    for &a in pos {
        for &b in neg {
            if a > b {
                credit += 1.0;
            } else if a == b && tie == TieMode::Half {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (pos.len() as f64 * neg.len() as f64))
}

/// `f(x) = Σ_c β_c k(x, basis_c)`.
pub fn predict(model: &ModelState, x: &SparseVec) -> f64 {
    model.predict(x)
}

/// AUC of `model` on a labelled dataset.
pub fn dataset_auc(model: &ModelState, ds: &Dataset, tie: TieMode) -> Result<f64> {
    let scores: Vec<f64> = ds.rows().par_iter().map(|x| model.predict(x)).collect();
    let pos: Vec<f64> = ds.positives().iter().map(|&i| scores[i]).collect();
    let neg: Vec<f64> = ds.negatives().iter().map(|&i| scores[i]).collect();
    auc(&pos, &neg, tie)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
}

impl GridSpec {
    /// `C ∈ {10⁻⁵ … 10⁵}`, `σ ∈ {2⁻⁵ … 2⁵}`.
    pub fn full() -> Self {
        GridSpec {
            c_values: (-5..=5).map(|e| 10f64.powi(e)).collect(),
            sigma_values: (-5..=5).map(|e| 2f64.powi(e)).collect(),
        }
    }

    /// Drops repeated values (keeping first occurrences) with a warning.
    pub fn deduplicated(&self) -> Result<GridSpec> {
        if self.c_values.is_empty() || self.sigma_values.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one C and one sigma".into()));
        }
        let dedup = |vals: &[f64], name: &str| {
            let mut out: Vec<f64> = Vec::new();
            for &v in vals {
                if out.contains(&v) {
                    warn!("duplicate {name} value {v} dropped from grid");
                } else {
                    out.push(v);
                }
            }
            out
        };
        Ok(GridSpec {
            c_values: dedup(&self.c_values, "C"),
            sigma_values: dedup(&self.sigma_values, "sigma"),
        })
    }
}

/// Cross-validation protocol for [`grid_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: SplitPlan,
    /// Independent repetitions; repetition `r` reshuffles with `seed + r`.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub c: f64,
    pub sigma: f64,
    /// Validation AUC of every repetition × fold; empty when invalid.
    pub aucs: Vec<f64>,
    pub basis_counts: Vec<usize>,
    /// Why the cell was excluded, if it was.
    pub failure: Option<String>,
}

impl GridCell {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none() && !self.aucs.is_empty()
    }

    pub fn mean_auc(&self) -> f64 {
        mean(&self.aucs)
    }

    /// Sample standard deviation over repetitions × folds.
    pub fn std_auc(&self) -> f64 {
        let n = self.aucs.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_auc();
        (self.aucs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn mean_basis_count(&self) -> f64 {
        mean(&self.basis_counts.iter().map(|&b| b as f64).collect::<Vec<_>>())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_c: f64,
    pub best_sigma: f64,
    /// Cells in grid order: C-major, then σ.
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn best(&self) -> &GridCell {
        self.cells
            .iter()
            .find(|c| c.c == self.best_c && c.sigma == self.best_sigma)
            .expect("best cell is part of the grid")
    }

    /// CSV with columns `C, sigma, mean_auc, std_auc, mean_basis_count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::io("grid csv", std::io::Error::other(e));
        w.write_record(["C", "sigma", "mean_auc", "std_auc", "mean_basis_count"]).map_err(io)?;
        for cell in &self.cells {
            let (m, s, b) = if cell.is_valid() {
                (cell.mean_auc(), cell.std_auc(), cell.mean_basis_count())
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            w.write_record([cell.c, cell.sigma, m, s, b].map(|x| x.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("grid csv", e))
    }
}

fn train_cell(ds: &Dataset, c: f64, sigma: f64, plan: &CvPlan, cfg: &GreedyConfig) -> GridCell {
    let mut cell = GridCell {
        c,
        sigma,
        aucs: Vec::new(),
        basis_counts: Vec::new(),
        failure: None,
    };
    let mut run = || -> Result<()> {
        let spec = KernelSpec::gaussian(sigma)?;
        for rep in 0..plan.repeats.max(1) {
            let folds = SplitPlan {
                seed: plan.folds.seed.wrapping_add(rep as u64),
                ..plan.folds
            };
            for (train_idx, val_idx) in stratified_folds(ds, &folds)? {
                let train = ds.subset(&train_idx)?;
                let val = ds.subset(&val_idx)?;
                let mut fold_cfg = cfg.clone();
                fold_cfg.d_max = cfg.d_max.min(train.len());
                fold_cfg.kappa = cfg.kappa.min(train.len());
                let outcome = grow(&train, spec, c, &fold_cfg, Some(&val))?;
                let a = dataset_auc(&outcome.model, &val, cfg.tie)?;
                if !a.is_finite() {
                    return Err(Error::Diverged("validation AUC is not finite".into()));
                }
                cell.aucs.push(a);
                cell.basis_counts.push(outcome.model.len());
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        warn!("grid cell C={c} sigma={sigma} excluded: {e}");
        cell.failure = Some(e.to_string());
        cell.aucs.clear();
        cell.basis_counts.clear();
    }
    cell
}

/// Mean validation AUC for every `(C, σ)` over repeated stratified folds.
///
/// Cells train in parallel; the best cell maximizes mean AUC, breaking ties
/// toward smaller `C`, then smaller `σ`. Cells whose training fails are
/// reported but never selected.
pub fn grid_search(ds: &Dataset, grid: &GridSpec, plan: &CvPlan, cfg: &GreedyConfig) -> Result<GridResult> {
    let grid = grid.deduplicated()?;
    let points: Vec<(f64, f64)> = grid
        .c_values
        .iter()
        .flat_map(|&c| grid.sigma_values.iter().map(move |&s| (c, s)))
        .collect();
    let cells: Vec<GridCell> = points
        .par_iter()
        .map(|&(c, s)| train_cell(ds, c, s, plan, cfg))
        .collect();

    let (best_c, best_sigma) = cells
        .iter()
        .filter(|c| c.is_valid())
        .max_by(|a, b| {
            a.mean_auc()
                .total_cmp(&b.mean_auc())
                .then(b.c.total_cmp(&a.c))
                .then(b.sigma.total_cmp(&a.sigma))
        })
        .map(|b| (b.c, b.sigma))
        .ok_or_else(|| Error::Diverged("every grid cell failed".into()))?;
    Ok(GridResult {
        best_c,
        best_sigma,
        cells,
    })
}
