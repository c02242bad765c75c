//! Kernel functions and the growing `l × |J|` column cache.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SparseVec};
use crate::error::{Error, Result};

/// Rows handled per rayon task in row-parallel loops.
const ROW_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-‖a - b‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// Plain dot product.
    Linear,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(KernelSpec::Gaussian { sigma })
        } else {
            Err(Error::InvalidConfig(format!("gaussian sigma must be positive, got {sigma}")))
        }
    }

    pub fn eval(&self, a: &SparseVec, b: &SparseVec) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => (-a.sq_dist(b) / (2.0 * sigma * sigma)).exp(),
            KernelSpec::Linear => a.dot(b),
        }
    }

    /// `k(x_r, anchor)` for every row, computed row-parallel.
    pub fn column(&self, rows: &[SparseVec], anchor: &SparseVec) -> Vec<f64> {
        rows.par_iter()
            .with_min_len(ROW_CHUNK)
            .map(|r| self.eval(r, anchor))
            .collect()
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, a: &SparseVec, b: &SparseVec) -> f64 {
    spec.eval(a, b)
}

/// Read access to a set of kernel columns `K_{·,J}` over `l` training rows.
///
/// Products are deterministic: each output entry is accumulated sequentially
/// in a fixed order, and parallelism only splits independent entries.
pub trait Columns: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn column(&self, c: usize) -> &[f64];
    /// Training-row index that column `c` is anchored at.
    fn basis_index(&self, c: usize) -> usize;

    /// `K_{·,J} v`.
    fn scores(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.n_rows()];
        out.par_chunks_mut(ROW_CHUNK)
            .enumerate()
            .for_each(|(chunk, slice)| {
                let start = chunk * ROW_CHUNK;
                for (c, &w) in v.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let col = &self.column(c)[start..start + slice.len()];
                    for (o, &k) in slice.iter_mut().zip(col) {
                        *o += k * w;
                    }
                }
            });
        Ok(out)
    }

    /// `K_{·,J}ᵀ g`.
    fn transpose_mul(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                got: g.len(),
            });
        }
        Ok((0..self.n_cols())
            .into_par_iter()
            .map(|c| self.column(c).iter().zip(g).map(|(k, x)| k * x).sum())
            .collect())
    }

    /// `K_{J,J}` as row-major dense entries.
    fn basis_block(&self) -> Vec<f64> {
        let d = self.n_cols();
        let mut out = Vec::with_capacity(d * d);
        for a in 0..d {
            let row = self.basis_index(a);
            out.extend((0..d).map(|c| self.column(c)[row]));
        }
        out
    }
}

/// Dense column store for the selected basis functions.
#[derive(Debug, Clone)]
pub struct KernelCache {
    spec: KernelSpec,
    n_rows: usize,
    capacity: usize,
    columns: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl KernelCache {
    /// An empty cache for `n_rows` training rows holding at most `capacity` columns.
    pub fn new(spec: KernelSpec, n_rows: usize, capacity: usize) -> Self {
        KernelCache {
            spec,
            n_rows,
            capacity,
            columns: Vec::with_capacity(capacity),
            basis: Vec::with_capacity(capacity),
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn contains(&self, q: usize) -> bool {
        self.basis.contains(&q)
    }

    /// Computes and appends the column anchored at training row `q`.
    pub fn append_column(&mut self, ds: &Dataset, q: usize) -> Result<()> {
        if self.contains(q) {
            return Err(Error::DuplicateBasis(q));
        }
        let col = self.spec.column(ds.rows(), ds.row(q));
        self.push_column(q, col)
    }

    /// Appends a column computed elsewhere (e.g. a scored candidate's scratch column).
    pub fn push_column(&mut self, q: usize, column: Vec<f64>) -> Result<()> {
        if self.contains(q) {
            return Err(Error::DuplicateBasis(q));
        }
        if column.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: column.len(),
            });
        }
        if self.columns.len() >= self.capacity {
            return Err(Error::CacheFull {
                capacity: self.capacity,
            });
        }
        self.columns.push(column);
        self.basis.push(q);
        Ok(())
    }

    /// Drops columns past the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.columns.truncate(len);
        self.basis.truncate(len);
    }

    /// Stored kernel entries; never more than `n_rows × capacity`.
    pub fn entry_count(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }
}

impl Columns for KernelCache {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        self.columns.len()
    }

    fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    fn basis_index(&self, c: usize) -> usize {
        self.basis[c]
    }
}

/// A cache plus one trial column, used when refitting a candidate basis.
pub struct Augmented<'a> {
    pub base: &'a KernelCache,
    pub column: &'a [f64],
    pub index: usize,
}

impl Columns for Augmented<'_> {
    fn n_rows(&self) -> usize {
        self.base.n_rows
    }

    fn n_cols(&self) -> usize {
        self.base.n_cols() + 1
    }

    fn column(&self, c: usize) -> &[f64] {
        if c < self.base.n_cols() {
            self.base.column(c)
        } else {
            self.column
        }
    }

    fn basis_index(&self, c: usize) -> usize {
        if c < self.base.n_cols() {
            self.base.basis_index(c)
        } else {
            self.index
        }
    }
}
