//! Sparse-format (LIBSVM text) datasets, class partitioning and fold plans.
//!
//! Feature indices are 1-based on disk and 0-based in memory. Labels are
//! stored as `+1`/`-1`; any other encoding must go through a
//! [`LabelMapping::Positive`] set.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sparse feature vector: `(index, value)` pairs with strictly increasing
/// 0-based indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(u32, f64)>,
}

impl SparseVec {
    /// Builds a vector from pairs that are already strictly increasing in index.
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        Ok(SparseVec { entries })
    }

    /// Dense slice to sparse, dropping exact zeros.
    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        SparseVec { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// One past the largest stored index (0 for the empty vector).
    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |&(i, _)| i as usize + 1)
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        sum
    }

    /// Squared Euclidean distance, merging on index. Absent coordinates are 0.
    pub fn sq_dist(&self, other: &SparseVec) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Equal => {
                    let d = a[i].1 - b[j].1;
                    sum += d * d;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    sum += a[i].1 * a[i].1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    sum += b[j].1 * b[j].1;
                    j += 1;
                }
            }
        }
        for &(_, v) in &a[i..] {
            sum += v * v;
        }
        for &(_, v) in &b[j..] {
            sum += v * v;
        }
        sum
    }
}

/// How raw labels are turned into `+1`/`-1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum LabelMapping {
    /// Labels must already be `+1` / `-1` (written as `1`, `+1`, `-1`, `1.0`, ...).
    #[default]
    Signed,
    /// Labels equal to any listed value are positive, all others negative.
    Positive(Vec<f64>),
}

impl LabelMapping {
    fn map(&self, raw: f64) -> Option<i8> {
        match self {
            LabelMapping::Signed if raw == 1.0 => Some(1),
            LabelMapping::Signed if raw == -1.0 => Some(-1),
            LabelMapping::Signed => None,
            LabelMapping::Positive(set) => Some(if set.contains(&raw) { 1 } else { -1 }),
        }
    }
}

/// Binary-labelled sparse dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseVec>,
    labels: Vec<i8>,
    dim: usize,
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

impl Dataset {
    /// Validates labels and class presence. `dim` is the max feature count seen.
    pub fn new(rows: Vec<SparseVec>, labels: Vec<i8>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::LabelSet {
                found: vec![bad.to_string()],
            });
        }
        let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let negatives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == -1).collect();
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::MissingClass {
                positives: positives.len(),
                negatives: negatives.len(),
            });
        }
        let dim = rows.iter().map(SparseVec::dim).max().unwrap_or(0);
        Ok(Dataset {
            rows,
            labels,
            dim,
            positives,
            negatives,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[SparseVec] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseVec {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row indices of the positive class, ascending.
    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    /// Row indices of the negative class, ascending.
    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }

    pub fn p(&self) -> usize {
        self.positives.len()
    }

    pub fn n(&self) -> usize {
        self.negatives.len()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(rows, labels)
    }

    /// Serializes to LIBSVM text. Values use the shortest round-tripping form.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            out.push_str(if y > 0 { "+1" } else { "-1" });
            for &(idx, val) in row.entries() {
                let _ = write!(out, " {}:{}", idx + 1, val);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LIBSVM text from any reader.
pub fn parse_libsvm<R: BufRead>(reader: R, mapping: &LabelMapping) -> Result<Dataset> {
    let records = parse_records(reader)?;
    let mut unmapped = false;
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut labels = Vec::with_capacity(records.len());
    for rec in &records {
        seen.insert(&rec.label);
        match mapping.map(rec.raw) {
            Some(y) => labels.push(y),
            None => unmapped = true,
        }
    }
    if unmapped {
        return Err(Error::LabelSet {
            found: seen.into_iter().map(str::to_string).collect(),
        });
    }
    Dataset::new(records.into_iter().map(|r| r.row).collect(), labels)
}

/// Parses feature rows only; labels must be numeric but are otherwise ignored.
pub fn parse_libsvm_rows<R: BufRead>(reader: R) -> Result<Vec<SparseVec>> {
    Ok(parse_records(reader)?.into_iter().map(|r| r.row).collect())
}

struct Record {
    label: String,
    raw: f64,
    row: SparseVec,
}

fn parse_records<R: BufRead>(reader: R) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let raw: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(format!("invalid label {label_tok:?}")))?;

        let mut entries: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(format!("expected index:value, got {tok:?}")))?;
            let idx: u32 = idx
                .parse()
                .map_err(|_| parse_err(format!("invalid feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(format!("invalid feature value {val:?}")))?;
            if entries.last().is_some_and(|&(prev, _)| idx - 1 <= prev) {
                return Err(parse_err(format!("feature index {idx} is not increasing")));
            }
            entries.push((idx - 1, val));
        }
        records.push(Record {
            label: label_tok.to_string(),
            raw,
            row: SparseVec { entries },
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(records)
}

fn open_maybe_gz(path: &Path) -> Result<BufReader<Box<dyn Read>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(BufReader::new(reader))
}

/// Reads a dataset file; a `.gz` extension selects gzip decoding.
pub fn load_libsvm(path: &Path, mapping: &LabelMapping) -> Result<Dataset> {
    parse_libsvm(open_maybe_gz(path)?, mapping)
}

pub fn load_libsvm_rows(path: &Path) -> Result<Vec<SparseVec>> {
    parse_libsvm_rows(open_maybe_gz(path)?)
}

/// Per-feature affine map of the observed range onto `[-1, 1]`.
///
/// Ranges include the implicit zeros of sparse rows. Constant features map
/// to 0; features never seen while fitting pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    ranges: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn fit(ds: &Dataset) -> Self {
        let dim = ds.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut count = vec![0usize; dim];
        for row in ds.rows() {
            for &(i, v) in row.entries() {
                let i = i as usize;
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
                count[i] += 1;
            }
        }
        let ranges = (0..dim)
            .map(|i| {
                if count[i] < ds.len() {
                    (lo[i].min(0.0), hi[i].max(0.0))
                } else {
                    (lo[i], hi[i])
                }
            })
            .collect();
        Scaler { ranges }
    }

    pub fn from_ranges(ranges: Vec<(f64, f64)>) -> Self {
        Scaler { ranges }
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn transform(&self, row: &SparseVec) -> SparseVec {
        let mut dense: Vec<f64> = self
            .ranges
            .iter()
            .map(|&(lo, hi)| scale_value(0.0, lo, hi))
            .collect();
        let mut extra = Vec::new();
        for &(i, v) in row.entries() {
            match self.ranges.get(i as usize) {
                Some(&(lo, hi)) => dense[i as usize] = scale_value(v, lo, hi),
                None => extra.push((i, v)),
            }
        }
        let mut out = SparseVec::from_dense(&dense);
        out.entries.extend(extra);
        out
    }

    pub fn transform_dataset(&self, ds: &Dataset) -> Dataset {
        let rows: Vec<SparseVec> = ds.rows().iter().map(|r| self.transform(r)).collect();
        let dim = rows.iter().map(SparseVec::dim).max().unwrap_or(0);
        Dataset {
            rows,
            labels: ds.labels.clone(),
            dim,
            positives: ds.positives.clone(),
            negatives: ds.negatives.clone(),
        }
    }
}

fn scale_value(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        -1.0 + 2.0 * (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    KFold,
    /// One stratified split holding out this fraction of each class.
    Holdout(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold_count: usize,
    pub seed: u64,
    pub mode: SplitMode,
}

impl SplitPlan {
    pub fn k_fold(fold_count: usize, seed: u64) -> Self {
        SplitPlan {
            fold_count,
            seed,
            mode: SplitMode::KFold,
        }
    }

    pub fn holdout(fraction: f64, seed: u64) -> Self {
        SplitPlan {
            fold_count: 1,
            seed,
            mode: SplitMode::Holdout(fraction),
        }
    }
}

/// Stratified `(train, validation)` index pairs.
///
/// Each class is shuffled on its own from a seed-derived stream and dealt
/// round-robin into folds, so every validation fold holds `⌊p/k⌋` or `⌈p/k⌉`
/// positives. Negatives start dealing where positives stopped to even out
/// fold sizes. Returned index lists are ascending.
pub fn stratified_folds(ds: &Dataset, plan: &SplitPlan) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut pos = ds.positives().to_vec();
    let mut neg = ds.negatives().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    match plan.mode {
        SplitMode::KFold => {
            let k = plan.fold_count;
            if k < 2 {
                return Err(Error::InvalidConfig(format!("fold count {k} must be at least 2")));
            }
            if k > ds.p().min(ds.n()) {
                return Err(Error::InvalidConfig(format!(
                    "fold count {k} exceeds the smaller class size {}",
                    ds.p().min(ds.n())
                )));
            }
            let mut fold_of = vec![0usize; ds.len()];
            for (t, &i) in pos.iter().enumerate() {
                fold_of[i] = t % k;
            }
            let offset = pos.len() % k;
            for (t, &i) in neg.iter().enumerate() {
                fold_of[i] = (t + offset) % k;
            }
            Ok((0..k)
                .map(|f| {
                    let (val, train): (Vec<usize>, Vec<usize>) =
                        (0..ds.len()).partition(|&i| fold_of[i] == f);
                    (train, val)
                })
                .collect())
        }
        SplitMode::Holdout(fraction) => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "holdout fraction {fraction} must lie in (0, 1)"
                )));
            }
            if ds.p() < 2 || ds.n() < 2 {
                return Err(Error::InvalidConfig(
                    "holdout split needs two examples of each class".into(),
                ));
            }
            let take = |len: usize| ((len as f64 * fraction).round() as usize).clamp(1, len - 1);
            let mut val: Vec<usize> = pos[..take(pos.len())]
                .iter()
                .chain(&neg[..take(neg.len())])
                .copied()
                .collect();
            val.sort_unstable();
            let mut in_val = vec![false; ds.len()];
            for &i in &val {
                in_val[i] = true;
            }
            let train = (0..ds.len()).filter(|&i| !in_val[i]).collect();
            Ok(vec![(train, val)])
        }
    }
}

/// A nonlinear two-class problem: points uniform on `[-1, 1]^dim`, positive
/// inside the disc `x₀² + x₁² < 0.5`, with each label flipped with
/// probability `flip`. Roughly 39% of examples are positive.
pub fn synthetic_disc(l: usize, dim: usize, flip: f64, seed: u64) -> Result<Dataset> {
    if dim < 2 {
        return Err(Error::InvalidConfig("synthetic data needs at least 2 features".into()));
    }
    if !(0.0..=1.0).contains(&flip) {
        return Err(Error::InvalidConfig(format!("flip probability {flip} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(l);
    let mut labels = Vec::with_capacity(l);
    for _ in 0..l {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let inside = x[0] * x[0] + x[1] * x[1] < 0.5;
        let flipped = rng.gen_bool(flip);
        labels.push(if inside != flipped { 1 } else { -1 });
        rows.push(SparseVec::from_dense(&x));
    }
    Dataset::new(rows, labels)
}
