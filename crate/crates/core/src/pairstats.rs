//! Violating-pair statistics over the bipartite (positive, negative) pair set.
//!
//! A pair `(i, j)` violates the unit margin when `1 - f_i + f_j > 0`. For
//! every example we need the number of violating partners of the other class
//! and the sum of a direction vector over those partners. Sorting each class
//! by score turns every partner set into a contiguous run of the other
//! class's sorted order, so a binary search gives the count and a prefix (or
//! suffix) sum gives the weighted sum. Total cost is `O(l log l)` once the
//! scores are known, against `O(pn)` for the direct pair loop in
//! [`compute_stats_oracle`].
//!
//! The violation test is strict: a residual of exactly zero is not a
//! violation. Both paths evaluate the residual as `(1 - f_i) + f_j`, which is
//! monotone in each score under IEEE rounding, so the binary search and the
//! pair loop agree even on ties.

use rayon::prelude::*;

/// Examples handled per rayon task in the per-example search loops.
const SEARCH_CHUNK: usize = 1024;

#[inline]
fn residual(pos_score: f64, neg_score: f64) -> f64 {
    (1.0 - pos_score) + neg_score
}

/// Per-example violating-pair counts and direction sums.
///
/// Vectors over positives are indexed by position within the positive class
/// (likewise for negatives).
#[derive(Debug, Clone, PartialEq)]
pub struct PairStats {
    /// `l_i^-`: violating negatives paired with positive `i`.
    pub l_minus: Vec<usize>,
    /// `l_j^+`: violating positives paired with negative `j`.
    pub l_plus: Vec<usize>,
    /// `γ_i^-`: direction summed over positive `i`'s violating negatives.
    pub gamma_minus: Vec<f64>,
    /// `γ_j^+`: direction summed over negative `j`'s violating positives.
    pub gamma_plus: Vec<f64>,
    /// Total number of violating pairs.
    pub p_beta: u64,
}

/// Sorted orders and cut points for one score vector.
///
/// Built once per coefficient vector; [`ViolationIndex::gamma`] then serves
/// any number of direction vectors at the same thresholds in `O(l)` each.
#[derive(Debug, Clone)]
pub struct ViolationIndex {
    pos_order: Vec<usize>,
    neg_order: Vec<usize>,
    /// Per positive: position in sorted negatives where its violators start.
    pos_cut: Vec<usize>,
    /// Per negative: number of leading sorted positives that violate with it.
    neg_cut: Vec<usize>,
}

fn sorted_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

impl ViolationIndex {
    pub fn build(pos_scores: &[f64], neg_scores: &[f64]) -> Self {
        let pos_order = sorted_order(pos_scores);
        let neg_order = sorted_order(neg_scores);
        let sorted_pos: Vec<f64> = pos_order.iter().map(|&i| pos_scores[i]).collect();
        let sorted_neg: Vec<f64> = neg_order.iter().map(|&j| neg_scores[j]).collect();

        // Residual grows with the negative score: violators form a suffix.
        let pos_cut = pos_scores
            .par_iter()
            .with_min_len(SEARCH_CHUNK)
            .map(|&fi| sorted_neg.partition_point(|&fj| residual(fi, fj) <= 0.0))
            .collect();
        // Residual shrinks with the positive score: violators form a prefix.
        let neg_cut = neg_scores
            .par_iter()
            .with_min_len(SEARCH_CHUNK)
            .map(|&fj| sorted_pos.partition_point(|&fi| residual(fi, fj) > 0.0))
            .collect();

        ViolationIndex {
            pos_order,
            neg_order,
            pos_cut,
            neg_cut,
        }
    }

    pub fn p(&self) -> usize {
        self.pos_order.len()
    }

    pub fn n(&self) -> usize {
        self.neg_order.len()
    }

    pub fn l_minus(&self) -> Vec<usize> {
        let n = self.n();
        self.pos_cut.iter().map(|&k| n - k).collect()
    }

    pub fn l_plus(&self) -> Vec<usize> {
        self.neg_cut.clone()
    }

    pub fn p_beta(&self) -> u64 {
        let n = self.n();
        self.pos_cut.iter().map(|&k| (n - k) as u64).sum()
    }

    /// `(γ^-, γ^+)` for direction values `pos_v` / `neg_v`.
    pub fn gamma(&self, pos_v: &[f64], neg_v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(pos_v.len(), self.p());
        debug_assert_eq!(neg_v.len(), self.n());

        let mut prefix = Vec::with_capacity(self.p() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &i in &self.pos_order {
            acc += pos_v[i];
            prefix.push(acc);
        }
        let mut suffix = vec![0.0; self.n() + 1];
        for t in (0..self.n()).rev() {
            suffix[t] = neg_v[self.neg_order[t]] + suffix[t + 1];
        }

        let gamma_minus = self
            .pos_cut
            .par_iter()
            .with_min_len(SEARCH_CHUNK)
            .map(|&k| suffix[k])
            .collect();
        let gamma_plus = self
            .neg_cut
            .par_iter()
            .with_min_len(SEARCH_CHUNK)
            .map(|&k| prefix[k])
            .collect();
        (gamma_minus, gamma_plus)
    }

    pub fn stats(&self, pos_v: &[f64], neg_v: &[f64]) -> PairStats {
        let (gamma_minus, gamma_plus) = self.gamma(pos_v, neg_v);
        PairStats {
            l_minus: self.l_minus(),
            l_plus: self.l_plus(),
            gamma_minus,
            gamma_plus,
            p_beta: self.p_beta(),
        }
    }
}

/// Sort / prefix-sum / binary-search statistics.
pub fn compute_stats_fast(
    pos_scores: &[f64],
    neg_scores: &[f64],
    pos_v: &[f64],
    neg_v: &[f64],
) -> PairStats {
    ViolationIndex::build(pos_scores, neg_scores).stats(pos_v, neg_v)
}

/// Direct enumeration of all `p × n` pairs.
pub fn compute_stats_oracle(
    pos_scores: &[f64],
    neg_scores: &[f64],
    pos_v: &[f64],
    neg_v: &[f64],
) -> PairStats {
    let (p, n) = (pos_scores.len(), neg_scores.len());
    let mut stats = PairStats {
        l_minus: vec![0; p],
        l_plus: vec![0; n],
        gamma_minus: vec![0.0; p],
        gamma_plus: vec![0.0; n],
        p_beta: 0,
    };
    for i in 0..p {
        for j in 0..n {
            if residual(pos_scores[i], neg_scores[j]) > 0.0 {
                stats.l_minus[i] += 1;
                stats.l_plus[j] += 1;
                stats.gamma_minus[i] += neg_v[j];
                stats.gamma_plus[j] += pos_v[i];
                stats.p_beta += 1;
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scores_violate_everywhere() {
        let z3 = [0.0; 3];
        let z4 = [0.0; 4];
        for stats in [
            compute_stats_fast(&z3, &z4, &z3, &z4),
            compute_stats_oracle(&z3, &z4, &z3, &z4),
        ] {
            assert_eq!(stats.l_minus, vec![4; 3]);
            assert_eq!(stats.l_plus, vec![3; 4]);
            assert_eq!(stats.p_beta, 12);
            assert!(stats.gamma_minus.iter().chain(&stats.gamma_plus).all(|&g| g == 0.0));
        }
    }

    #[test]
    fn hand_enumerated_four_pairs() {
        let pos = [0.5, 2.0];
        let neg = [0.0, 1.2];
        let expected = compute_stats_oracle(&pos, &neg, &pos, &neg);
        assert_eq!(expected.l_minus, vec![2, 1]);
        assert_eq!(expected.l_plus, vec![1, 2]);
        assert_eq!(expected.p_beta, 3);
        assert_eq!(expected.gamma_minus, vec![1.2, 1.2]);
        assert_eq!(expected.gamma_plus, vec![0.5, 2.5]);
        assert_eq!(compute_stats_fast(&pos, &neg, &pos, &neg), expected);
    }

    #[test]
    fn separated_with_margin() {
        let stats = compute_stats_fast(&[10.0], &[0.0], &[10.0], &[0.0]);
        assert_eq!(stats.l_minus, vec![0]);
        assert_eq!(stats.l_plus, vec![0]);
        assert_eq!(stats.p_beta, 0);
    }

    #[test]
    fn zero_residual_is_not_violating() {
        // residual (1 - 1.5) + 0.5 == 0 exactly
        let pos = [1.5, 1.25];
        let neg = [0.5, 0.25];
        let fast = compute_stats_fast(&pos, &neg, &[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(fast, compute_stats_oracle(&pos, &neg, &[1.0, 1.0], &[1.0, 1.0]));
        // (1.5, 0.5) and (1.25, 0.25) sit exactly on the margin
        assert_eq!(fast.l_minus, vec![0, 1]);
        assert_eq!(fast.l_plus, vec![1, 0]);
    }

    #[test]
    fn index_reuses_thresholds_for_new_directions() {
        let pos = [0.3, -0.2, 0.9];
        let neg = [0.1, -0.5];
        let index = ViolationIndex::build(&pos, &neg);
        let (pv, nv) = ([1.0, 2.0, 3.0], [10.0, 20.0]);
        assert_eq!(index.stats(&pv, &nv), compute_stats_oracle(&pos, &neg, &pv, &nv));
    }
}
