mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use sparse_auc::dataio::SparseVec;
use sparse_auc::kernel::{Columns, KernelCache, KernelSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_gram_is_symmetric_psd(seed in any::<u64>(), l in 1usize..30, sigma in 0.1f64..5.0) {
        let mut r = common::rng(seed);
        let ds = common::random_dataset(&mut r, l, 1, 4);
        let spec = KernelSpec::gaussian(sigma).unwrap();
        let rows = ds.rows();
        let gram = DMatrix::from_fn(rows.len(), rows.len(), |i, j| spec.eval(&rows[i], &rows[j]));
        for i in 0..rows.len() {
            prop_assert_eq!(gram[(i, i)], 1.0);
            for j in 0..rows.len() {
                prop_assert_eq!(gram[(i, j)], gram[(j, i)]);
                prop_assert!(gram[(i, j)] > 0.0 && gram[(i, j)] <= 1.0);
            }
        }
        let min_eig = gram.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-10 * rows.len() as f64, "λ_min = {}", min_eig);
    }

    #[test]
    fn cache_columns_match_direct_evaluation(seed in any::<u64>(), l in 2usize..40, d in 1usize..6) {
        let mut r = common::rng(seed);
        let ds = common::random_dataset(&mut r, l, 3, 3);
        let spec = common::random_spec(&mut r);
        let cache = common::random_cache(&mut r, &ds, spec, d);
        for c in 0..cache.n_cols() {
            let q = cache.basis()[c];
            for (i, &k) in cache.column(c).iter().enumerate() {
                prop_assert_eq!(k, spec.eval(ds.row(i), ds.row(q)));
            }
        }
        let beta = common::random_vec(&mut r, cache.n_cols(), 1.0);
        let s = cache.scores(&beta).unwrap();
        for (i, &si) in s.iter().enumerate() {
            let direct: f64 = (0..cache.n_cols()).map(|c| cache.column(c)[i] * beta[c]).sum();
            prop_assert!((si - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn sparse_distance_matches_dense(a in prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], 0..12),
                                     b in prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], 0..12)) {
        let (x, y) = (SparseVec::from_dense(&a), SparseVec::from_dense(&b));
        let len = a.len().max(b.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let dense: f64 = (0..len).map(|i| (get(&a, i) - get(&b, i)).powi(2)).sum();
        prop_assert!((x.sq_dist(&y) - dense).abs() <= 1e-12 * dense.max(1.0));
        let dot: f64 = (0..len).map(|i| get(&a, i) * get(&b, i)).sum();
        prop_assert!((x.dot(&y) - dot).abs() <= 1e-12 * dot.abs().max(1.0));
    }
}

#[test]
fn cache_rejects_duplicates_and_overflow() {
    let mut r = common::rng(0);
    let ds = common::random_dataset(&mut r, 3, 3, 2);
    let mut cache = KernelCache::new(KernelSpec::Linear, ds.len(), 2);
    cache.append_column(&ds, 1).unwrap();
    assert!(cache.append_column(&ds, 1).is_err());
    cache.append_column(&ds, 4).unwrap();
    assert!(cache.append_column(&ds, 0).is_err());
    assert_eq!(cache.basis(), &[1, 4]);
}

#[test]
fn nonpositive_sigma_is_rejected() {
    assert!(KernelSpec::gaussian(0.0).is_err());
    assert!(KernelSpec::gaussian(-1.0).is_err());
    assert!(KernelSpec::gaussian(f64::NAN).is_err());
}
