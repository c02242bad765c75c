mod common;

use proptest::prelude::*;
use rand::Rng;
use sparse_auc::pairstats::{compute_stats_fast, compute_stats_oracle, ViolationIndex};

/// Scores on a coarse grid so that exact margin ties occur often.
fn scores(max: usize, grid: bool) -> impl Strategy<Value = Vec<f64>> {
    let x = if grid {
        (-8i32..8).prop_map(|k| k as f64 * 0.25).boxed()
    } else {
        (-3.0f64..3.0).boxed()
    };
    prop::collection::vec(x, 1..=max)
}

fn gamma_tolerance(v: &[f64], count: usize) -> f64 {
    1e-10 * v.iter().fold(0.0f64, |m, x| m.max(x.abs())) * count.max(1) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fast_matches_pair_loop(grid in any::<bool>(), seed in any::<u64>(),
                              pos in scores(50, true), neg in scores(50, true)) {
        let (pos, neg) = if grid {
            (pos, neg)
        } else {
            let mut r = common::rng(seed);
            (pos.iter().map(|_| r.gen_range(-3.0..3.0)).collect(),
             neg.iter().map(|_| r.gen_range(-3.0..3.0)).collect())
        };
        let mut r = common::rng(seed ^ 1);
        let pv = common::random_vec(&mut r, pos.len(), 5.0);
        let nv = common::random_vec(&mut r, neg.len(), 5.0);
        let fast = compute_stats_fast(&pos, &neg, &pv, &nv);
        let slow = compute_stats_oracle(&pos, &neg, &pv, &nv);
        prop_assert_eq!(&fast.l_minus, &slow.l_minus);
        prop_assert_eq!(&fast.l_plus, &slow.l_plus);
        prop_assert_eq!(fast.p_beta, slow.p_beta);
        for (i, (a, b)) in fast.gamma_minus.iter().zip(&slow.gamma_minus).enumerate() {
            prop_assert!((a - b).abs() <= gamma_tolerance(&nv, slow.l_minus[i]), "γ⁻[{}]: {} vs {}", i, a, b);
        }
        for (j, (a, b)) in fast.gamma_plus.iter().zip(&slow.gamma_plus).enumerate() {
            prop_assert!((a - b).abs() <= gamma_tolerance(&pv, slow.l_plus[j]), "γ⁺[{}]: {} vs {}", j, a, b);
        }
    }

    #[test]
    fn counts_are_consistent(pos in scores(40, true), neg in scores(40, true)) {
        let index = ViolationIndex::build(&pos, &neg);
        let lm = index.l_minus();
        let lp = index.l_plus();
        prop_assert!(lm.iter().all(|&k| k <= neg.len()));
        prop_assert!(lp.iter().all(|&k| k <= pos.len()));
        let total = index.p_beta();
        prop_assert_eq!(total, lm.iter().sum::<usize>() as u64);
        prop_assert_eq!(total, lp.iter().sum::<usize>() as u64);
        prop_assert!(total <= (pos.len() * neg.len()) as u64);
    }

    #[test]
    fn unit_direction_gives_counts(pos in scores(30, false), neg in scores(30, false)) {
        let index = ViolationIndex::build(&pos, &neg);
        let (gm, gp) = index.gamma(&vec![1.0; pos.len()], &vec![1.0; neg.len()]);
        let lm: Vec<f64> = index.l_minus().iter().map(|&k| k as f64).collect();
        let lp: Vec<f64> = index.l_plus().iter().map(|&k| k as f64).collect();
        prop_assert_eq!(gm, lm);
        prop_assert_eq!(gp, lp);
    }

    #[test]
    fn raising_positives_never_adds_violations(pos in scores(30, false), neg in scores(30, false),
                                               shift in 0.0f64..2.0) {
        let before = ViolationIndex::build(&pos, &neg).p_beta();
        let raised: Vec<f64> = pos.iter().map(|s| s + shift).collect();
        prop_assert!(ViolationIndex::build(&raised, &neg).p_beta() <= before);
    }
}

#[test]
fn well_separated_scores_have_no_violations() {
    let pos: Vec<f64> = (0..20).map(|i| 5.0 + i as f64).collect();
    let neg: Vec<f64> = (0..30).map(|i| -(i as f64)).collect();
    let s = compute_stats_fast(&pos, &neg, &pos, &neg);
    assert_eq!(s.p_beta, 0);
    assert!(s.gamma_minus.iter().chain(&s.gamma_plus).all(|&g| g == 0.0));
}
