use proptest::prelude::*;
use sparse_auc::eval::{auc, auc_oracle, TieMode};

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -5.0f64..5.0], 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn fast_equals_pair_loop(pos in scores(), neg in scores()) {
        for tie in [TieMode::Strict, TieMode::Half] {
            prop_assert_eq!(auc(&pos, &neg, tie).unwrap(), auc_oracle(&pos, &neg, tie).unwrap());
        }
    }

    #[test]
    fn invariant_under_increasing_maps(pos in scores(), neg in scores()) {
        let map = |v: &[f64]| v.iter().map(|x| 3.0 * x.powi(3) + 1.0).collect::<Vec<_>>();
        prop_assert_eq!(auc(&pos, &neg, TieMode::Half).unwrap(), auc(&map(&pos), &map(&neg), TieMode::Half).unwrap());
    }

    #[test]
    fn swapping_classes_complements(pos in scores(), neg in scores()) {
        let a = auc(&pos, &neg, TieMode::Half).unwrap();
        let b = auc(&neg, &pos, TieMode::Half).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        let s = auc(&pos, &neg, TieMode::Strict).unwrap();
        prop_assert!((0.0..=a).contains(&s));
    }
}
