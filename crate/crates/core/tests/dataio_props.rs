mod common;

use proptest::prelude::*;
use sparse_auc::dataio::{parse_libsvm, stratified_folds, Dataset, LabelMapping, Scaler, SparseVec, SplitPlan};

fn dataset() -> impl Strategy<Value = Dataset> {
    let row = prop::collection::vec(prop_oneof![Just(0.0), -1e6f64..1e6, -1.0f64..1.0], 0..8);
    prop::collection::vec((row, any::<bool>()), 2..40).prop_filter_map("needs both classes", |rows| {
        let labels: Vec<i8> = rows.iter().map(|(_, y)| if *y { 1 } else { -1 }).collect();
        let rows = rows.iter().map(|(x, _)| SparseVec::from_dense(x)).collect();
        Dataset::new(rows, labels).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn libsvm_text_round_trips(ds in dataset()) {
        let back = parse_libsvm(ds.to_libsvm().as_bytes(), &LabelMapping::Signed).unwrap();
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.rows(), ds.rows());
    }

    #[test]
    fn folds_partition_and_stratify(ds in dataset(), k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= ds.p().min(ds.n()));
        let folds = stratified_folds(&ds, &SplitPlan::k_fold(k, seed)).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; ds.len()];
        for (train, val) in &folds {
            prop_assert_eq!(train.len() + val.len(), ds.len());
            for &i in val {
                seen[i] += 1;
            }
            let vp = val.iter().filter(|&&i| ds.labels()[i] == 1).count();
            prop_assert!(vp == ds.p() / k || vp == ds.p().div_ceil(k));
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(stratified_folds(&ds, &SplitPlan::k_fold(k, seed)).unwrap(), folds);
    }

    #[test]
    fn scaled_features_lie_in_unit_box(ds in dataset()) {
        let scaled = Scaler::fit(&ds).transform_dataset(&ds);
        for row in scaled.rows() {
            for &(_, v) in row.entries() {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v), "{}", v);
            }
        }
    }
}

#[test]
fn multiclass_needs_mapping() {
    let text = "1 1:0.5\n2 1:0.1\n3 2:4\n";
    let err = parse_libsvm(text.as_bytes(), &LabelMapping::Signed).unwrap_err();
    assert!(err.to_string().contains("\"1\", \"2\", \"3\""), "{err}");
    let ds = parse_libsvm(text.as_bytes(), &LabelMapping::Positive(vec![2.0])).unwrap();
    assert_eq!(ds.labels(), &[-1, 1, -1]);
}

#[test]
fn gzip_input_is_decoded() {
    use flate2::write::GzEncoder;
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt.gz");
    let mut enc = GzEncoder::new(std::fs::File::create(&path).unwrap(), flate2::Compression::default());
    enc.write_all(b"+1 1:1\n-1 2:1\n").unwrap();
    enc.finish().unwrap();
    let ds = sparse_auc::dataio::load_libsvm(&path, &LabelMapping::Signed).unwrap();
    assert_eq!(ds.len(), 2);
}
