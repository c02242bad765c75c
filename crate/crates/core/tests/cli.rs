use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparse_auc::dataio::{load_libsvm, synthetic_disc, LabelMapping};
use sparse_auc::eval::{dataset_auc, TieMode};
use sparse_auc::model::ModelFile;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-auc"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
    train: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let train = dir.path().join("train.txt");
        std::fs::write(&train, synthetic_disc(160, 3, 0.05, 4).unwrap().to_libsvm()).unwrap();
        Fixture { dir, train }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn train_writes_model_and_trace_consistent_with_eval() {
    let f = Fixture::new();
    let (model, trace) = (f.path("m.spauc"), f.path("trace.csv"));
    let o = run(&["train", s(&f.train), "--sigma", "0.7", "--C", "10", "--dmax", "20", "--val-frac", "0",
                  "--model-out", s(&model), "--trace-out", s(&trace)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "basis_count,objective,train_auc,val_auc,elapsed_sec");
    let last: Vec<String> = lines.last().unwrap().split(',').map(str::to_string).collect();
    assert_eq!(last[0], "20");
    assert_eq!(last[3], "");

    // the saved model scores its own training file exactly as the last trace row says
    let file = ModelFile::load(&model).unwrap();
    let ds = load_libsvm(&f.train, &LabelMapping::Signed).unwrap();
    let own = dataset_auc(&file.model, &ds, TieMode::Strict).unwrap();
    assert_eq!(own.to_string(), last[2]);

    let o = run(&["eval", s(&model), s(&f.train)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains(&format!("auc {own}")), "{out}");
    assert!(out.contains("basis_functions 20"));
}

#[test]
fn missing_training_file_exits_2_without_outputs() {
    let f = Fixture::new();
    let (model, trace) = (f.path("m.spauc"), f.path("t.csv"));
    let o = run(&["train", s(&f.path("nope.txt")), "--model-out", s(&model), "--trace-out", s(&trace)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.txt"));
    assert!(!model.exists() && !trace.exists());
    assert_eq!(std::fs::read_dir(f.dir.path()).unwrap().count(), 1);
}

#[test]
fn zero_budget_warns_and_writes_empty_model() {
    let f = Fixture::new();
    let model = f.path("m.spauc");
    let o = run(&["train", s(&f.train), "--dmax", "0", "--model-out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("no basis functions"), "{}", stderr(&o));
    assert_eq!(ModelFile::load(&model).unwrap().model.len(), 0);
}

#[test]
fn manifest_replay_reproduces_model_bytes() {
    let f = Fixture::new();
    let (a, b, manifest) = (f.path("a.spauc"), f.path("b.spauc"), f.path("run.toml"));
    let o = run(&["train", s(&f.train), "--sigma", "0.5", "--C", "3", "--kappa", "7", "--scale",
                  "--seed", "9", "--model-out", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["manifest", s(&a)]);
    assert!(o.status.success());
    std::fs::write(&manifest, o.stdout).unwrap();
    let o = run(&["train", "--manifest", s(&manifest), "--model-out", s(&b), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // a changed dataset is refused
    std::fs::write(&f.train, "+1 1:1\n-1 1:2\n").unwrap();
    let o = run(&["train", "--manifest", s(&manifest), "--model-out", s(&b)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("SHA-256"));
}

#[test]
fn other_format_versions_are_refused() {
    let f = Fixture::new();
    let model = f.path("m.spauc");
    assert!(run(&["train", s(&f.train), "--dmax", "3", "--model-out", s(&model)]).status.success());
    let mut bytes = std::fs::read(&model).unwrap();
    bytes[8] = 99;
    std::fs::write(&model, bytes).unwrap();
    let o = run(&["eval", s(&model), s(&f.train)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("version 99"));
}

#[test]
fn predict_scores_unseen_features_without_error() {
    let f = Fixture::new();
    let model = f.path("m.spauc");
    assert!(run(&["train", s(&f.train), "--dmax", "5", "--model-out", s(&model)]).status.success());
    let input = f.path("in.txt");
    std::fs::write(&input, "0 1:0.1 2:0.2\n0 1:0.1 2:0.2 40:7\n1\n").unwrap();
    let o = run(&["predict", s(&model), s(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores: Vec<f64> = stdout(&o).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.iter().all(|x| x.is_finite()));
}

#[test]
fn tune_single_point_grid_and_determinism() {
    let f = Fixture::new();
    let (g1, g2) = (f.path("g1.csv"), f.path("g2.csv"));
    let args = |out: &Path| -> Vec<String> {
        ["tune", s(&f.train), "--c-values", "1,10", "--sigma-values", "0.5,1,2", "--folds", "3",
         "--dmax", "8", "--kappa", "5", "--grid-out", s(out)]
            .iter().map(|x| x.to_string()).collect()
    };
    let o1 = bin().args(args(&g1)).output().unwrap();
    let o2 = bin().args(args(&g2)).output().unwrap();
    assert!(o1.status.success(), "{}", stderr(&o1));
    assert_eq!(stdout(&o1), stdout(&o2));
    let grid = std::fs::read_to_string(&g1).unwrap();
    assert_eq!(grid.lines().count(), 1 + 2 * 3);
    assert_eq!(grid.lines().next().unwrap(), "C,sigma,mean_auc,std_auc,mean_basis_count");

    let o = run(&["tune", s(&f.train), "--c-values", "3", "--sigma-values", "0.25", "--folds", "2", "--dmax", "4"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("best_C 3\n") && out.contains("best_sigma 0.25\n"), "{out}");
}

#[test]
fn bench_single_thread_reports_unit_speedup() {
    let f = Fixture::new();
    let out = f.path("bench.csv");
    let o = run(&["bench", s(&f.train), "--threads-list", "1", "--repeats", "3", "--dmax", "5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("recommended"));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "threads,median_wall_sec,speedup_vs_1");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,") && rows[1].ends_with(",1"));
}

#[test]
fn multiclass_file_needs_positive_class() {
    let f = Fixture::new();
    let data = f.path("multi.txt");
    std::fs::write(&data, "1 1:0\n2 1:1\n3 1:2\n1 1:0.1\n2 1:1.1\n3 1:2.1\n").unwrap();
    let o = run(&["train", s(&data), "--val-frac", "0", "--model-out", s(&f.path("m.spauc"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("positive-class mapping"));
    let o = run(&["train", s(&data), "--positive-class", "2", "--val-frac", "0", "--dmax", "2",
                  "--model-out", s(&f.path("m.spauc"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}
