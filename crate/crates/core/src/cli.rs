//! Command-line front end: train, eval, predict, tune, bench and manifest dumps.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::dataio::{load_libsvm, load_libsvm_rows, stratified_folds, Dataset, LabelMapping, Scaler, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::{dataset_auc, grid_search, CvPlan, GridSpec, TieMode};
use crate::greedy::{grow, EarlyStop, GreedyConfig, GrowOutcome, Method, RetrainSchedule, TraceRecord};
use crate::kernel::KernelSpec;
use crate::model::{file_sha256, write_atomic, ModelFile, RunManifest, Validation, FORMAT_VERSION};
use crate::tron::TronConfig;

/// Fraction of the training file held out for early stopping when no
/// validation source is given.
pub const DEFAULT_VAL_FRAC: f64 = 0.2;
pub const DEFAULT_DMAX_CAP: usize = 1000;
/// Training sets smaller than this are dominated by fixed overheads in `bench`.
pub const BENCH_MIN_ROWS: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "sparse-auc", version, about = "Sparse kernel AUC maximization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow a sparse kernel model and write it to disk.
    Train(TrainArgs),
    /// Print the AUC and basis count of a model on a labelled file.
    Eval(EvalArgs),
    /// Write one decision value per input row.
    Predict(PredictArgs),
    /// Cross-validated grid search over (C, sigma).
    Tune(TuneArgs),
    /// Time training across thread counts.
    Bench(BenchArgs),
    /// Print the run manifest embedded in a model file.
    Manifest { model: PathBuf },
    /// Write a synthetic two-class dataset in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Onedim,
    Fullrefit,
}

fn parse_schedule(s: &str) -> std::result::Result<RetrainSchedule, String> {
    match s {
        "always" => Ok(RetrainSchedule::Always),
        "geometric" => Ok(RetrainSchedule::quarter_octave()),
        _ => match s.strip_prefix("geometric:") {
            Some(r) => r
                .parse::<f64>()
                .map(RetrainSchedule::Geometric)
                .map_err(|e| format!("bad ratio {r:?}: {e}")),
            None => Err(format!("expected always, geometric or geometric:RATIO, got {s:?}")),
        },
    }
}

/// Settings shared by every command that trains.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Basis budget; defaults to min(l/2, --dmax-cap).
    #[arg(long)]
    pub dmax: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DMAX_CAP)]
    pub dmax_cap: usize,
    /// Candidates scored per greedy step.
    #[arg(long, default_value_t = 100)]
    pub kappa: usize,
    #[arg(long, value_enum, default_value = "onedim")]
    pub method: MethodArg,
    /// always | geometric | geometric:RATIO
    #[arg(long, value_parser = parse_schedule, default_value = "geometric")]
    pub schedule: RetrainSchedule,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Raw label values treated as positive; all others are negative.
    #[arg(long, value_delimiter = ',')]
    pub positive_class: Vec<f64>,
    /// Scale each feature to [-1, 1] using training ranges.
    #[arg(long)]
    pub scale: bool,
    /// Give tied pairs half credit in reported AUC.
    #[arg(long)]
    pub tie_half: bool,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub min_delta: f64,
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_newton: usize,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ModelArgs {
    pub fn label_mapping(&self) -> LabelMapping {
        if self.positive_class.is_empty() {
            LabelMapping::Signed
        } else {
            LabelMapping::Positive(self.positive_class.clone())
        }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        match self.kernel {
            KernelKind::Gaussian => KernelSpec::gaussian(self.sigma),
            KernelKind::Linear => Ok(KernelSpec::Linear),
        }
    }

    fn tie(&self) -> TieMode {
        if self.tie_half {
            TieMode::Half
        } else {
            TieMode::Strict
        }
    }

    /// Greedy settings with `d_max` left at the cap; see [`resolve_budget`].
    pub fn greedy_config(&self) -> GreedyConfig {
        GreedyConfig {
            d_max: self.dmax.unwrap_or(self.dmax_cap),
            kappa: self.kappa,
            method: match self.method {
                MethodArg::Onedim => Method::OneDim,
                MethodArg::Fullrefit => Method::FullRefit,
            },
            retrain: self.schedule,
            rng_seed: self.seed,
            early_stop: if self.no_early_stop {
                EarlyStop::None
            } else {
                EarlyStop::ValAuc {
                    patience: self.patience,
                    min_delta: self.min_delta,
                }
            },
            tron: TronConfig {
                grad_tol: self.grad_tol,
                max_newton_iters: self.max_newton,
                ..TronConfig::default()
            },
            tie: self.tie(),
        }
    }

    /// `d_max` and `κ` for a training set of `l` rows.
    fn resolve_budget(&self, cfg: &mut GreedyConfig, l: usize) {
        cfg.d_max = match self.dmax {
            Some(d) if d > l => {
                warn!("--dmax {d} exceeds the {l} training rows; using {l}");
                l
            }
            Some(d) => d,
            None => (l / 2).min(self.dmax_cap),
        };
        if cfg.kappa > l {
            warn!("--kappa {} exceeds the {l} training rows; using {l}", cfg.kappa);
            cfg.kappa = l;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training file in LIBSVM format (optional with --manifest).
    #[arg(required_unless_present = "manifest")]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, conflicts_with = "val_frac")]
    pub val_path: Option<PathBuf>,
    /// Holdout fraction for early stopping; 0 disables validation.
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long, default_value = "model.spauc")]
    pub model_out: PathBuf,
    /// Re-run a recorded configuration; training flags are then ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub test: PathBuf,
    /// Overrides the label mapping recorded at training time.
    #[arg(long, value_delimiter = ',')]
    pub positive_class: Vec<f64>,
    #[arg(long)]
    pub tie_half: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub train: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = GridSpec::full().c_values)]
    pub c_values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = GridSpec::full().sigma_values)]
    pub sigma_values: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub train: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8])]
    pub threads_list: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub flip: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit code for an error: 2 for unreadable inputs, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args).map(|_| ()),
        Command::Eval(args) => cmd_eval(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Tune(args) => cmd_tune(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Manifest { model } => {
            let m = ModelFile::load(&model)?;
            print!("{}", m.manifest.to_toml()?);
            Ok(())
        }
        Command::Synth(args) => {
            let ds = crate::dataio::synthetic_disc(args.rows, args.dim, args.flip, args.seed)?;
            write_atomic(&args.out, ds.to_libsvm().as_bytes())
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Training and validation data as the manifest describes them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub scaler: Option<Scaler>,
}

fn check_sha(path: &Path, recorded: &str) -> Result<()> {
    let actual = file_sha256(path)?;
    if actual != recorded {
        return Err(Error::InvalidConfig(format!(
            "{} has SHA-256 {actual}, but the manifest records {recorded}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads and splits the data a manifest refers to, verifying checksums.
pub fn prepare(m: &RunManifest) -> Result<Prepared> {
    check_sha(&m.train_path, &m.train_sha256)?;
    let full = load_libsvm(&m.train_path, &m.label_mapping)?;
    let (train, val) = match &m.validation {
        Validation::None => (full, None),
        Validation::File { path, sha256 } => {
            check_sha(path, sha256)?;
            let val = load_libsvm(path, &m.label_mapping)?;
            (full, Some(val))
        }
        Validation::Holdout { fraction, seed } => {
            let split = stratified_folds(&full, &SplitPlan::holdout(*fraction, *seed))?;
            let (train_idx, val_idx) = &split[0];
            (full.subset(train_idx)?, Some(full.subset(val_idx)?))
        }
    };
    if !m.scale {
        return Ok(Prepared { train, val, scaler: None });
    }
    let scaler = Scaler::fit(&train);
    Ok(Prepared {
        train: scaler.transform_dataset(&train),
        val: val.map(|v| scaler.transform_dataset(&v)),
        scaler: Some(scaler),
    })
}

/// Trains exactly what the manifest specifies.
pub fn fit(m: &RunManifest, data: &Prepared, threads: Option<usize>) -> Result<(ModelFile, GrowOutcome)> {
    let outcome = with_threads(threads, || grow(&data.train, m.kernel, m.c, &m.greedy, data.val.as_ref()))??;
    let file = ModelFile {
        model: outcome.model.clone(),
        manifest: m.clone(),
        scaler: data.scaler.clone(),
    };
    Ok((file, outcome))
}

fn manifest_from_args(args: &TrainArgs, train: &Path) -> Result<RunManifest> {
    let ma = &args.model;
    let validation = match (&args.val_path, args.val_frac) {
        (Some(p), _) => Validation::File {
            path: p.clone(),
            sha256: file_sha256(p)?,
        },
        (None, Some(0.0)) => Validation::None,
        (None, f) => Validation::Holdout {
            fraction: f.unwrap_or(DEFAULT_VAL_FRAC),
            seed: ma.seed,
        },
    };
    if !(ma.c > 0.0) || !ma.c.is_finite() {
        return Err(Error::InvalidConfig(format!("C must be positive, got {}", ma.c)));
    }
    Ok(RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        format_version: FORMAT_VERSION,
        train_path: train.to_path_buf(),
        train_sha256: file_sha256(train)?,
        c: ma.c,
        scale: ma.scale,
        label_mapping: ma.label_mapping(),
        kernel: ma.kernel_spec()?,
        validation,
        greedy: ma.greedy_config(),
    })
}

pub fn write_trace<W: Write>(trace: &[TraceRecord], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::io("trace csv", std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["basis_count", "objective", "train_auc", "val_auc", "elapsed_sec"])
        .map_err(io)?;
    for r in trace {
        w.write_record([
            r.basis_count.to_string(),
            r.objective.to_string(),
            r.train_auc.to_string(),
            r.val_auc.map(|a| a.to_string()).unwrap_or_default(),
            r.elapsed_sec.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("trace csv", e))
}

/// Trains and writes the model (and trace); returns what was written.
pub fn cmd_train(args: &TrainArgs) -> Result<(ModelFile, GrowOutcome)> {
    let threads = args.model.threads;
    let (manifest, data) = match (&args.manifest, &args.train) {
        (Some(path), _) => {
            let m = RunManifest::load(path)?;
            if m.format_version != FORMAT_VERSION {
                return Err(Error::ModelFormat(format!(
                    "manifest targets format version {}, this build writes {FORMAT_VERSION}",
                    m.format_version
                )));
            }
            let data = prepare(&m)?;
            (m, data)
        }
        (None, Some(train)) => {
            let mut m = manifest_from_args(args, train)?;
            let data = prepare(&m)?;
            args.model.resolve_budget(&mut m.greedy, data.train.len());
            (m, data)
        }
        (None, None) => return Err(Error::InvalidConfig("a training file or --manifest is required".into())),
    };
    if manifest.greedy.d_max == 0 {
        warn!("d_max is 0: the model will have no basis functions");
    }
    info!(
        "training on {} rows ({} positive), d_max {}, kappa {}",
        data.train.len(),
        data.train.p(),
        manifest.greedy.d_max,
        manifest.greedy.kappa
    );
    let (file, outcome) = fit(&manifest, &data, threads)?;

    if let Some(path) = &args.trace_out {
        let mut buf = Vec::new();
        write_trace(&outcome.trace, &mut buf)?;
        write_atomic(path, &buf)?;
    }
    file.save(&args.model_out)?;

    let last = outcome.trace.last().expect("growth always records a final state");
    let val = last.val_auc.map(|a| format!(", validation AUC {a:.4}")).unwrap_or_default();
    eprintln!(
        "|J| = {}, objective {:.6e}, train AUC {:.4}{val}",
        file.model.len(),
        outcome.objective,
        last.train_auc
    );
    Ok((file, outcome))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let mapping = if args.positive_class.is_empty() {
        file.manifest.label_mapping.clone()
    } else {
        LabelMapping::Positive(args.positive_class.clone())
    };
    let tie = if args.tie_half { TieMode::Half } else { file.manifest.greedy.tie };
    let test = load_libsvm(&args.test, &mapping)?;
    let test = match &file.scaler {
        Some(s) => s.transform_dataset(&test),
        None => test,
    };
    let a = dataset_auc(&file.model, &test, tie)?;
    println!("auc {a}");
    println!("basis_functions {}", file.model.len());
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let rows = load_libsvm_rows(&args.input)?;
    let mut text = String::with_capacity(rows.len() * 24);
    for x in &rows {
        text.push_str(&file.predict(x).to_string());
        text.push('\n');
    }
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let ma = &args.model;
    let ds = load_libsvm(&args.train, &ma.label_mapping())?;
    let ds = if ma.scale { Scaler::fit(&ds).transform_dataset(&ds) } else { ds };
    let mut cfg = ma.greedy_config();
    ma.resolve_budget(&mut cfg, ds.len());
    let grid = GridSpec {
        c_values: args.c_values.clone(),
        sigma_values: args.sigma_values.clone(),
    };
    let plan = CvPlan {
        folds: SplitPlan::k_fold(args.folds, ma.seed),
        repeats: args.repeats,
    };
    let result = with_threads(ma.threads, || grid_search(&ds, &grid, &plan, &cfg))??;
    if let Some(path) = &args.grid_out {
        let mut buf = Vec::new();
        result.write_csv(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    let best = result.best();
    println!("best_C {}", result.best_c);
    println!("best_sigma {}", result.best_sigma);
    println!("mean_auc {}", best.mean_auc());
    println!("std_auc {}", best.std_auc());
    println!("mean_basis_count {}", best.mean_basis_count());
    Ok(())
}

/// Median wall time per thread count, checking that every run yields the same model bytes.
pub fn bench(ds: &Dataset, spec: KernelSpec, c: f64, cfg: &GreedyConfig, threads: &[usize], repeats: usize) -> Result<Vec<(usize, f64)>> {
    if repeats == 0 || threads.is_empty() {
        return Err(Error::InvalidConfig("bench needs at least one thread count and one repeat".into()));
    }
    let mut reference: Option<Vec<u8>> = None;
    let mut rows = Vec::new();
    for &t in threads {
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let out = with_threads(Some(t), || grow(ds, spec, c, cfg, None))??;
            times.push(start.elapsed().as_secs_f64());
            let bytes = model_bytes(&out);
            match &reference {
                None => reference = Some(bytes),
                Some(r) if *r != bytes => {
                    return Err(Error::Diverged(format!("model trained with {t} threads differs from the first run")));
                }
                Some(_) => {}
            }
        }
        times.sort_by(f64::total_cmp);
        rows.push((t, times[times.len() / 2]));
    }
    Ok(rows)
}

fn model_bytes(out: &GrowOutcome) -> Vec<u8> {
    let m = &out.model;
    let mut b = Vec::new();
    for (&q, &beta) in m.basis.iter().zip(&m.beta) {
        b.extend_from_slice(&(q as u64).to_le_bytes());
        b.extend_from_slice(&beta.to_le_bytes());
    }
    b
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let ma = &args.model;
    let ds = load_libsvm(&args.train, &ma.label_mapping())?;
    let ds = if ma.scale { Scaler::fit(&ds).transform_dataset(&ds) } else { ds };
    if ds.len() < BENCH_MIN_ROWS {
        warn!("only {} rows; timings will be dominated by overheads (≥ {BENCH_MIN_ROWS} recommended)", ds.len());
    }
    let mut cfg = ma.greedy_config();
    cfg.early_stop = EarlyStop::None;
    ma.resolve_budget(&mut cfg, ds.len());
    let mut list = args.threads_list.clone();
    let has_one = list.contains(&1);
    if !has_one {
        list.insert(0, 1);
    }
    let rows = bench(&ds, ma.kernel_spec()?, ma.c, &cfg, &list, args.repeats)?;
    let base = rows[list.iter().position(|&t| t == 1).unwrap()].1;

    let mut buf = Vec::new();
    {
        let io = |e: csv::Error| Error::io("bench csv", std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["threads", "median_wall_sec", "speedup_vs_1"]).map_err(io)?;
        for &(t, sec) in &rows {
            if t == 1 && !has_one {
                continue;
            }
            w.write_record([t.to_string(), sec.to_string(), (base / sec).to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("bench csv", e))?;
    }
    match &args.out {
        Some(path) => write_atomic(path, &buf),
        None => std::io::stdout().write_all(&buf).map_err(|e| Error::io("<stdout>", e)),
    }
}
