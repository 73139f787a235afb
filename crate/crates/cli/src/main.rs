//! `rfprox`: train forests, probe their proximity kernels, run benchmarks.
//!
//! Results go to `--out` (or stdout). Failures print a JSON object
//! `{"error": {"kind": ..., "message": ...}}` on stderr and exit nonzero.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rfprox::bench::{default_roster, run_experiment, DataSource, EstimatorSpec, ExperimentConfig, Mtry};
use rfprox::data::{augment_junk, load_csv, load_points_csv, Dataset, LabelColumn};
use rfprox::diagnostics::{derivative_report, kernel_grid, sd_steps};
use rfprox::forest::{train_forest, Forest, ForestParams, DEFAULT_PROXIMITY_CAP};
use rfprox::kernel_lab::{
    exact_naive_kernel, mc_proximity_many_with, mc_selection_freq, naive_kernel, strong_weak_weights_with,
    BinomialForm, CutRule, NaiveKernelSpec,
};
use rfprox::synth::{ModelKind, SyntheticModel};
use rfprox::tree::TreeParams;

#[derive(Parser)]
#[command(name = "rfprox", version, about = "Random forest probability estimation and proximity kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and save it as JSON.
    Train(TrainArgs),
    /// Predict probabilities for the points in a CSV.
    Predict(PredictArgs),
    /// Proximity matrix between points.
    Proximity(ProximityArgs),
    /// Naive-kernel weights and analytic vs Monte Carlo comparisons.
    Kernel(KernelArgs),
    /// One-sided directional derivatives of a forest's proximity kernel.
    Deriv(DerivArgs),
    /// Forest proximity over a 2-d slice through a center point.
    Grid(GridArgs),
    /// Write a synthetic dataset as CSV.
    Simulate(SimulateArgs),
    /// Repeated-split benchmark of several estimators.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Class,
    Reg,
    Prox,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        s == Switch::On
    }
}

#[derive(Args)]
struct DataArgs {
    /// Labelled CSV with a header row.
    #[arg(long, conflicts_with = "model")]
    data: Option<PathBuf>,
    /// Label column name, or a 0-based index.
    #[arg(long, default_value = "y")]
    label: String,
    /// Sample from a synthetic model instead of reading a CSV.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Synthetic sample size.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Synthetic input dimension (defaults to the model's own).
    #[arg(long)]
    dim: Option<usize>,
    /// Append N permuted copies of existing columns.
    #[arg(long, default_value_t = 0)]
    junk: usize,
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 200)]
    trees: usize,
    /// Candidate features per split (default sqrt(p), or p/3 for reg).
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Class)]
    mode: Mode,
    #[arg(long)]
    min_node_size: Option<usize>,
    #[arg(long, value_enum)]
    bootstrap: Option<Switch>,
    #[arg(long)]
    max_leaves: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the forest JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Forest saved by `train`.
    #[arg(long)]
    forest: PathBuf,
    /// Points to predict; a column named by --label is ignored if present.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    label: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Either a saved forest or the settings to train one.
#[derive(Args)]
struct KernelSource {
    /// Forest saved by `train`; otherwise one is trained from the data flags.
    #[arg(long)]
    forest: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ForestArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProximityArgs {
    #[command(flatten)]
    source: KernelSource,
    /// Points to compare (default: the training data).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Largest matrix side allowed.
    #[arg(long, default_value_t = DEFAULT_PROXIMITY_CAP)]
    cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[command(subcommand)]
    table: KernelTable,
}

#[derive(Args)]
struct NaiveArgs {
    /// Leaf count M.
    #[arg(long, default_value_t = 32)]
    leaves: usize,
    /// Number of strong variables S.
    #[arg(long, default_value_t = 5)]
    strong: usize,
    /// Number of weak variables W.
    #[arg(long, default_value_t = 85)]
    weak: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KernelTable {
    /// Per-split selection probabilities (mtry, p_S, p_W) over mtry.
    Weights {
        #[command(flatten)]
        naive: NaiveArgs,
        /// Single mtry value; all of 1..=p when omitted.
        #[arg(long)]
        mtry: Option<usize>,
        /// Also simulate this many splits per mtry.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        /// Use the combinatorial term as printed, C(W, mtry-k+1).
        #[arg(long)]
        printed: bool,
    },
    /// Kernel value K(0, t*d) along a direction d: closed form, exact and simulated.
    Curve {
        #[command(flatten)]
        naive: NaiveArgs,
        #[arg(long, default_value_t = 1)]
        mtry: usize,
        #[arg(long, value_enum, default_value_t = Direction::Strong)]
        direction: Direction,
        /// Largest t.
        #[arg(long, default_value_t = 0.5)]
        max: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        /// Simulated trees per point (0 skips the simulation).
        #[arg(long, default_value_t = 20_000)]
        mc_trees: usize,
        #[arg(long, value_enum, default_value_t = Cut::Extent)]
        cut_rule: Cut,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Cut {
    /// Cut uniformly within the leaf's current extent.
    Extent,
    /// Cut uniformly on [0, 1].
    Unit,
}

impl From<Cut> for CutRule {
    fn from(c: Cut) -> Self {
        match c {
            Cut::Extent => CutRule::CellExtent,
            Cut::Unit => CutRule::UnitInterval,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    /// First strong coordinate.
    Strong,
    /// First weak coordinate.
    Weak,
    /// All coordinates equally, scaled to unit L1 norm.
    Diagonal,
}

#[derive(Args)]
struct DerivArgs {
    #[command(flatten)]
    source: KernelSource,
    /// Center point: comma-separated values, `mean` or `origin`.
    #[arg(long, default_value = "mean")]
    at: String,
    /// Step size for every coordinate.
    #[arg(long, default_value_t = 0.25, conflicts_with = "sd_fraction")]
    h: f64,
    /// Use a step of this fraction of each column's standard deviation.
    #[arg(long)]
    sd_fraction: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    source: KernelSource,
    /// Center point: comma-separated values, `mean` or `origin`.
    #[arg(long, default_value = "mean")]
    at: String,
    /// The two plotted coordinates, 0-based.
    #[arg(long, default_value = "0,1")]
    dims: String,
    #[arg(long, default_value_t = 41)]
    resolution: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    junk: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add a `p_true` column with the true probabilities.
    #[arg(long)]
    with_truth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Labelled CSV, split at random each repetition.
    #[arg(long, conflicts_with = "model")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    label: String,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Synthetic model, fresh train and test draws each repetition.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Estimators, e.g. `class:p/3,reg:sqrt,prox:4,bagged,random,prox-best`.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["mode", "mtry"])]
    estimators: Vec<String>,
    /// With --mtry, sweep this estimator over the listed values.
    #[arg(long, value_enum, requires = "mtry")]
    mode: Option<Mode>,
    /// Comma-separated mtry values (integers or sqrt, p/3, p/2, 3p/4, p).
    #[arg(long, value_delimiter = ',', requires = "mode")]
    mtry: Vec<String>,
    #[arg(long, default_value_t = 200)]
    trees: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    junk: usize,
    #[arg(long)]
    min_node_size: Option<usize>,
    #[arg(long, value_enum)]
    bootstrap: Option<Switch>,
    /// JSON report destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the summary table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| {
        let ids: Vec<&str> = ModelKind::ALL.iter().map(|k| k.id()).collect();
        format!("{e}; expected one of {}", ids.join(", "))
    })
}

fn synthetic_model(kind: ModelKind, dim: Option<usize>) -> rfprox::Result<SyntheticModel> {
    match dim {
        Some(d) => SyntheticModel::with_dim(kind, d),
        None => Ok(SyntheticModel::new(kind)),
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

impl DataArgs {
    fn load(&self, seed: u64) -> anyhow::Result<Dataset> {
        let data = match (&self.data, self.model) {
            (Some(path), None) => load_csv(path, &LabelColumn::from(self.label.as_str()))?,
            (None, Some(kind)) => synthetic_model(kind, self.dim)?.sample(self.n, seed)?.data,
            _ => bail!("give either --data or --model"),
        };
        Ok(if self.junk > 0 {
            augment_junk(&data, self.junk, seed.wrapping_add(1))?
        } else {
            data
        })
    }
}

impl ForestArgs {
    fn tree_params(&self, p: usize) -> TreeParams {
        let default_mtry = match self.mode {
            Mode::Reg => Mtry::Third.resolve(p),
            _ => Mtry::Sqrt.resolve(p),
        };
        let mtry = self.mtry.unwrap_or(default_mtry);
        let mut params = match self.mode {
            Mode::Class | Mode::Prox => TreeParams::classification(mtry),
            Mode::Reg => TreeParams::regression(mtry),
            Mode::Random => TreeParams::completely_random(),
        };
        if let Some(m) = self.min_node_size {
            params = params.with_min_node_size(m);
        }
        if let Some(b) = self.bootstrap {
            params = params.with_bootstrap(b.into());
        }
        params.with_max_leaves(self.max_leaves)
    }

    fn train(&self, data: Dataset, seed: u64) -> anyhow::Result<Forest> {
        let params = ForestParams::new(self.trees, self.tree_params(data.p()), seed);
        Ok(train_forest(Arc::new(data), &params)?)
    }
}

impl KernelSource {
    fn forest(&self) -> anyhow::Result<Forest> {
        match &self.forest {
            Some(path) => Ok(Forest::load(path)?),
            None => self.params.train(self.data.load(self.seed)?, self.seed),
        }
    }
}

fn parse_point(spec: &str, train: &Dataset) -> anyhow::Result<Vec<f64>> {
    let x = match spec {
        "mean" => train.column_means(),
        "origin" => vec![0.0; train.p()],
        list => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad coordinate '{v}'")))
            .collect::<anyhow::Result<_>>()?,
    };
    if x.len() != train.p() {
        bail!(rfprox::Error::DimensionMismatch {
            expected: train.p(),
            got: x.len()
        });
    }
    Ok(x)
}

fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let forest = args.forest.train(args.data.load(args.seed)?, args.seed)?;
    forest.save(&args.out)?;
    let stats = forest.stats();
    let summary = json!({
        "forest": args.out,
        "n_trees": forest.n_trees(),
        "n": forest.train().n(),
        "p": forest.p(),
        "mtry": forest.params().tree.mtry,
        "mean_leaf_count": stats.mean_leaf_count,
        "mean_depth": stats.mean_depth,
    });
    println!("{summary}");
    Ok(())
}

fn predict(args: &PredictArgs) -> anyhow::Result<()> {
    let forest = Forest::load(&args.forest)?;
    let points = load_points_csv(&args.data, Some(&args.label))?;
    let preds = forest.predict_dataset(&points)?;
    let mut w = output(args.out.as_deref())?;
    writeln!(w, "row,class_vote,reg_mean,prox")?;
    for (i, p) in preds.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", p.class_vote, p.reg_mean, p.prox)?;
    }
    w.flush()?;
    Ok(())
}

fn proximity(args: &ProximityArgs) -> anyhow::Result<()> {
    let forest = args.source.forest()?;
    let points = match &args.points {
        Some(path) => load_points_csv(path, Some(&args.source.data.label))?,
        None => forest.train().clone(),
    };
    let m = forest.proximity_matrix_capped(&points, args.cap)?;
    let mut w = output(args.out.as_deref())?;
    let header: Vec<String> = (0..m.n()).map(|j| format!("p{j}")).collect();
    writeln!(w, "row,{}", header.join(","))?;
    for i in 0..m.n() {
        let row: Vec<String> = m.row(i).iter().map(f64::to_string).collect();
        writeln!(w, "{i},{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn kernel(args: &KernelArgs) -> anyhow::Result<()> {
    match &args.table {
        KernelTable::Weights {
            naive,
            mtry,
            trials,
            printed,
        } => {
            let p = naive.strong + naive.weak;
            let form = if *printed {
                BinomialForm::Printed
            } else {
                BinomialForm::Corrected
            };
            let grid: Vec<usize> = match mtry {
                Some(m) => vec![*m],
                None => (1..=p).collect(),
            };
            let mut w = output(naive.out.as_deref())?;
            write!(w, "mtry,p_strong,p_weak")?;
            if *trials > 0 {
                write!(w, ",mc_strong,mc_weak")?;
            }
            writeln!(w)?;
            for m in grid {
                let spec = NaiveKernelSpec::new(naive.leaves, naive.strong, naive.weak, m)?;
                let (ps, pw) = strong_weak_weights_with(&spec, form)?;
                write!(w, "{m},{ps},{pw}")?;
                if *trials > 0 {
                    let freq = mc_selection_freq(&spec, *trials, naive.seed.wrapping_add(m as u64))?;
                    let mean = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
                    let (strong, weak) = freq.split_at(naive.strong);
                    write!(w, ",{},{}", mean(strong), mean(weak))?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
        KernelTable::Curve {
            naive,
            mtry,
            direction,
            max,
            steps,
            mc_trees,
            cut_rule,
        } => {
            let rule = CutRule::from(*cut_rule);
            let spec = NaiveKernelSpec::new(naive.leaves, naive.strong, naive.weak, *mtry)?;
            let p = spec.p();
            if *steps < 2 || !(*max > 0.0 && *max <= 1.0) {
                bail!(rfprox::Error::InvalidParam("need --steps >= 2 and --max in (0, 1]".into()));
            }
            let mut dir = vec![0.0; p];
            match direction {
                Direction::Strong if naive.strong > 0 => dir[0] = 1.0,
                Direction::Weak if naive.weak > 0 => dir[naive.strong] = 1.0,
                Direction::Diagonal => dir.iter_mut().for_each(|v| *v = 1.0 / p as f64),
                _ => bail!(rfprox::Error::InvalidParam("no variable of that kind".into())),
            }
            let strong_set: Vec<usize> = (0..naive.strong).collect();
            let ts: Vec<f64> = (0..*steps).map(|i| max * i as f64 / (steps - 1) as f64).collect();
            let xs: Vec<Vec<f64>> = ts.iter().map(|t| dir.iter().map(|d| d * t).collect()).collect();
            let mc = if *mc_trees > 0 {
                Some(mc_proximity_many_with(&spec, &xs, &strong_set, *mc_trees, naive.seed, rule)?)
            } else {
                None
            };
            let mut w = output(naive.out.as_deref())?;
            writeln!(w, "t,analytic,exact,monte_carlo")?;
            for (i, x) in xs.iter().enumerate() {
                let analytic = naive_kernel(&spec, x, &strong_set)?;
                let exact = exact_naive_kernel(&spec, x, &strong_set, rule)?;
                let sim = mc.as_ref().map_or_else(String::new, |m| m[i].to_string());
                writeln!(w, "{},{analytic},{exact},{sim}", ts[i])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn deriv(args: &DerivArgs) -> anyhow::Result<()> {
    let forest = args.source.forest()?;
    let x0 = parse_point(&args.at, forest.train())?;
    let steps = match args.sd_fraction {
        Some(f) => sd_steps(&forest.train().column_sds(), f),
        None => vec![args.h; forest.p()],
    };
    let report = derivative_report(&forest, &x0, &steps)?;
    report.write_csv(output(args.out.as_deref())?)?;
    Ok(())
}

fn grid(args: &GridArgs) -> anyhow::Result<()> {
    let forest = args.source.forest()?;
    let train = forest.train();
    let x0 = parse_point(&args.at, train)?;
    let dims: Vec<usize> = args
        .dims
        .split(',')
        .map(|v| v.trim().parse::<usize>().with_context(|| format!("bad dimension '{v}'")))
        .collect::<anyhow::Result<_>>()?;
    let [a, b] = dims[..] else {
        bail!(rfprox::Error::InvalidParam("--dims takes exactly two indices".into()));
    };
    if a >= train.p() || b >= train.p() {
        bail!(rfprox::Error::InvalidParam(format!("--dims must be below p = {}", train.p())));
    }
    let range = |j: usize| {
        let col = train.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let g = kernel_grid(&forest, &x0, (a, b), args.resolution, [range(a), range(b)])?;
    g.write_csv(output(args.out.as_deref())?)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let sample = synthetic_model(args.model, args.dim)?.sample(args.n, args.seed)?;
    let data = if args.junk > 0 {
        augment_junk(&sample.data, args.junk, args.seed.wrapping_add(1))?
    } else {
        sample.data
    };
    let extra: Vec<(&str, &[f64])> = if args.with_truth {
        vec![("p_true", &sample.true_probs)]
    } else {
        Vec::new()
    };
    data.write_csv_to(output(args.out.as_deref())?, "y", &extra)?;
    Ok(())
}

fn bench(args: &BenchArgs) -> anyhow::Result<()> {
    let source = match (&args.data, args.model) {
        (Some(path), None) => DataSource::Csv {
            path: path.clone(),
            label: args.label.clone(),
            train_fraction: args.train_fraction,
        },
        (None, Some(kind)) => DataSource::Synthetic {
            model: synthetic_model(kind, args.dim)?,
            n_train: args.n_train,
            n_test: args.n_test,
        },
        _ => bail!("give either --data or --model"),
    };
    let estimators = if let Some(mode) = args.mode {
        args.mtry
            .iter()
            .map(|m| {
                let mtry: Mtry = m.parse()?;
                Ok(match mode {
                    Mode::Class => EstimatorSpec::Class { mtry },
                    Mode::Reg => EstimatorSpec::Reg { mtry },
                    Mode::Prox => EstimatorSpec::Prox { mtry },
                    Mode::Random => EstimatorSpec::Random,
                })
            })
            .collect::<rfprox::Result<Vec<_>>>()?
    } else if args.estimators.is_empty() {
        default_roster()
    } else {
        args.estimators
            .iter()
            .map(|s| s.parse())
            .collect::<rfprox::Result<Vec<_>>>()?
    };
    let cfg = ExperimentConfig {
        estimators,
        n_trees: args.trees,
        repetitions: args.reps,
        seed: args.seed,
        junk: args.junk,
        min_node_size: args.min_node_size,
        bootstrap: args.bootstrap.map(bool::from),
        ..ExperimentConfig::new(source)
    };
    let report = run_experiment(&cfg)?;
    if let Some(path) = &args.csv {
        report.write_csv(output(Some(path))?)?;
    }
    let mut w = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Proximity(a) => proximity(a),
        Command::Kernel(a) => kernel(a),
        Command::Deriv(a) => deriv(a),
        Command::Grid(a) => grid(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(err) = e.downcast_ref::<rfprox::Error>() {
        err.kind()
    } else if e.downcast_ref::<io::Error>().is_some() {
        "io"
    } else if e.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else {
        "invalid_argument"
    }
}

/// The error chain, skipping causes already quoted by an outer message.
fn error_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // the reader stopped early, e.g. `| head`
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), &error_message(&e));
            ExitCode::FAILURE
        }
    }
}
