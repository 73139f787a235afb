//! Probability-error metrics and the repeated-split experiment harness.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment_junk, load_csv, train_test_split, Dataset, LabelColumn};
use crate::forest::{train_forest, Estimator, ForestParams};
use crate::rng::derive_seed;
use crate::synth::SyntheticModel;
use crate::tree::TreeParams;
use crate::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::Empty("predictions"));
    }
    crate::check_dims(a, b)
}

/// `sqrt(mean((p̂ - p)²))` against known probabilities.
pub fn rmse_true(predictions: &[f64], true_probs: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), true_probs.len())?;
    let ss: f64 = predictions.iter().zip(true_probs).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / predictions.len() as f64).sqrt())
}

/// `sqrt(mean((p̂ - y)²))` against observed labels.
pub fn rmse_empirical(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let ss: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(a, &y)| (a - f64::from(y)).powi(2))
        .sum();
    Ok((ss / predictions.len() as f64).sqrt())
}

/// Fraction of rows where `p̂ >= 0.5` disagrees with the label.
pub fn misclassification(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let wrong = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &y)| u8::from(**p >= 0.5) != y)
        .count();
    Ok(wrong as f64 / predictions.len() as f64)
}

/// How `mtry` is chosen relative to the number of features `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mtry {
    Fixed(usize),
    Sqrt,
    Third,
    Half,
    ThreeQuarters,
    All,
}

impl Mtry {
    /// Rounded to the nearest integer and clamped to `[1, p]`.
    pub fn resolve(self, p: usize) -> usize {
        let pf = p as f64;
        let raw = match self {
            Mtry::Fixed(m) => m as f64,
            Mtry::Sqrt => pf.sqrt(),
            Mtry::Third => pf / 3.0,
            Mtry::Half => pf / 2.0,
            Mtry::ThreeQuarters => 0.75 * pf,
            Mtry::All => pf,
        };
        (raw.round() as usize).clamp(1, p.max(1))
    }
}

impl fmt::Display for Mtry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mtry::Fixed(m) => write!(f, "{m}"),
            Mtry::Sqrt => f.write_str("sqrt(p)"),
            Mtry::Third => f.write_str("p/3"),
            Mtry::Half => f.write_str("p/2"),
            Mtry::ThreeQuarters => f.write_str("3p/4"),
            Mtry::All => f.write_str("p"),
        }
    }
}

impl FromStr for Mtry {
    type Err = Error;

    /// Accepts an integer, `sqrt`, `sqrt(p)`, `p/3`, `p/2`, `3p/4` or `p`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "sqrt" | "sqrt(p)" => Mtry::Sqrt,
            "p/3" => Mtry::Third,
            "p/2" => Mtry::Half,
            "3p/4" => Mtry::ThreeQuarters,
            "p" => Mtry::All,
            other => match other.parse::<usize>() {
                Ok(m) if m >= 1 => Mtry::Fixed(m),
                _ => return Err(Error::InvalidParam(format!("bad mtry '{other}'"))),
            },
        })
    }
}

/// Grid searched by the tuned proximity estimator.
pub const PROX_TUNING_GRID: [Mtry; 6] = [
    Mtry::Fixed(1),
    Mtry::Sqrt,
    Mtry::Third,
    Mtry::Half,
    Mtry::ThreeQuarters,
    Mtry::All,
];

/// Fraction of the training split held out to tune the proximity estimator.
pub const PROX_VALIDATION_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// Classification forest, class-vote estimate.
    Class { mtry: Mtry },
    /// Regression forest, mean of leaf probabilities.
    Reg { mtry: Mtry },
    /// Classification forest, proximity estimate.
    Prox { mtry: Mtry },
    /// Bagged trees (`mtry = p`), class-vote estimate.
    Bagged,
    /// Completely random forest, class-vote estimate.
    Random,
    /// Proximity estimate with `mtry` tuned on a validation carve-out.
    ProxBest,
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Class { mtry } => format!("class[{mtry}]"),
            EstimatorSpec::Reg { mtry } => format!("reg[{mtry}]"),
            EstimatorSpec::Prox { mtry } => format!("prox[{mtry}]"),
            EstimatorSpec::Bagged => "bagged".into(),
            EstimatorSpec::Random => "random".into(),
            EstimatorSpec::ProxBest => "prox[best]".into(),
        }
    }

    /// Forest settings and the estimator to read out, for `p` features.
    pub fn forest_setup(&self, p: usize) -> (TreeParams, Estimator) {
        match *self {
            EstimatorSpec::Class { mtry } => (TreeParams::classification(mtry.resolve(p)), Estimator::ClassVote),
            EstimatorSpec::Reg { mtry } => (TreeParams::regression(mtry.resolve(p)), Estimator::RegMean),
            EstimatorSpec::Prox { mtry } => (TreeParams::classification(mtry.resolve(p)), Estimator::Prox),
            EstimatorSpec::Bagged => (TreeParams::classification(p), Estimator::ClassVote),
            EstimatorSpec::Random => (TreeParams::completely_random(), Estimator::ClassVote),
            EstimatorSpec::ProxBest => (TreeParams::classification(1), Estimator::Prox),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    /// `class:<mtry>`, `reg:<mtry>`, `prox:<mtry>`, `bagged`, `random` or
    /// `prox-best`; the names printed by [`EstimatorSpec::name`] parse too.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "bagged" => return Ok(EstimatorSpec::Bagged),
            "random" => return Ok(EstimatorSpec::Random),
            "prox-best" | "prox[best]" => return Ok(EstimatorSpec::ProxBest),
            _ => {}
        }
        let (kind, mtry) = s
            .split_once(':')
            .or_else(|| s.strip_suffix(']').and_then(|t| t.split_once('[')))
            .ok_or_else(|| Error::InvalidParam(format!("bad estimator '{s}'")))?;
        let mtry: Mtry = mtry.parse()?;
        match kind {
            "class" => Ok(EstimatorSpec::Class { mtry }),
            "reg" => Ok(EstimatorSpec::Reg { mtry }),
            "prox" => Ok(EstimatorSpec::Prox { mtry }),
            _ => Err(Error::InvalidParam(format!("bad estimator '{s}'"))),
        }
    }
}

/// The seven-column roster: class/reg at `p/3` and `sqrt(p)`, bagged,
/// completely random, tuned proximity.
pub fn default_roster() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::Class { mtry: Mtry::Third },
        EstimatorSpec::Reg { mtry: Mtry::Third },
        EstimatorSpec::Class { mtry: Mtry::Sqrt },
        EstimatorSpec::Reg { mtry: Mtry::Sqrt },
        EstimatorSpec::Bagged,
        EstimatorSpec::Random,
        EstimatorSpec::ProxBest,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Fresh train and test draws from a model each repetition; scored
    /// against the true probabilities.
    Synthetic {
        model: SyntheticModel,
        n_train: usize,
        n_test: usize,
    },
    /// A labelled CSV split at random each repetition; scored against labels.
    Csv {
        path: PathBuf,
        label: String,
        train_fraction: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub estimators: Vec<EstimatorSpec>,
    pub n_trees: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Junk predictors appended to the data each repetition (0 for none).
    pub junk: usize,
    /// Overrides each estimator's default minimum node size.
    #[serde(default)]
    pub min_node_size: Option<usize>,
    /// Overrides each estimator's default bootstrap setting.
    #[serde(default)]
    pub bootstrap: Option<bool>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 200 trees, 10 repetitions, the default roster.
    pub fn new(source: DataSource) -> Self {
        Self {
            source,
            estimators: default_roster(),
            n_trees: 200,
            repetitions: 10,
            seed: 0,
            junk: 0,
            min_node_size: None,
            bootstrap: None,
        }
    }

    fn adjust(&self, mut params: TreeParams) -> TreeParams {
        if let Some(m) = self.min_node_size {
            params = params.with_min_node_size(m);
        }
        if let Some(b) = self.bootstrap {
            params = params.with_bootstrap(b);
        }
        params
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParam("repetitions must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParam("no estimators configured".into()));
        }
        if self.min_node_size == Some(0) {
            return Err(Error::InvalidParam("min_node_size must be at least 1".into()));
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidParam("n_trees must be at least 1".into()));
        }
        match &self.source {
            DataSource::Synthetic { n_train, n_test, .. } if *n_train == 0 || *n_test == 0 => {
                Err(Error::InvalidParam("train and test sizes must be positive".into()))
            }
            DataSource::Csv { train_fraction, .. } if !(*train_fraction > 0.0 && *train_fraction < 1.0) => {
                Err(Error::InvalidParam("train fraction must lie in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RmseTrue,
    RmseEmpirical,
}

/// One estimator on one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub rmse: Option<f64>,
    pub test_error: Option<f64>,
    /// `mtry` actually used (the tuned value for `prox[best]`).
    pub mtry: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_err = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std_err,
            count: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub name: String,
    pub spec: EstimatorSpec,
    pub rmse: Option<Summary>,
    pub test_error: Option<Summary>,
    /// One cell per repetition.
    pub raw: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metric: Metric,
    pub results: Vec<EstimatorResult>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn result(&self, name: &str) -> Option<&EstimatorResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// Summary table: `estimator,rmse_mean,rmse_se,test_error_mean,test_error_se,ok_reps`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "rmse_mean", "rmse_se", "test_error_mean", "test_error_se", "ok_reps"])?;
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
        for r in &self.results {
            w.write_record([
                r.name.clone(),
                fmt(r.rmse.map(|s| s.mean)),
                fmt(r.rmse.map(|s| s.std_err)),
                fmt(r.test_error.map(|s| s.mean)),
                fmt(r.test_error.map(|s| s.std_err)),
                r.rmse.map_or(0, |s| s.count).to_string(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })
    }
}

/// Train/test data for one repetition, plus the truth when known.
struct RepData {
    train: Arc<Dataset>,
    test: Dataset,
    truth: Option<Vec<f64>>,
}

fn rep_data(cfg: &ExperimentConfig, loaded: Option<&Dataset>, rep_seed: u64) -> Result<RepData> {
    match &cfg.source {
        DataSource::Synthetic { model, n_train, n_test } => {
            let sample = model.sample(n_train + n_test, derive_seed(rep_seed, 0))?;
            let data = if cfg.junk > 0 {
                augment_junk(&sample.data, cfg.junk, derive_seed(rep_seed, 1))?
            } else {
                sample.data
            };
            let train_idx: Vec<usize> = (0..*n_train).collect();
            let test_idx: Vec<usize> = (*n_train..n_train + n_test).collect();
            Ok(RepData {
                train: Arc::new(data.subset(&train_idx)?),
                test: data.subset(&test_idx)?,
                truth: Some(sample.true_probs[*n_train..].to_vec()),
            })
        }
        DataSource::Csv { train_fraction, .. } => {
            let data = loaded.expect("csv source is loaded before the run");
            let data = if cfg.junk > 0 {
                augment_junk(data, cfg.junk, derive_seed(rep_seed, 1))?
            } else {
                data.clone()
            };
            let split = train_test_split(&data, *train_fraction, derive_seed(rep_seed, 2))?;
            Ok(RepData {
                train: Arc::new(split.train),
                test: split.test,
                truth: None,
            })
        }
    }
}

fn fit_predict(
    train: Arc<Dataset>,
    test: &Dataset,
    params: TreeParams,
    estimator: Estimator,
    n_trees: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let forest = train_forest(train, &ForestParams::new(n_trees, params, seed))?;
    Ok(forest
        .predict_dataset(test)?
        .into_iter()
        .map(|p| p.get(estimator))
        .collect())
}

/// Picks `mtry` for the proximity estimator by validation RMSE against labels;
/// ties go to the smaller `mtry`.
pub fn tune_prox_mtry(train: &Dataset, base: TreeParams, n_trees: usize, seed: u64) -> Result<usize> {
    let p = train.p();
    let mut grid: Vec<usize> = PROX_TUNING_GRID.iter().map(|m| m.resolve(p)).collect();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let split = train_test_split(train, 1.0 - PROX_VALIDATION_FRACTION, derive_seed(seed, 0))?;
    let inner = Arc::new(split.train);
    let mut best = (f64::INFINITY, grid[0]);
    for (k, &m) in grid.iter().enumerate() {
        let preds = fit_predict(
            inner.clone(),
            &split.test,
            TreeParams { mtry: m, ..base },
            Estimator::Prox,
            n_trees,
            derive_seed(seed, 1 + k as u64),
        )?;
        let score = rmse_empirical(&preds, split.test.labels())?;
        if score < best.0 {
            best = (score, m);
        }
    }
    Ok(best.1)
}

fn run_cell(cfg: &ExperimentConfig, spec: &EstimatorSpec, data: &RepData, seed: u64) -> Result<Cell> {
    let n_trees = cfg.n_trees;
    let (params, estimator) = spec.forest_setup(data.train.p());
    let mut params = cfg.adjust(params);
    if let EstimatorSpec::ProxBest = spec {
        params.mtry = tune_prox_mtry(&data.train, params, n_trees, derive_seed(seed, 1))?;
    }
    let mtry = params.mtry;
    let preds = fit_predict(data.train.clone(), &data.test, params, estimator, n_trees, seed)?;
    let rmse = match &data.truth {
        Some(truth) => rmse_true(&preds, truth)?,
        None => rmse_empirical(&preds, data.test.labels())?,
    };
    Ok(Cell {
        rmse: Some(rmse),
        test_error: Some(misclassification(&preds, data.test.labels())?),
        mtry: (!matches!(spec, EstimatorSpec::Random)).then_some(mtry),
        error: None,
    })
}

/// Runs every estimator on every repetition.
///
/// Repetition `r` uses seed `derive_seed(cfg.seed, r)`; estimator `k` within it
/// uses a seed derived from that, so the report does not depend on scheduling.
/// A failing estimator is recorded in its cell and does not stop the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let loaded = match &cfg.source {
        DataSource::Csv { path, label, .. } => Some(load_csv(path, &LabelColumn::from(label.as_str()))?),
        DataSource::Synthetic { .. } => None,
    };
    let metric = match cfg.source {
        DataSource::Synthetic { .. } => Metric::RmseTrue,
        DataSource::Csv { .. } => Metric::RmseEmpirical,
    };
    let reps: Vec<Vec<Cell>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(cfg.seed, r as u64);
            let data = rep_data(cfg, loaded.as_ref(), rep_seed)?;
            Ok(cfg
                .estimators
                .iter()
                .enumerate()
                .map(|(k, spec)| {
                    run_cell(cfg, spec, &data, derive_seed(rep_seed, 100 + k as u64)).unwrap_or_else(|e| Cell {
                        rmse: None,
                        test_error: None,
                        mtry: None,
                        error: Some(e.to_string()),
                    })
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let results = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let raw: Vec<Cell> = reps.iter().map(|cells| cells[k].clone()).collect();
            let rmse: Vec<f64> = raw.iter().filter_map(|c| c.rmse).collect();
            let err: Vec<f64> = raw.iter().filter_map(|c| c.test_error).collect();
            EstimatorResult {
                name: spec.name(),
                spec: *spec,
                rmse: Summary::of(&rmse),
                test_error: Summary::of(&err),
                raw,
            }
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        metric,
        results,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
