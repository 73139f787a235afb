//! Forests, their three probability estimators and the proximity kernel.
//!
//! For a query `x` and tree `t`, let `p_t(x)` be the in-bag label fraction of
//! `x`'s leaf. The estimators are
//!
//! * class vote: `(1/T) Σ_t round(p_t(x))`, with `round(0.5) = 1`;
//! * regression mean: `(1/T) Σ_t p_t(x)`;
//! * proximity: `Σ_t pos_t(x) / Σ_t N_t(x)`, where `N_t` and `pos_t` count the
//!   training rows (all of them, not just the bootstrap sample) that share
//!   `x`'s leaf. This equals `Σ_i K_T(x, x_i) y_i / Σ_i K_T(x, x_i)`.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::derive_seed;
use crate::tree::{grow_tree, Tree, TreeParams};
use crate::{check_dims, Error, Kernel, Result};

/// Default upper bound on the number of points in a dense proximity matrix.
pub const DEFAULT_PROXIMITY_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(n_trees: usize, tree: TreeParams, seed: u64) -> Self {
        Self { n_trees, tree, seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    ClassVote,
    RegMean,
    Prox,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::ClassVote, Estimator::RegMean, Estimator::Prox];
}

/// All three estimates at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_vote: f64,
    pub reg_mean: f64,
    pub prox: f64,
}

impl Prediction {
    pub fn get(&self, e: Estimator) -> f64 {
        match e {
            Estimator::ClassVote => self.class_vote,
            Estimator::RegMean => self.reg_mean,
            Estimator::Prox => self.prox,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestStats {
    pub mean_leaf_count: f64,
    pub mean_depth: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    train: Arc<Dataset>,
    params: ForestParams,
}

/// Grows `params.n_trees` trees in parallel. Tree `t` uses seed
/// `derive_seed(params.seed, t)`, so the result does not depend on scheduling.
pub fn train_forest(d: Arc<Dataset>, params: &ForestParams) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::InvalidParam("n_trees must be at least 1".into()));
    }
    params.tree.validate(d.p())?;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(&d, &params.tree, derive_seed(params.seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        train: d,
        params: params.clone(),
    })
}

impl Forest {
    /// Wraps pre-built trees, e.g. hand-constructed ones.
    pub fn from_trees(trees: Vec<Tree>, train: Arc<Dataset>, params: ForestParams) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParam("a forest needs at least one tree".into()));
        }
        if let Some(t) = trees.iter().find(|t| t.p() != train.p()) {
            return Err(Error::DimensionMismatch {
                expected: train.p(),
                got: t.p(),
            });
        }
        Ok(Self { trees, train, params })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn p(&self) -> usize {
        self.train.p()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_dims(self.p(), x.len())?;
        let (mut votes, mut prob_sum, mut pos, mut count) = (0usize, 0.0, 0usize, 0usize);
        for tree in &self.trees {
            let leaf = tree.leaf(x);
            let p = leaf.prob();
            votes += usize::from(p >= 0.5);
            prob_sum += p;
            pos += leaf.member_positives;
            count += leaf.members.len();
        }
        let t = self.trees.len() as f64;
        if count == 0 {
            return Err(Error::ZeroKernelMass);
        }
        Ok(Prediction {
            class_vote: votes as f64 / t,
            reg_mean: prob_sum / t,
            prox: pos as f64 / count as f64,
        })
    }

    pub fn predict_proba(&self, x: &[f64], mode: Estimator) -> Result<f64> {
        Ok(self.predict(x)?.get(mode))
    }

    /// Predictions for every row of `points`, in row order.
    pub fn predict_dataset(&self, points: &Dataset) -> Result<Vec<Prediction>> {
        check_dims(self.p(), points.p())?;
        (0..points.n()).into_par_iter().map(|i| self.predict(points.row(i))).collect()
    }

    /// `K_T(x, z)`: fraction of trees in which `x` and `z` share a leaf.
    pub fn proximity(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        check_dims(self.p(), x.len())?;
        check_dims(self.p(), z.len())?;
        let shared = self.trees.iter().filter(|t| t.leaf_id(x) == t.leaf_id(z)).count();
        Ok(shared as f64 / self.trees.len() as f64)
    }

    pub fn proximity_matrix(&self, points: &Dataset) -> Result<ProximityMatrix> {
        self.proximity_matrix_capped(points, DEFAULT_PROXIMITY_CAP)
    }

    pub fn proximity_matrix_capped(&self, points: &Dataset, cap: usize) -> Result<ProximityMatrix> {
        check_dims(self.p(), points.p())?;
        let n = points.n();
        if n > cap {
            return Err(Error::TooLarge { n, cap });
        }
        let leaf_ids: Vec<Vec<usize>> = self
            .trees
            .par_iter()
            .map(|t| points.rows().map(|x| t.leaf_id(x)).collect())
            .collect();
        let t = self.trees.len() as f64;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n];
                for ids in &leaf_ids {
                    let li = ids[i];
                    for (j, &lj) in ids.iter().enumerate() {
                        if lj == li {
                            row[j] += 1.0;
                        }
                    }
                }
                row.iter_mut().for_each(|v| *v /= t);
                row
            })
            .collect();
        Ok(ProximityMatrix {
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    /// Normalized voting weights of the training rows at `x0`:
    /// `w_i = K_T(x0, x_i) / Σ_j K_T(x0, x_j)`.
    pub fn voting_weights(&self, x0: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.p(), x0.len())?;
        let mut w = vec![0.0; self.train.n()];
        for tree in &self.trees {
            for &i in &tree.leaf(x0).members {
                w[i] += 1.0;
            }
        }
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return Err(Error::ZeroKernelMass);
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }

    pub fn stats(&self) -> ForestStats {
        let t = self.trees.len() as f64;
        ForestStats {
            mean_leaf_count: self.trees.iter().map(|t| t.leaf_count() as f64).sum::<f64>() / t,
            mean_depth: self.trees.iter().map(|t| t.depth() as f64).sum::<f64>() / t,
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

impl Kernel for Forest {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.proximity(x, z)
    }
}

/// Dense symmetric matrix of pairwise proximities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl ProximityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}
