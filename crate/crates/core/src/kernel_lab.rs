//! Analytic kernels and their Monte Carlo oracles.
//!
//! The stylized forest grows `M` leaves on `[0, 1]^p`: each step picks a leaf
//! uniformly, draws `mtry` candidate variables, splits on a uniformly chosen
//! strong candidate (or a uniformly chosen candidate when none is strong) at a
//! point uniform over the leaf's extent. A given strong variable is split with
//! probability
//!
//! ```text
//! p_S = Σ_{k=1}^{min(S, mtry)} C(S-1, k-1) C(W, mtry-k) / (k C(p, mtry))
//! ```
//!
//! and a given weak one with `p_W = (1 - S p_S) / W`, giving the approximate
//! proximity `K(0, x) ≈ exp(-log M (p_S Σ_strong x + p_W Σ_weak x))`.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{misclassification, rmse_true};
use crate::data::Dataset;
use crate::rng::{child_rng, Rng};
use crate::{check_dims, Error, Kernel, Result};

/// Trials simulated per independently seeded chunk.
const MC_CHUNK: usize = 4096;

/// Parameters of the stylized forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaiveKernelSpec {
    /// Number of leaves `M`.
    pub leaves: usize,
    pub strong: usize,
    pub weak: usize,
    pub mtry: usize,
}

impl NaiveKernelSpec {
    pub fn new(leaves: usize, strong: usize, weak: usize, mtry: usize) -> Result<Self> {
        let spec = Self {
            leaves,
            strong,
            weak,
            mtry,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn p(&self) -> usize {
        self.strong + self.weak
    }

    fn validate(&self) -> Result<()> {
        if self.p() == 0 {
            return Err(Error::InvalidParam("need at least one strong or weak variable".into()));
        }
        if self.leaves == 0 {
            return Err(Error::InvalidParam("leaf count M must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > self.p() {
            return Err(Error::InvalidParam(format!(
                "mtry = {} must lie in [1, {}]",
                self.mtry,
                self.p()
            )));
        }
        Ok(())
    }
}

/// Which weak-variable binomial enters `p_S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinomialForm {
    /// `C(W, mtry - k)`: the remaining `mtry - k` candidates are weak.
    Corrected,
    /// `C(W, mtry - k + 1)`, kept only for comparison; it does not sum to a
    /// probability distribution.
    Printed,
}

/// `C(n, k)` as a float; zero when `k > n` or `k < 0`.
pub fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, i| acc * (n - k + i) as f64 / i as f64)
}

/// `(p_S, p_W)` with the corrected binomial.
pub fn strong_weak_weights(spec: &NaiveKernelSpec) -> Result<(f64, f64)> {
    strong_weak_weights_with(spec, BinomialForm::Corrected)
}

pub fn strong_weak_weights_with(spec: &NaiveKernelSpec, form: BinomialForm) -> Result<(f64, f64)> {
    spec.validate()?;
    let (s, w, mtry) = (spec.strong as i64, spec.weak as i64, spec.mtry as i64);
    let total = binomial(s + w, mtry);
    let offset = match form {
        BinomialForm::Corrected => 0,
        BinomialForm::Printed => 1,
    };
    let p_s: f64 = (1..=s.min(mtry))
        .map(|k| binomial(s - 1, k - 1) * binomial(w, mtry - k + offset) / (k as f64 * total))
        .sum();
    let p_w = if w == 0 {
        0.0
    } else {
        (1.0 - s as f64 * p_s) / w as f64
    };
    Ok((p_s, p_w))
}

fn check_strong_set(p: usize, s: usize, strong_set: &[usize]) -> Result<Vec<bool>> {
    let set: BTreeSet<usize> = strong_set.iter().copied().collect();
    if set.len() != s || strong_set.len() != s || set.iter().any(|&j| j >= p) {
        return Err(Error::InvalidParam(format!(
            "strong set must hold {s} distinct indices below {p}"
        )));
    }
    let mut is_strong = vec![false; p];
    for j in set {
        is_strong[j] = true;
    }
    Ok(is_strong)
}

/// `p_S Σ_strong x_s + p_W Σ_weak x_w`, so that the naive kernel is `M^(-exponent)`.
pub fn naive_exponent(spec: &NaiveKernelSpec, x: &[f64], strong_set: &[usize]) -> Result<f64> {
    check_dims(spec.p(), x.len())?;
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParam("naive kernel arguments must lie in [0, 1]".into()));
    }
    let is_strong = check_strong_set(spec.p(), spec.strong, strong_set)?;
    let (p_s, p_w) = strong_weak_weights(spec)?;
    Ok(x.iter()
        .zip(&is_strong)
        .map(|(v, &strong)| if strong { p_s * v } else { p_w * v })
        .sum())
}

/// Closed-form approximation of the stylized forest's proximity `K(0, x)`.
pub fn naive_kernel(spec: &NaiveKernelSpec, x: &[f64], strong_set: &[usize]) -> Result<f64> {
    let exponent = naive_exponent(spec, x, strong_set)?;
    Ok((-(spec.leaves as f64).ln() * exponent).exp())
}

/// Where the stylized forest places a cut on the chosen coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutRule {
    /// Uniform over the leaf's current extent.
    #[default]
    CellExtent,
    /// Uniform over `[0, 1]` whatever the leaf's extent; a cut outside the
    /// leaf leaves one child empty.
    UnitInterval,
}

impl CutRule {
    /// Probability that `k` cuts on one coordinate of the origin's leaf all
    /// miss `[0, x]`.
    fn survival(self, x: f64, k: usize) -> f64 {
        match self {
            CutRule::UnitInterval => (1.0 - x).powi(k as i32),
            CutRule::CellExtent if x <= 0.0 => 1.0,
            CutRule::CellExtent => {
                // P(Poisson(-ln x) >= k)
                let w = -x.ln();
                let mut term = (-w).exp();
                let mut below = 0.0;
                for i in 0..k {
                    below += term;
                    term *= w / (i + 1) as f64;
                }
                (1.0 - below).max(0.0)
            }
        }
    }
}

/// Exact `K(0, x)` of the stylized forest with `M` leaves, without the
/// Poisson and Laplace approximations behind [`naive_kernel`].
///
/// The origin's leaf is cut `K` times, `K` a sum of Bernoulli(1/m) for
/// `m = 1..M-1`; given `K`, cuts fall on coordinates multinomially with
/// probabilities `p_S`, `p_W`, and `x` survives coordinate `j` with
/// probability [`CutRule`]-dependent in `k_j`.
pub fn exact_naive_kernel(spec: &NaiveKernelSpec, x: &[f64], strong_set: &[usize], rule: CutRule) -> Result<f64> {
    check_dims(spec.p(), x.len())?;
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParam("naive kernel arguments must lie in [0, 1]".into()));
    }
    let is_strong = check_strong_set(spec.p(), spec.strong, strong_set)?;
    let (p_s, p_w) = strong_weak_weights(spec)?;
    let k_max = spec.leaves - 1;

    let mut cuts = vec![0.0; k_max + 1];
    cuts[0] = 1.0;
    for m in 1..=k_max {
        let q = 1.0 / m as f64;
        for k in (0..=m).rev() {
            let from_below = if k > 0 { cuts[k - 1] * q } else { 0.0 };
            cuts[k] = cuts[k] * (1.0 - q) + from_below;
        }
    }

    // Exponential generating function of the multinomial split, truncated at k_max.
    let mut poly = vec![0.0; k_max + 1];
    poly[0] = 1.0;
    for (j, &xj) in x.iter().enumerate() {
        let q = if is_strong[j] { p_s } else { p_w };
        let mut a = Vec::with_capacity(k_max + 1);
        let mut coef = 1.0;
        for k in 0..=k_max {
            a.push(coef * rule.survival(xj, k));
            coef *= q / (k + 1) as f64;
        }
        poly = (0..=k_max)
            .map(|k| (0..=k).map(|i| poly[i] * a[k - i]).sum())
            .collect();
    }
    let mut factorial = 1.0;
    let mut total = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            factorial *= k as f64;
        }
        total += cuts[k] * factorial * poly[k];
    }
    Ok(total.clamp(0.0, 1.0))
}

/// The naive kernel made translation invariant: `K(x, z) = K(0, |x - z|)`.
#[derive(Clone, Debug)]
pub struct NaiveKernel {
    pub spec: NaiveKernelSpec,
    pub strong_set: Vec<usize>,
}

impl Kernel for NaiveKernel {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        check_dims(x.len(), z.len())?;
        let diff: Vec<f64> = x.iter().zip(z).map(|(a, b)| (a - b).abs().min(1.0)).collect();
        naive_kernel(&self.spec, &diff, &self.strong_set)
    }
}

/// One candidate draw and variable choice of the stylized forest. Variables
/// `is_strong[j]` are strong.
fn choose_split_variable(rng: &mut Rng, is_strong: &[bool], mtry: usize, buf: &mut Vec<usize>) -> usize {
    let candidates = sample(rng, is_strong.len(), mtry);
    buf.clear();
    buf.extend(candidates.iter().filter(|&j| is_strong[j]));
    if buf.is_empty() {
        candidates.index(rng.gen_range(0..mtry))
    } else {
        buf[rng.gen_range(0..buf.len())]
    }
}

/// Empirical per-variable split frequencies over `trials` independent splits.
/// Variables `0..S` are the strong ones.
pub fn mc_selection_freq(spec: &NaiveKernelSpec, trials: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be at least 1".into()));
    }
    let p = spec.p();
    let is_strong: Vec<bool> = (0..p).map(|j| j < spec.strong).collect();
    let chunks = trials.div_ceil(MC_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = child_rng(seed, c as u64);
            let mut counts = vec![0u64; p];
            let mut buf = Vec::with_capacity(spec.mtry);
            let len = MC_CHUNK.min(trials - c * MC_CHUNK);
            for _ in 0..len {
                counts[choose_split_variable(&mut rng, &is_strong, spec.mtry, &mut buf)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; p],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

/// Grows one data-free stylized tree with `spec.leaves` leaves and reports,
/// for each query, whether it shares a leaf with the origin.
fn stylized_tree_hits(
    spec: &NaiveKernelSpec,
    is_strong: &[bool],
    xs: &[Vec<f64>],
    rule: CutRule,
    rng: &mut Rng,
) -> Vec<bool> {
    #[derive(Clone)]
    enum Cell {
        Split { var: usize, at: f64, left: usize, right: usize },
        Leaf { lo: Vec<f64>, hi: Vec<f64> },
    }
    let p = spec.p();
    let mut cells = vec![Cell::Leaf {
        lo: vec![0.0; p],
        hi: vec![1.0; p],
    }];
    let mut leaves = vec![0usize];
    let mut buf = Vec::with_capacity(spec.mtry);
    for _ in 1..spec.leaves {
        let slot = rng.gen_range(0..leaves.len());
        let id = leaves[slot];
        let var = choose_split_variable(rng, is_strong, spec.mtry, &mut buf);
        let Cell::Leaf { lo, hi } = cells[id].clone() else {
            unreachable!("leaves list only holds leaves")
        };
        let at = match rule {
            CutRule::CellExtent => rng.gen_range(lo[var]..=hi[var]),
            CutRule::UnitInterval => rng.gen_range(0.0..=1.0),
        };
        let (mut left_hi, mut right_lo) = (hi.clone(), lo.clone());
        left_hi[var] = at;
        right_lo[var] = at;
        let left = cells.len();
        cells.push(Cell::Leaf { lo, hi: left_hi });
        cells.push(Cell::Leaf { lo: right_lo, hi });
        cells[id] = Cell::Split {
            var,
            at,
            left,
            right: left + 1,
        };
        leaves[slot] = left;
        leaves.push(left + 1);
    }
    let locate = |x: &[f64]| {
        let mut id = 0;
        while let Cell::Split { var, at, left, right } = &cells[id] {
            id = if x[*var] <= *at { *left } else { *right };
        }
        id
    };
    let origin = locate(&vec![0.0; p]);
    xs.iter().map(|x| locate(x) == origin).collect()
}

/// Monte Carlo proximity `K(0, x)` of the stylized forest for several queries,
/// sharing the same `n_trees` trees.
pub fn mc_proximity_many(
    spec: &NaiveKernelSpec,
    xs: &[Vec<f64>],
    strong_set: &[usize],
    n_trees: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    mc_proximity_many_with(spec, xs, strong_set, n_trees, seed, CutRule::CellExtent)
}

pub fn mc_proximity_many_with(
    spec: &NaiveKernelSpec,
    xs: &[Vec<f64>],
    strong_set: &[usize],
    n_trees: usize,
    seed: u64,
    rule: CutRule,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if n_trees == 0 {
        return Err(Error::InvalidParam("n_trees must be at least 1".into()));
    }
    for x in xs {
        check_dims(spec.p(), x.len())?;
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParam("query points must lie in [0, 1]^p".into()));
        }
    }
    let is_strong = check_strong_set(spec.p(), spec.strong, strong_set)?;
    let chunks = n_trees.div_ceil(MC_CHUNK);
    let hits = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = child_rng(seed, c as u64);
            let mut hits = vec![0u64; xs.len()];
            for _ in 0..MC_CHUNK.min(n_trees - c * MC_CHUNK) {
                for (h, hit) in hits.iter_mut().zip(stylized_tree_hits(spec, &is_strong, xs, rule, &mut rng)) {
                    *h += u64::from(hit);
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; xs.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(hits.into_iter().map(|h| h as f64 / n_trees as f64).collect())
}

/// Monte Carlo proximity `K(0, x)` of the stylized forest.
pub fn mc_proximity(spec: &NaiveKernelSpec, x: &[f64], strong_set: &[usize], n_trees: usize, seed: u64) -> Result<f64> {
    Ok(mc_proximity_many(spec, &[x.to_vec()], strong_set, n_trees, seed)?[0])
}

/// Symmetric Laplacian kernel `exp(-(log M / p) ||x - z||_1)`.
pub fn breiman_kernel(x: &[f64], z: &[f64], leaves: f64, p: usize) -> Result<f64> {
    BreimanKernel { leaves, p }.eval(x, z)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreimanKernel {
    /// `M`; real-valued so the closed form can be probed at any scale.
    pub leaves: f64,
    pub p: usize,
}

impl Kernel for BreimanKernel {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        check_dims(x.len(), z.len())?;
        if !(self.leaves >= 1.0) || self.p == 0 {
            return Err(Error::InvalidParam("need M >= 1 and p >= 1".into()));
        }
        let l1: f64 = x.iter().zip(z).map(|(a, b)| (a - b).abs()).sum();
        Ok((-self.leaves.ln() / self.p as f64 * l1).exp())
    }
}

/// Weighted Laplace kernel `exp(-λ Σ_j w_j |x_j - z_j|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceKernel {
    lambda: f64,
    weights: Vec<f64>,
}

impl LaplaceKernel {
    /// Rescales `weights` to sum to one.
    pub fn normalized(lambda: f64, weights: &[f64]) -> Result<Self> {
        let k = Self::unnormalized(lambda, weights)?;
        let total: f64 = k.weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParam("kernel weights sum to zero".into()));
        }
        Ok(Self {
            lambda,
            weights: k.weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Uses `weights` as given, e.g. `(10, 1)`.
    pub fn unnormalized(lambda: f64, weights: &[f64]) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParam(format!("bandwidth {lambda} must be finite and >= 0")));
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParam("kernel weights must be finite and >= 0".into()));
        }
        Ok(Self {
            lambda,
            weights: weights.to_vec(),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn exponent(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        check_dims(self.weights.len(), x.len())?;
        check_dims(self.weights.len(), z.len())?;
        let d: f64 = self
            .weights
            .iter()
            .zip(x.iter().zip(z))
            .map(|(w, (a, b))| w * (a - b).abs())
            .sum();
        Ok(-self.lambda * d)
    }
}

impl Kernel for LaplaceKernel {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.exponent(x, z)?.exp())
    }

    fn log_eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.exponent(x, z)
    }
}

/// `K(x, z)` for a Laplace kernel.
pub fn laplace_eval(k: &LaplaceKernel, x: &[f64], z: &[f64]) -> Result<f64> {
    k.eval(x, z)
}

/// Nadaraya-Watson estimate `Σ K(x0, x_i) y_i / Σ K(x0, x_i)`.
///
/// Weights are combined in the log domain, so kernels whose values underflow
/// individually still give an estimate as long as some weight is nonzero.
pub fn nw_estimate<K: Kernel + ?Sized>(kernel: &K, train: &Dataset, x0: &[f64]) -> Result<f64> {
    check_dims(train.p(), x0.len())?;
    let logs = train
        .rows()
        .map(|x| kernel.log_eval(x0, x))
        .collect::<Result<Vec<f64>>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::ZeroKernelMass);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (l, &y) in logs.iter().zip(train.labels()) {
        let w = (l - max).exp();
        num += w * f64::from(y);
        den += w;
    }
    Ok(num / den)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || count == 0 {
        return Err(Error::InvalidParam(format!("bad grid [{lo}, {hi}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| lo * (step * i as f64).exp()).collect())
}

/// Default bandwidth grid length.
pub const LAMBDA_GRID_LEN: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub rmse: f64,
    pub test_error: f64,
}

/// Holdout RMSE against the true probabilities for a Laplace kernel with the
/// given (unnormalized) weights at each bandwidth of `grid`.
pub fn laplace_bandwidth_sweep(
    weights: &[f64],
    grid: &[f64],
    train: &Dataset,
    test: &Dataset,
    truth: &[f64],
) -> Result<Vec<SweepPoint>> {
    check_dims(test.n(), truth.len())?;
    grid.iter()
        .map(|&lambda| {
            let k = LaplaceKernel::unnormalized(lambda, weights)?;
            let preds = (0..test.n())
                .into_par_iter()
                .map(|i| nw_estimate(&k, train, test.row(i)))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepPoint {
                lambda,
                rmse: rmse_true(&preds, truth)?,
                test_error: misclassification(&preds, test.labels())?,
            })
        })
        .collect()
}

/// The sweep point with the lowest RMSE.
pub fn best_point(points: &[SweepPoint]) -> Option<SweepPoint> {
    points.iter().copied().min_by(|a, b| a.rmse.total_cmp(&b.rmse))
}
