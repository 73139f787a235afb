//! Binary-label decision trees.
//!
//! Trees are grown breadth-first. At each node either the best split over
//! `mtry` randomly drawn candidate features is taken (Gini or squared error;
//! the two coincide for 0/1 labels), or, in completely random mode, a feature
//! and a threshold are drawn uniformly.
//!
//! Every leaf keeps two sets of statistics:
//!
//! * the in-bag rows (with bootstrap multiplicity), which define the per-tree
//!   probability `f(θ, x)`;
//! * the members, i.e. every training row routed to the leaf after growth,
//!   which define the proximity function and the proximity estimator.
//!
//! Without bootstrap the two coincide.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{rng_from_seed, Rng};
use crate::{check_dims, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Best split among `mtry` candidate features.
    Impurity,
    /// Feature and threshold drawn uniformly at random.
    CompletelyRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub mtry: usize,
    /// Nodes with fewer than `2 * min_node_size` rows are not split, and
    /// impurity splits leave at least `min_node_size` rows on each side.
    pub min_node_size: usize,
    pub max_leaves: Option<usize>,
    pub split_mode: SplitMode,
    pub bootstrap: bool,
    pub criterion: Criterion,
}

impl TreeParams {
    /// Classification-style defaults: terminal node size 1, bootstrap on, Gini.
    pub fn classification(mtry: usize) -> Self {
        Self {
            mtry,
            min_node_size: 1,
            max_leaves: None,
            split_mode: SplitMode::Impurity,
            bootstrap: true,
            criterion: Criterion::Gini,
        }
    }

    /// Regression-style defaults: terminal node size 5, bootstrap on, MSE.
    pub fn regression(mtry: usize) -> Self {
        Self {
            min_node_size: 5,
            criterion: Criterion::Mse,
            ..Self::classification(mtry)
        }
    }

    pub fn completely_random() -> Self {
        Self {
            split_mode: SplitMode::CompletelyRandom,
            ..Self::classification(1)
        }
    }

    pub fn with_bootstrap(mut self, bootstrap: bool) -> Self {
        self.bootstrap = bootstrap;
        self
    }

    pub fn with_min_node_size(mut self, size: usize) -> Self {
        self.min_node_size = size;
        self
    }

    pub fn with_max_leaves(mut self, leaves: Option<usize>) -> Self {
        self.max_leaves = leaves;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.mtry == 0 || self.mtry > p {
            return Err(Error::InvalidParam(format!("mtry = {} must lie in [1, {p}]", self.mtry)));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidParam("min_node_size must be at least 1".into()));
        }
        if self.max_leaves == Some(0) {
            return Err(Error::InvalidParam("max_leaves must be at least 1".into()));
        }
        Ok(())
    }
}

/// A candidate split of a node's rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Rows with `x[feature] <= threshold`.
    pub left_rows: Vec<usize>,
    pub right_rows: Vec<usize>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// In-bag row count `N(θ, x)`, with bootstrap multiplicity.
    pub n: usize,
    pub positives: usize,
    /// In-bag rows, repeated according to bootstrap multiplicity.
    pub rows: Vec<usize>,
    /// Every training row that falls in this leaf.
    pub members: Vec<usize>,
    pub member_positives: usize,
    pub depth: usize,
}

impl Leaf {
    /// A leaf whose in-bag rows and members are both `rows`.
    pub fn from_rows(rows: Vec<usize>, d: &Dataset, depth: usize) -> Self {
        let positives = rows.iter().filter(|&&i| d.label(i) == 1).count();
        Self {
            n: rows.len(),
            positives,
            members: rows.clone(),
            member_positives: positives,
            rows,
            depth,
        }
    }

    /// Fraction of in-bag rows labelled 1; 0 for an empty leaf.
    pub fn prob(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.positives as f64 / self.n as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// A grown tree stored as a node arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    seed: u64,
    leaf_count: usize,
    p: usize,
}

impl Tree {
    /// Assembles a tree from an arena, checking child links and feature indices.
    pub fn from_nodes(nodes: Vec<Node>, p: usize, seed: u64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidData("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        let mut leaf_count = 0;
        while let Some(id) = stack.pop() {
            if id >= nodes.len() || std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvalidData(format!("bad child link to node {id}")));
            }
            match &nodes[id] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= p || !threshold.is_finite() {
                        return Err(Error::InvalidData(format!("node {id} has an invalid split")));
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
                Node::Leaf(_) => leaf_count += 1,
            }
        }
        Ok(Self {
            nodes,
            seed,
            leaf_count,
            p,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Depth of the deepest leaf (a single-leaf tree has depth 0).
    pub fn depth(&self) -> usize {
        self.leaves().map(|(_, l)| l.depth).max().unwrap_or(0)
    }

    /// `(node id, leaf)` pairs.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Leaf)> {
        self.nodes.iter().enumerate().filter_map(|(id, node)| match node {
            Node::Leaf(leaf) => Some((id, leaf)),
            Node::Internal { .. } => None,
        })
    }

    /// Node id of the leaf containing `x`. Does not check the dimension.
    #[inline]
    pub fn leaf_id(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf(_) => return id,
            }
        }
    }

    #[inline]
    pub fn leaf(&self, x: &[f64]) -> &Leaf {
        match &self.nodes[self.leaf_id(x)] {
            Node::Leaf(leaf) => leaf,
            Node::Internal { .. } => unreachable!("leaf_id returns a leaf"),
        }
    }

    /// The per-tree probability `f(θ, x)`: fraction of in-bag rows in `x`'s
    /// leaf with label 1.
    pub fn prob(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.p, x.len())?;
        Ok(self.leaf(x).prob())
    }

    /// Nested, human-readable JSON form of the tree.
    ///
    /// Internal nodes are `{"feature", "threshold", "left", "right"}`, leaves are
    /// `{"n", "positives", "prob", "members", "member_positives", "depth"}`.
    pub fn to_nested_json(&self) -> serde_json::Value {
        fn walk(nodes: &[Node], id: usize) -> serde_json::Value {
            match &nodes[id] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => serde_json::json!({
                    "feature": feature,
                    "threshold": threshold,
                    "left": walk(nodes, *left),
                    "right": walk(nodes, *right),
                }),
                Node::Leaf(leaf) => serde_json::json!({
                    "n": leaf.n,
                    "positives": leaf.positives,
                    "prob": leaf.prob(),
                    "members": leaf.members.len(),
                    "member_positives": leaf.member_positives,
                    "depth": leaf.depth,
                }),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Convenience wrapper for [`Tree::prob`].
pub fn tree_prob(t: &Tree, x: &[f64]) -> Result<f64> {
    t.prob(x)
}

/// Best split of `rows` over `candidates`, leaving at least one row per side.
///
/// Thresholds are midpoints between consecutive distinct in-node values; ties
/// go to the lowest feature index, then the lowest threshold. Returns `None`
/// for a pure node or when no candidate has two distinct values.
pub fn best_split(rows: &[usize], d: &Dataset, candidates: &[usize], criterion: Criterion) -> Option<Split> {
    best_split_min(rows, d, candidates, criterion, 1)
}

/// Node impurity of a `(count, positives)` daughter under `criterion`.
#[inline]
fn daughter_score(criterion: Criterion, n: f64, sum: f64, sum_sq: f64) -> f64 {
    match criterion {
        Criterion::Gini => {
            let p = sum / n;
            n * p * (1.0 - p)
        }
        Criterion::Mse => sum_sq - sum * sum / n,
    }
}

fn best_split_min(
    rows: &[usize],
    d: &Dataset,
    candidates: &[usize],
    criterion: Criterion,
    min_leaf: usize,
) -> Option<Split> {
    let m = rows.len();
    let positives = rows.iter().filter(|&&i| d.label(i) == 1).count();
    if m < 2 * min_leaf || positives == 0 || positives == m {
        return None;
    }
    let mut features: Vec<usize> = candidates.to_vec();
    features.sort_unstable();
    features.dedup();

    // scores of distinct splits differ by far more than this for any realistic n
    let tol = 1e-10 * m as f64;
    let total_sum = positives as f64;
    let total_sq: f64 = rows.iter().map(|&i| f64::from(d.label(i)).powi(2)).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(m);
    for &f in &features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&i| (d.value(i, f), d.label(i))));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let (mut n_left, mut sum_left, mut sq_left) = (0usize, 0.0f64, 0.0f64);
        for k in 0..m - 1 {
            let y = f64::from(pairs[k].1);
            n_left += 1;
            sum_left += y;
            sq_left += y * y;
            let (v, next) = (pairs[k].0, pairs[k + 1].0);
            if v == next || n_left < min_leaf || m - n_left < min_leaf {
                continue;
            }
            let n_right = (m - n_left) as f64;
            let sum_right = total_sum - sum_left;
            let score = daughter_score(criterion, n_left as f64, sum_left, sq_left)
                + daughter_score(criterion, n_right, sum_right, total_sq - sq_left);
            if best.is_none_or(|(s, _, _)| score < s - tol) {
                let mut threshold = 0.5 * (v + next);
                if threshold >= next {
                    threshold = v;
                }
                best = Some((score, f, threshold));
            }
        }
    }
    let (score, feature, threshold) = best?;
    let (left_rows, right_rows) = rows.iter().partition(|&&i| d.value(i, feature) <= threshold);
    Some(Split {
        feature,
        threshold,
        left_rows,
        right_rows,
        score,
    })
}

/// Uniformly random feature (among those not constant in the node) and a
/// threshold uniform on the open in-node range of that feature.
fn random_split(rows: &[usize], d: &Dataset, rng: &mut Rng) -> Option<Split> {
    let ranges: Vec<(usize, f64, f64)> = (0..d.p())
        .filter_map(|f| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = d.value(i, f);
                (lo.min(v), hi.max(v))
            });
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return None;
    }
    let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
    let threshold = loop {
        let t = rng.gen_range(lo..hi);
        if t > lo {
            break t;
        }
    };
    let (left_rows, right_rows) = rows.iter().partition(|&&i| d.value(i, feature) <= threshold);
    Some(Split {
        feature,
        threshold,
        left_rows,
        right_rows,
        score: 0.0,
    })
}

/// Grows one tree on `d`. Deterministic given `seed`.
pub fn grow_tree(d: &Dataset, params: &TreeParams, seed: u64) -> Result<Tree> {
    params.validate(d.p())?;
    let mut rng = rng_from_seed(seed);
    let n = d.n();
    let in_bag: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };

    // a placeholder leaf marks nodes still in the queue
    let pending = || Node::Leaf(Leaf::from_rows(Vec::new(), d, 0));
    let mut nodes = vec![pending()];
    let mut queue = VecDeque::from([(0usize, in_bag, 0usize)]);
    let mut leaf_count = 1;
    while let Some((id, rows, depth)) = queue.pop_front() {
        let room = params.max_leaves.is_none_or(|max| leaf_count < max);
        let split = if room && rows.len() >= 2 * params.min_node_size {
            match params.split_mode {
                SplitMode::Impurity => {
                    let candidates = sample(&mut rng, d.p(), params.mtry).into_vec();
                    best_split_min(&rows, d, &candidates, params.criterion, params.min_node_size)
                }
                SplitMode::CompletelyRandom => {
                    let pure = rows.iter().all(|&i| d.label(i) == d.label(rows[0]));
                    if pure {
                        None
                    } else {
                        random_split(&rows, d, &mut rng)
                    }
                }
            }
        } else {
            None
        };
        match split {
            Some(s) => {
                let left = nodes.len();
                nodes.push(pending());
                nodes.push(pending());
                nodes[id] = Node::Internal {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right: left + 1,
                };
                leaf_count += 1;
                queue.push_back((left, s.left_rows, depth + 1));
                queue.push_back((left + 1, s.right_rows, depth + 1));
            }
            None => {
                let positives = rows.iter().filter(|&&i| d.label(i) == 1).count();
                nodes[id] = Node::Leaf(Leaf {
                    n: rows.len(),
                    positives,
                    rows,
                    members: Vec::new(),
                    member_positives: 0,
                    depth,
                });
            }
        }
    }

    let mut tree = Tree {
        nodes,
        seed,
        leaf_count,
        p: d.p(),
    };
    for i in 0..n {
        let id = tree.leaf_id(d.row(i));
        if let Node::Leaf(leaf) = &mut tree.nodes[id] {
            leaf.members.push(i);
            leaf.member_positives += usize::from(d.label(i));
        }
    }
    Ok(tree)
}
