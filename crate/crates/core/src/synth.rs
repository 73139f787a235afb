//! Synthetic binary-label models with known class probabilities.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{default_names, Dataset};
use crate::rng::rng_from_seed;
use crate::{check_dims, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// 0.3 when `x1 < 0`, else 0.7; all other coordinates are noise.
    Motivating,
    /// 1 inside radius 8, linear down to 0 at radius 28, on `[-25, 25]^2`.
    Circle,
    /// Logistic with a slope change at `x1 = 0`.
    Kinked,
    /// `1 / (1 + exp(-3 x1))`.
    Logistic1,
    /// `1 / (1 + exp(-2 x1 - 2 x2))`.
    Logistic2,
    /// `1 / (1 + exp(-2 (x1 + x2 + x3)))`.
    Logistic3,
    /// Log-odds `0.5 (1 - x1 + x2 - x3 + x4 - x5 + x6)(x1 + ... + x6)`.
    Tend,
    /// 0.3 when `x1 x2 >= 0`, else 0.7.
    Xor,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Motivating,
        ModelKind::Circle,
        ModelKind::Kinked,
        ModelKind::Logistic1,
        ModelKind::Logistic2,
        ModelKind::Logistic3,
        ModelKind::Tend,
        ModelKind::Xor,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Motivating => "motivating50",
            ModelKind::Circle => "circle",
            ModelKind::Kinked => "kinked",
            ModelKind::Logistic1 => "logistic1_2d",
            ModelKind::Logistic2 => "logistic2_22d",
            ModelKind::Logistic3 => "logistic3d",
            ModelKind::Tend => "tend",
            ModelKind::Xor => "xor",
        }
    }

    pub fn default_dim(self) -> usize {
        match self {
            ModelKind::Motivating => 50,
            ModelKind::Circle | ModelKind::Kinked | ModelKind::Logistic1 | ModelKind::Xor => 2,
            ModelKind::Logistic2 => 22,
            ModelKind::Logistic3 => 3,
            ModelKind::Tend => 10,
        }
    }

    /// Number of leading coordinates the probability depends on.
    pub fn signal_dim(self) -> usize {
        match self {
            ModelKind::Motivating | ModelKind::Logistic1 => 1,
            ModelKind::Circle | ModelKind::Kinked | ModelKind::Logistic2 | ModelKind::Xor => 2,
            ModelKind::Logistic3 => 3,
            ModelKind::Tend => 6,
        }
    }

    pub fn half_width(self) -> f64 {
        match self {
            ModelKind::Circle => 25.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown model '{s}'")))
    }
}

/// A model together with its input dimension; coordinates past the model's
/// signal dimension are pure noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub kind: ModelKind,
    pub dim: usize,
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl SyntheticModel {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            dim: kind.default_dim(),
        }
    }

    pub fn with_dim(kind: ModelKind, dim: usize) -> Result<Self> {
        if dim < kind.signal_dim() {
            return Err(Error::InvalidParam(format!(
                "model {kind} needs at least {} dimensions",
                kind.signal_dim()
            )));
        }
        Ok(Self { kind, dim })
    }

    /// Per-coordinate domain `[-h, h]`.
    pub fn bounds(&self) -> (f64, f64) {
        let h = self.kind.half_width();
        (-h, h)
    }

    /// `P(y = 1 | x)`.
    pub fn ccpf(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.dim, x.len())?;
        let (lo, hi) = self.bounds();
        if x.iter().any(|v| !(lo..=hi).contains(v)) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(self.ccpf_unchecked(x))
    }

    fn ccpf_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Motivating => {
                if x[0] < 0.0 {
                    0.3
                } else {
                    0.7
                }
            }
            ModelKind::Circle => {
                let r = x[0].hypot(x[1]);
                if r < 8.0 {
                    1.0
                } else if r < 28.0 {
                    (28.0 - r) / 20.0
                } else {
                    0.0
                }
            }
            ModelKind::Kinked => {
                if x[0] < 0.0 {
                    logistic(3.0 * x[0] + x[1])
                } else {
                    logistic(x[0] + 3.0 * x[1])
                }
            }
            ModelKind::Logistic1 => logistic(3.0 * x[0]),
            ModelKind::Logistic2 => logistic(2.0 * x[0] + 2.0 * x[1]),
            ModelKind::Logistic3 => logistic(2.0 * (x[0] + x[1] + x[2])),
            ModelKind::Tend => {
                let alternating: f64 = x[..6]
                    .iter()
                    .enumerate()
                    .map(|(j, v)| if j % 2 == 0 { -v } else { *v })
                    .sum();
                let total: f64 = x[..6].iter().sum();
                logistic(0.5 * (1.0 + alternating) * total)
            }
            ModelKind::Xor => {
                if x[0] * x[1] >= 0.0 {
                    0.3
                } else {
                    0.7
                }
            }
        }
    }

    /// Draws `n` points uniformly on the domain and labels them from the model.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::InvalidParam("sample size must be at least 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let (lo, hi) = self.bounds();
        let mut features = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        let mut true_probs = Vec::with_capacity(n);
        for _ in 0..n {
            let start = features.len();
            features.extend((0..self.dim).map(|_| rng.gen_range(lo..=hi)));
            let p = self.ccpf_unchecked(&features[start..]);
            labels.push(u8::from(rng.gen::<f64>() < p));
            true_probs.push(p);
        }
        Ok(Sample {
            data: Dataset::new(features, labels, default_names(self.dim))?,
            true_probs,
        })
    }
}

/// A synthetic dataset and the true probability of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub data: Dataset,
    pub true_probs: Vec<f64>,
}
