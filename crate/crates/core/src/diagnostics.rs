//! Kernel shape probes: one-sided directional derivatives, 2-d level-set
//! grids and probability histograms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Kernel, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// `(K(x0 ± h e_j, x0) - K(x0, x0)) / h`.
///
/// Both sides are divided by `+h`, so a kernel that decays away from `x0` has
/// negative derivatives on both sides.
pub fn directional_derivative<K: Kernel + ?Sized>(k: &K, x0: &[f64], j: usize, side: Side, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParam(format!("step {h} must be positive")));
    }
    if j >= x0.len() {
        return Err(Error::InvalidParam(format!("coordinate {j} out of range")));
    }
    let mut shifted = x0.to_vec();
    shifted[j] += side.sign() * h;
    Ok((k.eval(&shifted, x0)? - k.eval(x0, x0)?) / h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub center: Vec<f64>,
    pub steps: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl DerivativeReport {
    /// Mean of `(|left| + |right|) / 2` over `coords`.
    pub fn mean_abs(&self, coords: impl IntoIterator<Item = usize>) -> f64 {
        let (sum, count) = coords.into_iter().fold((0.0, 0usize), |(s, c), j| {
            (s + 0.5 * (self.left[j].abs() + self.right[j].abs()), c + 1)
        });
        sum / count.max(1) as f64
    }

    /// CSV with columns `coordinate,step,left,right`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["coordinate", "step", "left", "right"])?;
        for j in 0..self.center.len() {
            w.write_record([
                j.to_string(),
                self.steps[j].to_string(),
                self.left[j].to_string(),
                self.right[j].to_string(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })
    }
}

/// Left and right derivatives along every coordinate, with per-coordinate steps.
pub fn derivative_report<K: Kernel + ?Sized>(k: &K, x0: &[f64], steps: &[f64]) -> Result<DerivativeReport> {
    crate::check_dims(x0.len(), steps.len())?;
    let pairs = (0..x0.len())
        .into_par_iter()
        .map(|j| {
            Ok((
                directional_derivative(k, x0, j, Side::Left, steps[j])?,
                directional_derivative(k, x0, j, Side::Right, steps[j])?,
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (left, right) = pairs.into_iter().unzip();
    Ok(DerivativeReport {
        center: x0.to_vec(),
        steps: steps.to_vec(),
        left,
        right,
    })
}

/// `fraction` times each column's standard deviation; zero-variance columns
/// fall back to `fraction`.
pub fn sd_steps(sds: &[f64], fraction: f64) -> Vec<f64> {
    sds.iter()
        .map(|&sd| if sd > 0.0 { fraction * sd } else { fraction })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub center: Vec<f64>,
    pub dims: (usize, usize),
    pub resolution: usize,
    pub axis_a: Vec<f64>,
    pub axis_b: Vec<f64>,
    /// `values[r][c]` is `K(x0, z)` with `z[dims.0] = axis_a[r]`, `z[dims.1] = axis_b[c]`.
    pub values: Vec<Vec<f64>>,
}

impl KernelGrid {
    /// Extent along `axis` (0 for `dims.0`, 1 for `dims.1`) of the cells whose
    /// value is at least half the grid maximum.
    pub fn half_max_width(&self, axis: usize) -> f64 {
        let max = self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (r, row) in self.values.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v >= 0.5 * max {
                    let coord = if axis == 0 { self.axis_a[r] } else { self.axis_b[c] };
                    lo = lo.min(coord);
                    hi = hi.max(coord);
                }
            }
        }
        hi - lo
    }

    /// Long-format CSV: `a,b,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            format!("x{}", self.dims.0 + 1),
            format!("x{}", self.dims.1 + 1),
            "value".to_string(),
        ])?;
        for (r, row) in self.values.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                w.write_record([self.axis_a[r].to_string(), self.axis_b[c].to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Evaluates `K(x0, z)` over a `resolution × resolution` grid in the plane of
/// coordinates `dims`; the other coordinates of `z` stay at `x0`'s values.
pub fn kernel_grid<K: Kernel + ?Sized>(
    k: &K,
    x0: &[f64],
    dims: (usize, usize),
    resolution: usize,
    bounds: [(f64, f64); 2],
) -> Result<KernelGrid> {
    let (a, b) = dims;
    if a == b || a >= x0.len() || b >= x0.len() {
        return Err(Error::InvalidParam(format!("bad grid dimensions {dims:?}")));
    }
    if resolution < 2 {
        return Err(Error::InvalidParam("grid resolution must be at least 2".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidParam("grid bounds must satisfy lo < hi".into()));
    }
    let axis_a = linspace(bounds[0].0, bounds[0].1, resolution);
    let axis_b = linspace(bounds[1].0, bounds[1].1, resolution);
    let values = axis_a
        .par_iter()
        .map(|&va| {
            let mut z = x0.to_vec();
            z[a] = va;
            axis_b
                .iter()
                .map(|&vb| {
                    z[b] = vb;
                    k.eval(x0, &z)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelGrid {
        center: x0.to_vec(),
        dims,
        resolution,
        axis_a,
        axis_b,
        values,
    })
}

/// Counts in `n_bins` equal-width bins on `[0, 1]`; the last bin is closed.
pub fn prob_histogram(predictions: &[f64], n_bins: usize) -> Result<Vec<usize>> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParam("need at least one bin".into()));
    }
    let mut counts = vec![0; n_bins];
    for &p in predictions {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParam(format!("prediction {p} outside [0, 1]")));
        }
        let bin = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    crate::check_dims(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Empty("need at least two pairs"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}
