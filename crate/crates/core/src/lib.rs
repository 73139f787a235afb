//! Random forest probability estimation through the lens of kernel regression.
//!
//! A forest's proximity function `K_T(x, z)` (the fraction of trees in which
//! `x` and `z` land in the same leaf) is a kernel, and averaging labels with it
//! gives a Nadaraya-Watson estimate of `P(y = 1 | x)`. This crate grows
//! forests, exposes that kernel, compares the class-vote, regression-mean and
//! proximity estimators, and provides the analytic kernel of a stylized
//! forest together with Monte Carlo oracles for it.
//!
//! Modules:
//!
//! * [`data`]: datasets, CSV I/O, junk predictors, train/test splits.
//! * [`tree`]: CART-style trees with `mtry` subsampling or completely random splits.
//! * [`forest`]: ensembles, the three estimators and the proximity kernel.
//! * [`kernel_lab`]: the stylized-forest kernel, Laplace kernels, Nadaraya-Watson.
//! * [`diagnostics`]: directional derivatives, level-set grids, histograms.
//! * [`synth`]: synthetic models with known class probabilities.
//! * [`bench`]: RMSE metrics and the repeated-split experiment harness.

pub mod bench;
pub mod data;
pub mod diagnostics;
mod error;
pub mod forest;
pub mod kernel_lab;
pub mod rng;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};

/// Anything that scores the similarity of two points of equal dimension.
///
/// Implemented by forests (their proximity function) and by the closed-form
/// kernels in [`kernel_lab`].
pub trait Kernel: Sync {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64>;

    /// `ln K(x, z)`; override when it can be computed without underflow.
    fn log_eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.eval(x, z)?.ln())
    }
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        (**self).eval(x, z)
    }

    fn log_eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        (**self).log_eval(x, z)
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
