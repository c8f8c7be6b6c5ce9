//! Finitely supported distributions and functions on the integer lattice.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normalisation slack accepted by [`LatticeDist::new`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A probability distribution on `ℤ` supported on `offset..offset + weights.len()`.
///
/// The stored weights always sum to one up to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDist {
    offset: i64,
    weights: Vec<f64>,
}

impl LatticeDist {
    /// Builds a distribution from weights that already sum to one within
    /// [`NORMALIZATION_TOL`]; the weights are renormalised exactly.
    pub fn new(offset: i64, weights: Vec<f64>) -> Result<Self> {
        let total = validate(&weights)?;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::scaled(offset, weights, total))
    }

    /// Builds a distribution from arbitrary non-negative weights with a
    /// positive sum, normalising them.
    pub fn from_weights(offset: i64, weights: Vec<f64>) -> Result<Self> {
        let total = validate(&weights)?;
        Ok(Self::scaled(offset, weights, total))
    }

    fn scaled(offset: i64, mut weights: Vec<f64>, total: f64) -> Self {
        weights.iter_mut().for_each(|w| *w /= total);
        Self { offset, weights }
    }

    /// Point mass at `state`.
    pub fn point(state: i64) -> Self {
        Self {
            offset: state,
            weights: vec![1.0],
        }
    }

    /// Uniform distribution on `lo..lo + m`.
    pub fn uniform(lo: i64, m: usize) -> Self {
        assert!(m > 0, "uniform distribution needs a nonempty support");
        Self {
            offset: lo,
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest state of the stored window.
    pub fn lo(&self) -> i64 {
        self.offset
    }

    /// Largest state of the stored window.
    pub fn hi(&self) -> i64 {
        self.offset + self.weights.len() as i64 - 1
    }

    pub fn pmf(&self, state: i64) -> f64 {
        let idx = state - self.offset;
        if idx < 0 {
            return 0.0;
        }
        self.weights.get(idx as usize).copied().unwrap_or(0.0)
    }

    /// `P[X <= state]`.
    pub fn cdf(&self, state: i64) -> f64 {
        if state < self.lo() {
            return 0.0;
        }
        if state >= self.hi() {
            return 1.0;
        }
        self.weights[..=(state - self.offset) as usize].iter().sum()
    }

    /// `(state, probability)` pairs over the stored window.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(k, &w)| (self.offset + k as i64, w))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(i, w)| i as f64 * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(i, w)| (i as f64 - m).powi(2) * w).sum()
    }

    /// Expectation of `f` under the distribution.
    pub fn expect(&self, mut f: impl FnMut(i64) -> f64) -> f64 {
        self.iter().map(|(i, w)| if w == 0.0 { 0.0 } else { w * f(i) }).sum()
    }

    /// Convolution with `δ_{-by}`: every state moves down by `by`.
    pub fn centre(&self, by: i64) -> Self {
        Self {
            offset: self.offset - by,
            weights: self.weights.clone(),
        }
    }

    /// Convolution with `δ_{by}`.
    pub fn translate(&self, by: i64) -> Self {
        self.centre(-by)
    }

    /// Writes the frozen `state,probability` CSV schema.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "state,probability")?;
        for (i, w) in self.iter() {
            writeln!(out, "{i},{w:e}")?;
        }
        Ok(())
    }
}

fn validate(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidInput(format!("invalid weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    Ok(total)
}

/// A real function on a contiguous integer window `lo..=hi`.
///
/// Reads outside the window return `None`; operators that need them report
/// [`Error::WindowTooSmall`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn {
    lo: i64,
    values: Vec<f64>,
}

impl LatticeFn {
    pub fn new(lo: i64, values: Vec<f64>) -> Self {
        Self { lo, values }
    }

    /// Tabulates `f` on `lo..=hi`.
    pub fn from_fn(lo: i64, hi: i64, f: impl FnMut(i64) -> f64) -> Self {
        Self {
            lo,
            values: (lo..=hi).map(f).collect(),
        }
    }

    pub fn constant(lo: i64, hi: i64, value: f64) -> Self {
        Self::from_fn(lo, hi, |_| value)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: i64) -> Option<f64> {
        let idx = i - self.lo;
        if idx < 0 {
            return None;
        }
        self.values.get(idx as usize).copied()
    }

    pub(crate) fn at(&self, i: i64) -> Result<f64> {
        self.get(i).ok_or_else(|| {
            Error::WindowTooSmall(format!(
                "function defined on [{}, {}] evaluated at {i}",
                self.lo,
                self.hi()
            ))
        })
    }

    /// Largest absolute value on the window.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
