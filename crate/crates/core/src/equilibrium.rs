//! Deterministic equilibrium of `ż = F(z)` and the variance parameter `v_c`.

use serde::{Deserialize, Serialize};

use crate::model::{sign_change_brackets, ModelSpec};
use crate::{Error, Result};

/// Points in the bracket scan that precedes bisection.
pub const SCAN_POINTS: usize = 64;

/// Result of the deterministic analysis around the stable root `c` of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumInfo {
    pub c: f64,
    pub f_prime_c: f64,
    pub sigma2_c: f64,
    /// `σ²(c) / (−2 F'(c))`.
    pub v_c: f64,
    /// `|F(c)|` at the returned root.
    pub solver_residual: f64,
}

impl EquilibriumInfo {
    fn new(c: f64, f_prime_c: f64, sigma2_c: f64, solver_residual: f64) -> Self {
        Self {
            c,
            f_prime_c,
            sigma2_c,
            v_c: sigma2_c / (-2.0 * f_prime_c),
            solver_residual,
        }
    }

    /// `⌊n c⌋`, the centring shift of the equilibrium law.
    pub fn centre_shift(&self, n: u64) -> i64 {
        (n as f64 * self.c).floor() as i64
    }
}

/// Locates the unique stable root of the drift inside `bracket`.
///
/// The bracket is scanned on [`SCAN_POINTS`] points; a single sign change is
/// refined by bisection and, when the family has an analytic `F'`, one Newton
/// step that is kept only if it lowers `|F|`.
///
/// With no sign change, a drift that is positive and non-decreasing at the
/// top of the bracket is reported as [`Error::UnstableEquilibrium`] (mass
/// escapes upwards); anything else is [`Error::NoSignChange`].
pub fn find_equilibrium(model: &ModelSpec, bracket: (f64, f64)) -> Result<EquilibriumInfo> {
    let (lo, hi) = bracket;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("bad bracket [{lo}, {hi}]")));
    }
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&z| model.drift(z)).collect();
    let brackets = sign_change_brackets(&grid, &values);
    let (a, b) = match brackets.as_slice() {
        [] => {
            let f_hi = values[SCAN_POINTS - 1];
            if f_hi > 0.0 && model.drift_slope(hi) >= 0.0 {
                return Err(Error::UnstableEquilibrium(format!(
                    "drift is positive and non-decreasing at z={hi}"
                )));
            }
            return Err(Error::NoSignChange { lo, hi });
        }
        [one] => *one,
        many => return Err(Error::MultipleRoots { count: many.len() }),
    };
    let mut c = bisect_root(|z| model.drift(z), a, b);
    if let Some(fp) = model.drift_derivative(c) {
        if fp != 0.0 {
            let polished = c - model.drift(c) / fp;
            if polished.is_finite() && model.drift(polished).abs() < model.drift(c).abs() {
                c = polished;
            }
        }
    }
    let f_prime_c = model.drift_slope(c);
    if !(f_prime_c < 0.0) {
        return Err(Error::UnstableEquilibrium(format!("F'({c}) = {f_prime_c} >= 0")));
    }
    Ok(EquilibriumInfo::new(
        c,
        f_prime_c,
        model.sigma2(c),
        model.drift(c).abs(),
    ))
}

/// Closed forms for the immigration, group-birth and death family:
/// `c = a/(d − b m₁)`, `F'(c) = −(d − b m₁)` and
/// `v_c = a (2d + b(m₂ − m₁)) / (2 (d − b m₁)²)`.
pub fn closed_form_bdi(a: f64, b: f64, d: f64, offspring: &[(i64, f64)]) -> Result<EquilibriumInfo> {
    let m1: f64 = offspring.iter().map(|&(j, q)| j as f64 * q).sum();
    let m2: f64 = offspring.iter().map(|&(j, q)| (j * j) as f64 * q).sum();
    let kappa = d - b * m1;
    if !(kappa > 0.0) {
        return Err(Error::UnstableEquilibrium(format!(
            "d = {d} does not exceed b m1 = {}",
            b * m1
        )));
    }
    let c = a / kappa;
    let sigma2_c = a + c * (b * m2 + d);
    let v_c = a * (2.0 * d + b * (m2 - m1)) / (2.0 * kappa * kappa);
    Ok(EquilibriumInfo {
        c,
        f_prime_c: -kappa,
        sigma2_c,
        v_c,
        solver_residual: (a + c * (b * m1 - d)).abs(),
    })
}

/// Bisection on `[lo, hi]` (assumed to bracket a sign change) down to a width
/// of `1e-14 * max(1, |z|)`.
pub(crate) fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * mid.abs().max(1.0) || mid == lo || mid == hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    // Return the endpoint with the smaller residual.
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}
