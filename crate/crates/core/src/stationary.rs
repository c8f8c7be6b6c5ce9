//! Exact stationary law of `Z_n` on a truncated window.
//!
//! The generator is restricted to a window `[center − w, center + w]`; a jump
//! that would leave the window lands on the nearest boundary state instead
//! (reflecting truncation), so every row still sums to zero.
//!
//! The balance equations `π Q = 0` are solved by Grassmann–Taksar–Heyman
//! state reduction. States are censored out from the bottom of the window
//! upwards; eliminating a state only couples states within the original band
//! of jump sizes, so the work is `O(N · band²)`. The reduction uses no
//! subtractions, which keeps small tail probabilities accurate to relative
//! precision.

use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumInfo;
use crate::lattice::LatticeDist;
use crate::model::{gcd, ModelSpec};
use crate::{Error, Result};

/// Default window half-width in standard deviations `√(n v_c)`.
pub const DEFAULT_K: f64 = 12.0;
/// Largest boundary mass accepted before reporting [`Error::WindowTooSmall`].
pub const MAX_BOUNDARY_MASS: f64 = 1e-6;
/// Largest window size accepted by [`stationary_exact`].
pub const MAX_WINDOW: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Reflecting,
}

/// The truncation window `[center − half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub center: i64,
    pub half_width: i64,
    pub boundary: Boundary,
}

impl TruncationPolicy {
    /// Centre `⌊n c⌋`, half-width `⌈k √(n v_c)⌉` (at least `3 √(n v_c)` and
    /// at least a few jump lengths).
    pub fn for_model(model: &ModelSpec, n: u64, eq: &EquilibriumInfo, k: f64) -> Self {
        let sd = (n as f64 * eq.v_c).sqrt();
        let reach = model.max_jump().abs().max(model.min_jump().abs());
        let half_width = ((k.max(3.0) * sd).ceil() as i64).max(4 * reach).max(8);
        Self {
            center: eq.centre_shift(n),
            half_width,
            boundary: Boundary::Reflecting,
        }
    }

    pub fn with_half_width(self, half_width: i64) -> Self {
        Self { half_width, ..self }
    }

    pub fn lo(&self) -> i64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> i64 {
        self.center + self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDiagnostics {
    /// Mass on the two outermost states at each end of the window.
    pub boundary_mass: f64,
    /// `‖π Q‖₁` for the truncated generator.
    pub residual_norm: f64,
}

/// The truncated generator in band storage: `rates[i][off + lower]` is the
/// rate from window state `i` to `i + off`, `off ∈ [−lower, upper]`.
struct BandGenerator {
    lower: usize,
    upper: usize,
    rates: Vec<Vec<f64>>,
}

impl BandGenerator {
    fn build(model: &ModelSpec, n: u64, policy: &TruncationPolicy) -> Result<Self> {
        let size = (2 * policy.half_width + 1) as usize;
        let lower = model.min_jump().min(0).unsigned_abs() as usize;
        let upper = model.max_jump().max(0) as usize;
        let width = lower + upper + 1;
        let nf = n as f64;
        let mut rates = vec![vec![0.0; width]; size];
        for (idx, row) in rates.iter_mut().enumerate() {
            let state = policy.lo() + idx as i64;
            let z = state as f64 / nf;
            for &j in model.support() {
                let rate = nf * model.rate(j, z);
                if !rate.is_finite() {
                    return Err(Error::RateOverflow { state });
                }
                let target = (idx as i64 + j).clamp(0, size as i64 - 1);
                if target == idx as i64 || rate == 0.0 {
                    continue;
                }
                row[(target - idx as i64 + lower as i64) as usize] += rate;
            }
        }
        Ok(Self { lower, upper, rates })
    }

    fn size(&self) -> usize {
        self.rates.len()
    }

    fn get(&self, from: usize, to: usize) -> f64 {
        let off = to as i64 - from as i64 + self.lower as i64;
        if off < 0 || off as usize > self.lower + self.upper {
            0.0
        } else {
            self.rates[from][off as usize]
        }
    }

    fn add(&mut self, from: usize, to: usize, value: f64) {
        let off = (to as i64 - from as i64 + self.lower as i64) as usize;
        self.rates[from][off] += value;
    }

    /// Every state reaches `target`, so the states reachable from `target`
    /// form the only closed class.
    fn single_closed_class(&self, target: usize) -> bool {
        let n = self.size();
        let neighbours = |i: usize| {
            let lo = i.saturating_sub(self.lower);
            let hi = (i + self.upper).min(n - 1);
            (lo..=hi).filter(move |&k| k != i)
        };
        let mut backward = vec![false; n];
        let mut stack = vec![target];
        backward[target] = true;
        while let Some(i) = stack.pop() {
            for k in neighbours(i) {
                if !backward[k] && self.get(k, i) > 0.0 {
                    backward[k] = true;
                    stack.push(k);
                }
            }
        }
        backward.iter().all(|&b| b)
    }

    /// GTH reduction; consumes the generator.
    #[allow(clippy::needless_range_loop)]
    fn solve(mut self) -> Result<Vec<f64>> {
        let n = self.size();
        let mut out_rate = vec![0.0; n];
        for k in 0..n - 1 {
            let exits: f64 = (k + 1..=(k + self.upper).min(n - 1))
                .map(|s| self.get(k, s))
                .sum();
            if !(exits > 0.0) {
                return Err(Error::SingularSystem(format!(
                    "window state {k} cannot move upwards after reduction"
                )));
            }
            out_rate[k] = exits;
            let hi_in = (k + self.lower).min(n - 1);
            let hi_out = (k + self.upper).min(n - 1);
            for r in k + 1..=hi_in {
                let into = self.get(r, k);
                if into == 0.0 {
                    continue;
                }
                for s in k + 1..=hi_out {
                    let out = self.get(k, s);
                    if out != 0.0 && s != r {
                        self.add(r, s, into * out / exits);
                    }
                }
            }
        }
        let mut pi = vec![0.0; n];
        pi[n - 1] = 1.0;
        for k in (0..n - 1).rev() {
            let hi_in = (k + self.lower).min(n - 1);
            let inflow: f64 = (k + 1..=hi_in).map(|r| pi[r] * self.get(r, k)).sum();
            pi[k] = inflow / out_rate[k];
            if pi[k] > 1e250 {
                pi[k..].iter_mut().for_each(|p| *p *= 1e-250);
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        Ok(pi)
    }
}

/// Stationary distribution of `Z_n` on the truncation window of `policy`.
///
/// Fails with [`Error::SingularSystem`] when the jump sizes share a common
/// factor or the truncated chain has more than one closed class, and with
/// [`Error::WindowTooSmall`] when more than [`MAX_BOUNDARY_MASS`] sits on the
/// outer two states at either end.
pub fn stationary_exact(
    model: &ModelSpec,
    n: u64,
    policy: &TruncationPolicy,
) -> Result<(LatticeDist, StationaryDiagnostics)> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if policy.half_width < 2 {
        return Err(Error::WindowTooSmall("half_width must be at least 2".into()));
    }
    if (2 * policy.half_width + 1) as usize > MAX_WINDOW {
        return Err(Error::InvalidInput(format!(
            "window of {} states exceeds {MAX_WINDOW}",
            2 * policy.half_width + 1
        )));
    }
    let lattice = model.support().iter().fold(0, |g, &j| gcd(g, j.unsigned_abs()));
    if lattice != 1 {
        return Err(Error::SingularSystem(format!(
            "all jump sizes are multiples of {lattice}"
        )));
    }
    let generator = BandGenerator::build(model, n, policy)?;
    if !generator.single_closed_class(policy.half_width as usize) {
        return Err(Error::SingularSystem(
            "truncated chain has more than one closed class".into(),
        ));
    }
    let residual_gen = BandGenerator::build(model, n, policy)?;
    let pi = generator.solve()?;
    let residual_norm = balance_residual(&residual_gen, &pi);
    let size = pi.len();
    let boundary_mass = pi[..2].iter().sum::<f64>() + pi[size - 2..].iter().sum::<f64>();
    if boundary_mass > MAX_BOUNDARY_MASS {
        return Err(Error::WindowTooSmall(format!(
            "boundary mass {boundary_mass:e} exceeds {MAX_BOUNDARY_MASS:e}"
        )));
    }
    let dist = LatticeDist::new(policy.lo(), pi)?;
    Ok((
        dist,
        StationaryDiagnostics {
            boundary_mass,
            residual_norm,
        },
    ))
}

/// [`stationary_exact`], retried once with a doubled half-width when the
/// boundary mass is too large.
pub fn stationary_with_retry(
    model: &ModelSpec,
    n: u64,
    policy: &TruncationPolicy,
) -> Result<(LatticeDist, StationaryDiagnostics)> {
    match stationary_exact(model, n, policy) {
        Err(Error::WindowTooSmall(_)) => {
            stationary_exact(model, n, &policy.with_half_width(2 * policy.half_width))
        }
        other => other,
    }
}

fn balance_residual(q: &BandGenerator, pi: &[f64]) -> f64 {
    let n = pi.len();
    let mut flow = vec![0.0; n];
    for (i, row) in q.rates.iter().enumerate() {
        for (off, &rate) in row.iter().enumerate() {
            if rate == 0.0 {
                continue;
            }
            let to = (i as i64 + off as i64 - q.lower as i64) as usize;
            flow[to] += pi[i] * rate;
            flow[i] -= pi[i] * rate;
        }
    }
    flow.iter().map(|f| f.abs()).sum()
}
