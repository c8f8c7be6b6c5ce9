//! The centred Poisson law `Po(v) * δ_{−⌊v⌋}` and its Stein equation.
//!
//! For `B ⊆ ℤ_v = {l ≥ −⌊v⌋}` the solution `g = g_{v,B}` satisfies
//!
//! ```text
//! v ∇g(l+1) − l g(l) + ⟨v⟩ g(l) = 1_B(l) − P̂o(v){B},   l ∈ ℤ_v,
//! g(l) = 0,                                           l ≤ −⌊v⌋,
//! ```
//!
//! with `⟨v⟩ = v − ⌊v⌋`. Substituting `m = l + ⌊v⌋` turns it into the
//! classical Poisson Stein equation `v f(m+1) − m f(m) = 1_A(m) − Po(v){A}`
//! with `A = B + ⌊v⌋`, whose solution is the explicit sum
//!
//! ```text
//! v f(m) = Σ_{k<m} x_k p(k) / p(m−1) = −Σ_{k≥m} x_k p(k) / p(m−1),   x_k = 1_A(k) − Po(v){A}.
//! ```
//!
//! Both sums are evaluated through ratio recurrences that never form
//! `p(m−1)` itself: the lower sum forwards for `m ≤ ⌈v⌉`, where each step
//! multiplies the accumulated error by `m/v < 1`, and the upper sum backwards
//! for `m > ⌈v⌉`, where each step multiplies it by `v/m < 1`. The upper
//! recursion is seeded far in the tail from the closed tail ratio
//! `Σ_{k≥M} p(k)/p(M−1)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::lattice::{LatticeDist, LatticeFn};
use crate::{Error, Result};

/// Minimum extent of a solve window above zero, in standard deviations.
pub const MIN_WINDOW_SD: f64 = 3.0;

/// Standard deviations of Poisson mass tabulated beyond the mean.
const TAIL_SD: f64 = 40.0;

/// `Po(v) * δ_{−⌊v⌋}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentredPoisson {
    v: f64,
    shift: i64,
}

impl CentredPoisson {
    pub fn new(v: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("Poisson mean {v} must be > 0")));
        }
        Ok(Self {
            v,
            shift: v.floor() as i64,
        })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// `⌊v⌋`.
    pub fn shift(&self) -> i64 {
        self.shift
    }

    /// `−⌊v⌋`, the smallest state with positive mass.
    pub fn support_lo(&self) -> i64 {
        -self.shift
    }

    /// `⟨v⟩ = v − ⌊v⌋`, the mean of the centred law.
    pub fn frac(&self) -> f64 {
        self.v - self.shift as f64
    }

    pub fn pmf(&self, l: i64) -> f64 {
        poisson_pmf(self.v, l + self.shift)
    }

    /// Tabulates the law on `[−⌊v⌋, ⌈⟨v⟩ + 40 √v + 40⌉]`, beyond which the
    /// remaining mass is below `f64` resolution.
    pub fn to_lattice(&self) -> LatticeDist {
        let top = self.tail_top();
        let weights = (0..=top).map(|m| poisson_pmf(self.v, m)).collect();
        LatticeDist::from_weights(self.support_lo(), weights)
            .expect("Poisson weights are positive near the mean")
    }

    fn tail_top(&self) -> i64 {
        (self.v + TAIL_SD * self.v.sqrt() + TAIL_SD).ceil() as i64
    }
}

/// `Po(v)` probability mass at `m`, evaluated in log space.
pub fn poisson_pmf(v: f64, m: i64) -> f64 {
    if m < 0 {
        return 0.0;
    }
    (-v + m as f64 * v.ln() - ln_factorial(m as u64)).exp()
}

/// Test sets `B` for the Stein equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntSet {
    /// Finitely many states.
    Points(Vec<i64>),
    /// `{l : l ≤ t}`.
    AtMost(i64),
    /// `{l : l ≥ t}`.
    AtLeast(i64),
}

impl IntSet {
    pub fn singleton(l: i64) -> Self {
        IntSet::Points(vec![l])
    }

    pub fn contains(&self, l: i64) -> bool {
        match self {
            IntSet::Points(p) => p.contains(&l),
            IntSet::AtMost(t) => l <= *t,
            IntSet::AtLeast(t) => l >= *t,
        }
    }

    /// Every singleton and both half-lines at every state of `lo..=hi`.
    pub fn default_family(lo: i64, hi: i64) -> Vec<IntSet> {
        let mut out: Vec<IntSet> = (lo..=hi).map(IntSet::singleton).collect();
        out.extend((lo..=hi).map(IntSet::AtMost));
        out.extend((lo..=hi).map(IntSet::AtLeast));
        out
    }
}

impl fmt::Display for IntSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntSet::Points(p) => {
                let parts: Vec<String> = p.iter().map(i64::to_string).collect();
                write!(f, "{{{}}}", parts.join(" "))
            }
            IntSet::AtMost(t) => write!(f, "<={t}"),
            IntSet::AtLeast(t) => write!(f, ">={t}"),
        }
    }
}

/// Suprema of `|g(l+1)|`, `|∇g(l+1)|` over `l ≥ −⌊v⌋` and of `|l g(l)|`,
/// all over the solve window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub sup_abs_g: f64,
    pub sup_abs_dg: f64,
    pub sup_abs_lg: f64,
}

impl BoundReport {
    /// Whether the uniform bounds `min(1, v^{-1/2})`, `1/v` and `3` hold
    /// with absolute slack `slack`.
    pub fn within_bounds(&self, v: f64, slack: f64) -> bool {
        self.sup_abs_g <= 1f64.min(1.0 / v.sqrt()) + slack
            && self.sup_abs_dg <= 1.0 / v + slack
            && self.sup_abs_lg <= 3.0 + slack
    }
}

/// Solution `g_{v,B}` of the centred Poisson Stein equation on a window.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub v: f64,
    pub set: IntSet,
    /// Window `(lo, hi)` on which the equation is checked; `g` is stored on
    /// `lo..=hi + 1`.
    pub window: (i64, i64),
    pub g: LatticeFn,
    /// `P̂o(v){B}`.
    pub target_mass: f64,
    pub bound_report: BoundReport,
    /// Largest pointwise Stein residual over `window ∩ ℤ_v`.
    pub max_residual: f64,
}

impl SteinSolution {
    /// `g(l)`; zero for `l ≤ −⌊v⌋`.
    pub fn g(&self, l: i64) -> Option<f64> {
        if l <= -(self.v.floor() as i64) {
            return Some(0.0);
        }
        self.g.get(l)
    }

    /// `v ∇g(l+1) − l g(l) + ⟨v⟩ g(l) − [1_B(l) − P̂o(v){B}]`.
    pub fn residual(&self, l: i64) -> Option<f64> {
        let frac = self.v - self.v.floor();
        let (g0, g1) = (self.g(l)?, self.g(l + 1)?);
        let rhs = if self.set.contains(l) { 1.0 } else { 0.0 } - self.target_mass;
        Some(self.v * (g1 - g0) - l as f64 * g0 + frac * g0 - rhs)
    }
}

/// Solves the Stein equation for `P̂o(v)` and the set `B ∩ ℤ_v` on `window`.
///
/// The window must contain `−⌊v⌋` and reach at least `⌈3 √v⌉`.
pub fn stein_solve(v: f64, set: &IntSet, window: (i64, i64)) -> Result<SteinSolution> {
    let law = CentredPoisson::new(v)?;
    let (lo, hi) = window;
    let need_hi = (MIN_WINDOW_SD * v.sqrt()).ceil() as i64;
    if lo > law.support_lo() || hi < need_hi {
        return Err(Error::WindowTooSmall(format!(
            "Stein window [{lo}, {hi}] must cover [{}, {need_hi}]",
            law.support_lo()
        )));
    }
    let shift = law.shift();
    let m_top = hi + 1 + shift;
    let in_a = |m: i64| m >= 0 && set.contains(m - shift);
    let mass = set_mass(&law, set);
    let x = |m: i64| if in_a(m) { 1.0 } else { 0.0 } - mass;

    // u(m) = v f(m) for m in 0..=m_top.
    let m_switch = (v.ceil() as i64).min(m_top);
    let mut u = vec![0.0; (m_top + 1) as usize];
    for m in 0..m_switch {
        u[(m + 1) as usize] = u[m as usize] * m as f64 / v + x(m);
    }
    if m_switch < m_top {
        let base = m_top.max(m_switch);
        let extra = (TAIL_SD * v.sqrt() + TAIL_SD).ceil() as i64;
        let m_far = (base.max(set_threshold(set, shift)) + 1).min(base + 1 + extra);
        let mut next = -x(m_far) * tail_ratio(v, m_far);
        for m in (m_switch + 1..m_far).rev() {
            let cur = v / m as f64 * (next - x(m));
            if m <= m_top {
                u[m as usize] = cur;
            }
            next = cur;
        }
    }

    let g = LatticeFn::from_fn(lo, hi + 1, |l| {
        let m = l + shift;
        if m <= 0 {
            0.0
        } else {
            u[m as usize] / v
        }
    });
    let mut sol = SteinSolution {
        v,
        set: set.clone(),
        window,
        g,
        target_mass: mass,
        bound_report: BoundReport {
            sup_abs_g: 0.0,
            sup_abs_dg: 0.0,
            sup_abs_lg: 0.0,
        },
        max_residual: 0.0,
    };
    let mut report = sol.bound_report;
    let mut max_residual: f64 = 0.0;
    for l in lo..=hi {
        let g0 = sol.g(l).unwrap_or(0.0);
        report.sup_abs_lg = report.sup_abs_lg.max((l as f64 * g0).abs());
        if l >= law.support_lo() {
            let g1 = sol.g(l + 1).unwrap_or(0.0);
            report.sup_abs_g = report.sup_abs_g.max(g1.abs());
            report.sup_abs_dg = report.sup_abs_dg.max((g1 - g0).abs());
            max_residual = max_residual.max(sol.residual(l).unwrap_or(f64::NAN).abs());
        }
    }
    sol.bound_report = report;
    sol.max_residual = max_residual;
    Ok(sol)
}

/// `Po(v){A}` for `A = (B ∩ ℤ_v) + ⌊v⌋`, summing whichever side is the tail.
fn set_mass(law: &CentredPoisson, set: &IntSet) -> f64 {
    let v = law.v();
    let shift = law.shift();
    let top = law.tail_top();
    let range_sum = |a: i64, b: i64| -> f64 {
        (a.max(0)..=b.min(top)).map(|m| poisson_pmf(v, m)).sum()
    };
    match set {
        IntSet::Points(p) => {
            let mut ms: Vec<i64> = p.iter().map(|l| l + shift).filter(|&m| m >= 0).collect();
            ms.sort_unstable();
            ms.dedup();
            ms.into_iter().map(|m| poisson_pmf(v, m)).sum()
        }
        IntSet::AtMost(t) => range_sum(0, t + shift),
        IntSet::AtLeast(t) => {
            let m = t + shift;
            if m <= 0 {
                1.0
            } else {
                range_sum(m, top)
            }
        }
    }
}

/// Smallest `M` with `1_A` constant on `[M, ∞)`.
fn set_threshold(set: &IntSet, shift: i64) -> i64 {
    match set {
        IntSet::Points(p) => p.iter().map(|l| l + shift + 1).max().unwrap_or(0),
        IntSet::AtMost(t) => t + shift + 1,
        IntSet::AtLeast(t) => t + shift,
    }
}

/// `Σ_{k≥M} p(k) / p(M−1) = Σ_{k≥M} Π_{s=M}^{k} v/s`, for `M > v`.
fn tail_ratio(v: f64, m: i64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut s = m as f64;
    loop {
        term *= v / s;
        sum += term;
        if term <= 1e-18 * sum {
            return sum;
        }
        s += 1.0;
    }
}

/// Per-set Stein bound `|E{v∇g(W+1) − W g(W) + ⟨v⟩ g(W)}| + P[W < −⌊v⌋]`
/// for `W ~ dist`, one entry per set in `family`.
pub fn stein_set_bounds(dist: &LatticeDist, v: f64, family: &[IntSet]) -> Result<Vec<f64>> {
    let law = CentredPoisson::new(v)?;
    let window = stein_window(dist, v);
    let below: f64 = dist
        .iter()
        .filter(|&(l, _)| l < law.support_lo())
        .map(|(_, p)| p)
        .sum();
    family
        .iter()
        .map(|set| {
            let sol = stein_solve(v, set, window)?;
            let frac = law.frac();
            let e = dist.expect(|w| {
                let g0 = sol.g(w).unwrap_or(0.0);
                let g1 = sol.g(w + 1).unwrap_or(0.0);
                v * (g1 - g0) - w as f64 * g0 + frac * g0
            });
            Ok(e.abs() + below)
        })
        .collect()
}

/// Largest per-set Stein bound over `family`; bounds
/// `|P[W ∈ B] − P̂o(v){B}|` for every `B` in the family.
pub fn stein_tv_bound(dist: &LatticeDist, v: f64, family: &[IntSet]) -> Result<f64> {
    Ok(stein_set_bounds(dist, v, family)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// `|E ∇²g(W+1)| = |E{g(W+1) − 2g(W) + g(W−1)}|` for `g = g_{v,B}` and `W ~ dist`.
pub fn second_difference_expectation(dist: &LatticeDist, v: f64, set: &IntSet) -> Result<f64> {
    let sol = stein_solve(v, set, stein_window(dist, v))?;
    let e = dist.expect(|w| {
        let g = |l: i64| sol.g(l).unwrap_or(0.0);
        g(w + 1) - 2.0 * g(w) + g(w - 1)
    });
    Ok(e.abs())
}

fn stein_window(dist: &LatticeDist, v: f64) -> (i64, i64) {
    let lo = (dist.lo() - 1).min(-(v.floor() as i64));
    let hi = (dist.hi() + 1).max((MIN_WINDOW_SD * v.sqrt()).ceil() as i64);
    (lo, hi)
}
