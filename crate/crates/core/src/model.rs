//! Density-dependent jump-rate families.
//!
//! A model is a finite family of non-negative rate functions `λ_j`, one per
//! jump size `j ≠ 0`. The process at population scale `n` jumps from `i` to
//! `i + j` at rate `n λ_j(i / n)`.
//!
//! Built-in families evaluate their rates at `max(z, 0)` so that states below
//! zero, which a truncation window may contain, never see negative rates.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equilibrium::bisect_root;
use crate::lattice::LatticeFn;
use crate::{Error, Result};

/// Host-supplied rate function for [`ModelSpec::tabulated`].
pub type RateCallback = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative step of the central-difference derivative fallback.
pub const FD_STEP: f64 = 1e-5;

/// Serializable description of the built-in families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Immigration at rate `a`, birth events at per-capita rate `b` producing
    /// `j` offspring with probability `q_j`, per-capita death rate `d`.
    BdiGroupBirths {
        a: f64,
        b: f64,
        d: f64,
        /// `(j, q_j)` pairs.
        offspring: Vec<(i64, f64)>,
    },
    /// `λ_j(z) = max(intercept + slope * max(z, 0), 0)`.
    Affine { rates: Vec<AffineRate> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRate {
    pub jump: i64,
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Clone)]
enum Family {
    Bdi {
        a: f64,
        b: f64,
        d: f64,
        offspring: BTreeMap<i64, f64>,
    },
    Affine(BTreeMap<i64, (f64, f64)>),
    Tabulated(BTreeMap<i64, RateCallback>),
}

/// An immutable jump-rate family `{λ_j}` with its finite jump support.
#[derive(Clone)]
pub struct ModelSpec {
    family: Family,
    support: Vec<i64>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.family {
            Family::Bdi { .. } => "BdiGroupBirths",
            Family::Affine(_) => "AffineRates",
            Family::Tabulated(_) => "TabulatedRates",
        };
        f.debug_struct("ModelSpec")
            .field("family", &name)
            .field("support", &self.support)
            .finish()
    }
}

impl ModelSpec {
    /// Immigration, group-birth and death model.
    ///
    /// `offspring` lists `(j, q_j)` with `j >= 1`; the `q_j` must sum to one.
    pub fn bdi(a: f64, b: f64, d: f64, offspring: &[(i64, f64)]) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidModel(format!("immigration rate a={a} must be > 0")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidModel(format!("birth rate b={b} must be >= 0")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidModel(format!("death rate d={d} must be > 0")));
        }
        let mut q = BTreeMap::new();
        for &(j, qj) in offspring {
            if j < 1 {
                return Err(Error::InvalidModel(format!("offspring size {j} must be >= 1")));
            }
            if !(qj >= 0.0 && qj.is_finite()) {
                return Err(Error::InvalidModel(format!("offspring probability {qj} invalid")));
            }
            if qj > 0.0 {
                *q.entry(j).or_insert(0.0) += qj;
            }
        }
        let total: f64 = q.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "offspring probabilities sum to {total}, expected 1"
            )));
        }
        let mut support = vec![-1, 1];
        if b > 0.0 {
            support.extend(q.keys().copied().filter(|&j| j > 1));
        }
        Ok(Self {
            family: Family::Bdi { a, b, d, offspring: q },
            support,
        })
    }

    /// Affine rates `λ_j(z) = max(u_j + v_j max(z, 0), 0)`.
    pub fn affine(rates: &[AffineRate]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in rates {
            if r.jump == 0 {
                return Err(Error::InvalidModel("jump size 0 is not allowed".into()));
            }
            if !(r.intercept.is_finite() && r.slope.is_finite()) {
                return Err(Error::InvalidModel(format!("non-finite rate for jump {}", r.jump)));
            }
            if map.insert(r.jump, (r.intercept, r.slope)).is_some() {
                return Err(Error::InvalidModel(format!("jump {} listed twice", r.jump)));
            }
        }
        // A clipped affine rate vanishes identically iff both coefficients are <= 0.
        let support: Vec<i64> = map
            .iter()
            .filter(|(_, &(u, v))| u > 0.0 || v > 0.0)
            .map(|(&j, _)| j)
            .collect();
        Self::with_support(Family::Affine(map), support)
    }

    /// Rates supplied by the host program. Negative outputs are clipped to 0.
    pub fn tabulated(rates: Vec<(i64, RateCallback)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (j, f) in rates {
            if j == 0 {
                return Err(Error::InvalidModel("jump size 0 is not allowed".into()));
            }
            if map.insert(j, f).is_some() {
                return Err(Error::InvalidModel(format!("jump {j} listed twice")));
            }
        }
        let support = map.keys().copied().collect();
        Self::with_support(Family::Tabulated(map), support)
    }

    pub fn from_config(config: &ModelConfig) -> Result<Self> {
        match config {
            ModelConfig::BdiGroupBirths { a, b, d, offspring } => Self::bdi(*a, *b, *d, offspring),
            ModelConfig::Affine { rates } => Self::affine(rates),
        }
    }

    /// The serializable description, unavailable for host-registered rates.
    pub fn config(&self) -> Option<ModelConfig> {
        match &self.family {
            Family::Bdi { a, b, d, offspring } => Some(ModelConfig::BdiGroupBirths {
                a: *a,
                b: *b,
                d: *d,
                offspring: offspring.iter().map(|(&j, &q)| (j, q)).collect(),
            }),
            Family::Affine(map) => Some(ModelConfig::Affine {
                rates: map
                    .iter()
                    .map(|(&jump, &(intercept, slope))| AffineRate { jump, intercept, slope })
                    .collect(),
            }),
            Family::Tabulated(_) => None,
        }
    }

    fn with_support(family: Family, support: Vec<i64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidModel("jump support is empty".into()));
        }
        Ok(Self { family, support })
    }

    /// Jumps with a rate that is not identically zero, ascending.
    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn min_jump(&self) -> i64 {
        self.support[0]
    }

    pub fn max_jump(&self) -> i64 {
        self.support[self.support.len() - 1]
    }

    /// `(a, b, d, m₁, m₂)` for the group-birth family.
    pub fn bdi_params(&self) -> Option<BdiParams> {
        match &self.family {
            Family::Bdi { a, b, d, offspring } => Some(BdiParams {
                a: *a,
                b: *b,
                d: *d,
                m1: offspring.iter().map(|(&j, &q)| j as f64 * q).sum(),
                m2: offspring.iter().map(|(&j, &q)| (j * j) as f64 * q).sum(),
            }),
            _ => None,
        }
    }

    /// `λ_j(z)`; zero for jumps outside the support.
    pub fn rate(&self, j: i64, z: f64) -> f64 {
        match &self.family {
            Family::Bdi { a, b, d, offspring } => {
                let z = z.max(0.0);
                match j {
                    -1 => d * z,
                    1 => a + b * offspring.get(&1).copied().unwrap_or(0.0) * z,
                    j if j > 1 => b * offspring.get(&j).copied().unwrap_or(0.0) * z,
                    _ => 0.0,
                }
            }
            Family::Affine(map) => map
                .get(&j)
                .map_or(0.0, |&(u, v)| (u + v * z.max(0.0)).max(0.0)),
            Family::Tabulated(map) => map.get(&j).map_or(0.0, |f| f(z).max(0.0)),
        }
    }

    /// Analytic `λ_j'(z)` when the family provides one (right derivative at kinks).
    pub fn rate_derivative(&self, j: i64, z: f64) -> Option<f64> {
        let zpos = z >= 0.0;
        match &self.family {
            Family::Bdi { b, d, offspring, .. } => Some(if !zpos {
                0.0
            } else {
                match j {
                    -1 => *d,
                    j if j >= 1 => b * offspring.get(&j).copied().unwrap_or(0.0),
                    _ => 0.0,
                }
            }),
            Family::Affine(map) => Some(map.get(&j).map_or(0.0, |&(u, v)| {
                let slope = if zpos { v } else { 0.0 };
                let value = u + v * z.max(0.0);
                if value > 0.0 || (value == 0.0 && slope > 0.0) {
                    slope
                } else {
                    0.0
                }
            })),
            Family::Tabulated(_) => None,
        }
    }

    /// Analytic `λ_j''(z)` when available; zero away from kinks for the built-ins.
    pub fn rate_second_derivative(&self, _j: i64, _z: f64) -> Option<f64> {
        match self.family {
            Family::Bdi { .. } | Family::Affine(_) => Some(0.0),
            Family::Tabulated(_) => None,
        }
    }

    /// Drift `F(z) = Σ j λ_j(z)`.
    pub fn drift(&self, z: f64) -> f64 {
        self.support.iter().map(|&j| j as f64 * self.rate(j, z)).sum()
    }

    /// `σ²(z) = Σ j² λ_j(z)`.
    pub fn sigma2(&self, z: f64) -> f64 {
        self.support
            .iter()
            .map(|&j| (j * j) as f64 * self.rate(j, z))
            .sum()
    }

    /// Total jump intensity `Σ λ_j(z)` per unit of `n`.
    pub fn total_rate(&self, z: f64) -> f64 {
        self.support.iter().map(|&j| self.rate(j, z)).sum()
    }

    /// Analytic `F'(z)` when every rate has an analytic derivative.
    pub fn drift_derivative(&self, z: f64) -> Option<f64> {
        self.support
            .iter()
            .map(|&j| self.rate_derivative(j, z).map(|dl| j as f64 * dl))
            .sum()
    }

    /// `F'(z)`, analytic when available, otherwise a central difference.
    pub fn drift_slope(&self, z: f64) -> f64 {
        self.drift_derivative(z)
            .unwrap_or_else(|| central_difference(|x| self.drift(x), z))
    }

    fn rate_slope(&self, j: i64, z: f64) -> f64 {
        self.rate_derivative(j, z)
            .unwrap_or_else(|| central_difference(|x| self.rate(j, x), z))
    }

    fn rate_curvature(&self, j: i64, z: f64) -> f64 {
        self.rate_second_derivative(j, z).unwrap_or_else(|| {
            let h = FD_STEP * z.abs().max(1.0);
            (self.rate(j, z + h) - 2.0 * self.rate(j, z) + self.rate(j, z - h)) / (h * h)
        })
    }

    /// Bracket used when the caller does not supply one.
    pub fn default_bracket(&self) -> (f64, f64) {
        match self.bdi_params() {
            Some(p) => {
                let kappa = p.d - p.b * p.m1;
                let mut scale = (p.a / p.d).max(1.0);
                if kappa > 0.0 {
                    scale = scale.max(p.a / kappa);
                }
                (1e-6, 10.0 * scale)
            }
            None => (1e-6, 1e3),
        }
    }

    /// `(𝒜_n h)(i) = Σ_j n λ_j(i/n) [h(i+j) − h(i)]`.
    pub fn generator_apply(&self, n: u64, h: &LatticeFn, i: i64) -> Result<f64> {
        let nf = n as f64;
        let z = i as f64 / nf;
        let hi = h.at(i)?;
        let mut total = 0.0;
        for &j in &self.support {
            let diff = h.at(i + j)? - hi;
            total += nf * self.rate(j, z) * diff;
        }
        Ok(total)
    }

    /// Second-order split of the generator:
    /// `(𝒜_n h)(i) = (n/2) σ²(i/n) ∇g(i) + n F(i/n) g(i) + E_n(g, i)`
    /// with `g(i) = h(i+1) − h(i)` and `∇f(i) = f(i) − f(i−1)`.
    pub fn generator_decompose(&self, n: u64, h: &LatticeFn, i: i64) -> Result<GeneratorParts> {
        let lo = (i - 1).min(i + self.min_jump());
        let hi = (i + 1).max(i + self.max_jump());
        // g on [lo, hi - 1] needs h on [lo, hi].
        h.at(lo)?;
        h.at(hi)?;
        let g = LatticeFn::from_fn(lo, hi - 1, |k| {
            h.get(k + 1).unwrap_or(f64::NAN) - h.get(k).unwrap_or(f64::NAN)
        });
        let nf = n as f64;
        let z = i as f64 / nf;
        let dg = backward_diff(&g, i)?;
        let drift = self.drift(z);
        let sigma_term = 0.5 * nf * self.sigma2(z) * dg;
        let drift_term = nf * drift * g.at(i)?;
        let mut remainder = -0.5 * nf * drift * dg;
        for &j in &self.support {
            let rate = nf * self.rate(j, z);
            if j >= 2 {
                remainder += a_coeff(&g, i, j as usize)? * rate;
            } else if j <= -2 {
                remainder -= b_coeff(&g, i, (-j) as usize)? * rate;
            }
        }
        Ok(GeneratorParts {
            sigma_term,
            drift_term,
            remainder,
        })
    }

    /// Numeric check of the regularity assumptions on a `z` window.
    ///
    /// The window is scanned on a uniform grid of [`ASSUMPTION_GRID`] points;
    /// every infimum and supremum in the report is a grid estimate.
    pub fn check_assumptions(&self, window: (f64, f64), eta_grid: &[f64]) -> AssumptionReport {
        let (zlo, zhi) = window;
        let grid: Vec<f64> = (0..ASSUMPTION_GRID)
            .map(|k| zlo + (zhi - zlo) * k as f64 / (ASSUMPTION_GRID - 1) as f64)
            .collect();
        let values: Vec<f64> = grid.iter().map(|&z| self.drift(z)).collect();
        let mut notes = vec![format!(
            "grid of {ASSUMPTION_GRID} points on [{zlo}, {zhi}]"
        )];

        let brackets = sign_change_brackets(&grid, &values);
        let mut c = None;
        let mut f_prime_c = None;
        match brackets.len() {
            0 => notes.push("drift has no sign change on the window".into()),
            1 => {
                let (lo, hi) = brackets[0];
                let root = bisect_root(|z| self.drift(z), lo, hi);
                c = Some(root);
                f_prime_c = Some(self.drift_slope(root));
            }
            k => notes.push(format!("drift changes sign {k} times on the window")),
        }

        let mut mu_eta = Vec::new();
        if let Some(c) = c {
            for &eta in eta_grid {
                let mu = grid
                    .iter()
                    .zip(&values)
                    .filter(|(&z, _)| (z - c).abs() >= eta)
                    .map(|(_, f)| f.abs())
                    .fold(f64::INFINITY, f64::min);
                if mu.is_finite() {
                    mu_eta.push(EtaInfimum { eta, mu });
                } else {
                    notes.push(format!("no grid point at distance >= {eta} from c"));
                }
            }
        }
        let a1_ok = matches!(f_prime_c, Some(fp) if fp < 0.0) && mu_eta.iter().all(|m| m.mu > 0.0);

        let centre = c.unwrap_or(0.5 * (zlo + zhi));
        let growth_constants: Vec<(i64, f64)> = self
            .support
            .iter()
            .map(|&j| {
                let cj = grid
                    .iter()
                    .map(|&z| self.rate(j, z) / (1.0 + (z - centre).abs()))
                    .fold(0.0, f64::max);
                (j, cj)
            })
            .collect();
        let a2a_ok = growth_constants.iter().all(|(_, cj)| cj.is_finite());

        let gcd_of_support = self
            .support
            .iter()
            .fold(0u64, |g, &j| gcd(g, j.unsigned_abs()));
        let inf_lambda1 = grid
            .iter()
            .map(|&z| self.rate(1, z))
            .fold(f64::INFINITY, f64::min);
        let lambda0 = 0.5 * inf_lambda1;
        if gcd_of_support != 1 {
            notes.push(format!("jump sizes share the factor {gcd_of_support}"));
        }
        let a2b_ok = lambda0 > 0.0 && gcd_of_support == 1;

        let (mut a3_ok, mut delta, mut epsilon, mut l1, mut l2) = (false, None, None, None, None);
        if let Some(c) = c {
            let d = if c.abs() > 0.0 { (0.5 * c.abs()).min(1.0) } else { 1.0 };
            let local: Vec<f64> = (0..=LOCAL_GRID)
                .map(|k| c - d + 2.0 * d * k as f64 / LOCAL_GRID as f64)
                .collect();
            let mut eps = f64::INFINITY;
            let mut sup1: f64 = 0.0;
            let mut sup2: f64 = 0.0;
            let mut positive = true;
            for &j in &self.support {
                let at_c = self.rate(j, c);
                if !(at_c > 0.0) {
                    positive = false;
                    notes.push(format!("rate of jump {j} vanishes at c"));
                    continue;
                }
                for &z in &local {
                    eps = eps.min(self.rate(j, z) / at_c);
                    sup1 = sup1.max(self.rate_slope(j, z).abs() / at_c);
                    sup2 = sup2.max(self.rate_curvature(j, z).abs() / (j.abs() as f64 * at_c));
                }
            }
            a3_ok = positive && eps > 0.0;
            delta = Some(d);
            epsilon = eps.is_finite().then_some(eps);
            l1 = Some(sup1);
            l2 = Some(sup2);
        }

        AssumptionReport {
            a1_ok,
            a2a_ok,
            a2b_ok,
            a3_ok,
            c,
            f_prime_c,
            mu_eta,
            gcd_of_support,
            alpha_max: 1.0,
            lambda0,
            growth_constants,
            delta,
            epsilon,
            l1,
            l2,
            notes,
        }
    }
}

/// Grid size of the window scan in [`ModelSpec::check_assumptions`].
pub const ASSUMPTION_GRID: usize = 1025;
const LOCAL_GRID: usize = 200;

/// Closed-form parameters of the group-birth family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdiParams {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    /// First moment of the offspring law.
    pub m1: f64,
    /// Second moment of the offspring law.
    pub m2: f64,
}

/// The three parts of [`ModelSpec::generator_decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParts {
    /// `(n/2) σ²(i/n) ∇g(i)`.
    pub sigma_term: f64,
    /// `n F(i/n) g(i)`.
    pub drift_term: f64,
    /// `E_n(g, i)`.
    pub remainder: f64,
}

impl GeneratorParts {
    pub fn total(&self) -> f64 {
        self.sigma_term + self.drift_term + self.remainder
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaInfimum {
    pub eta: f64,
    /// Grid estimate of `inf_{|z − c| ≥ η} |F(z)|`.
    pub mu: f64,
}

/// Outcome of [`ModelSpec::check_assumptions`]. Failures are flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Unique stable root of the drift with `|F|` bounded away from zero elsewhere.
    pub a1_ok: bool,
    /// Linear growth envelopes for every rate.
    pub a2a_ok: bool,
    /// `λ_1` bounded below and jump sizes not confined to a sublattice.
    pub a2b_ok: bool,
    /// Every supported rate is positive near `c`.
    pub a3_ok: bool,
    pub c: Option<f64>,
    pub f_prime_c: Option<f64>,
    pub mu_eta: Vec<EtaInfimum>,
    pub gcd_of_support: u64,
    /// Largest admissible moment exponent; 1 for any finite support.
    pub alpha_max: f64,
    /// Half the infimum of `λ_1` over the window.
    pub lambda0: f64,
    /// `(j, c_j)` with `c_j = sup λ_j(z) / (1 + |z − c|)` over the window.
    pub growth_constants: Vec<(i64, f64)>,
    /// Radius of the neighbourhood of `c` used for the local checks.
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    /// Estimate of `sup_j ‖λ_j'‖ / λ_j(c)` near `c`.
    pub l1: Option<f64>,
    /// Estimate of `sup_j ‖λ_j''‖ / (|j| λ_j(c))` near `c`.
    pub l2: Option<f64>,
    pub notes: Vec<String>,
}

/// `∇f(i) = f(i) − f(i − 1)`.
pub fn backward_diff(f: &LatticeFn, i: i64) -> Result<f64> {
    Ok(f.at(i)? - f.at(i - 1)?)
}

fn second_backward_diff(f: &LatticeFn, i: i64) -> Result<f64> {
    Ok(f.at(i)? - 2.0 * f.at(i - 1)? + f.at(i - 2)?)
}

/// `a_j(g, i) = −j(j−1)/2 ∇g(i) + Σ_{k=1}^{j−1} k ∇g(i+j−k)`.
pub fn a_coeff(g: &LatticeFn, i: i64, j: usize) -> Result<f64> {
    let j64 = j as i64;
    let mut acc = -0.5 * (j * (j - 1)) as f64 * backward_diff(g, i)?;
    for k in 1..j64 {
        acc += k as f64 * backward_diff(g, i + j64 - k)?;
    }
    Ok(acc)
}

/// `a_j(g, i) = Σ_{k=2}^{j} C(k,2) ∇²g(i+j−k+1)`.
pub fn a_coeff_binomial(g: &LatticeFn, i: i64, j: usize) -> Result<f64> {
    let j64 = j as i64;
    (2..=j64)
        .map(|k| Ok(choose2(k) * second_backward_diff(g, i + j64 - k + 1)?))
        .sum()
}

/// `b_j(g, i) = j(j−1)/2 ∇g(i) − Σ_{k=1}^{j−1} k ∇g(i−j+k)`.
pub fn b_coeff(g: &LatticeFn, i: i64, j: usize) -> Result<f64> {
    let j64 = j as i64;
    let mut acc = 0.5 * (j * (j - 1)) as f64 * backward_diff(g, i)?;
    for k in 1..j64 {
        acc -= k as f64 * backward_diff(g, i - j64 + k)?;
    }
    Ok(acc)
}

/// `b_j(g, i) = Σ_{k=2}^{j} C(k,2) ∇²g(i−j+k)`.
pub fn b_coeff_binomial(g: &LatticeFn, i: i64, j: usize) -> Result<f64> {
    let j64 = j as i64;
    (2..=j64)
        .map(|k| Ok(choose2(k) * second_backward_diff(g, i - j64 + k)?))
        .sum()
}

fn choose2(k: i64) -> f64 {
    (k * (k - 1) / 2) as f64
}

fn central_difference(f: impl Fn(f64) -> f64, z: f64) -> f64 {
    let h = FD_STEP * z.abs().max(1.0);
    (f(z + h) - f(z - h)) / (2.0 * h)
}

pub(crate) fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sub-intervals of a scan grid on which `values` changes sign. A grid point
/// where the value is exactly zero counts once.
pub(crate) fn sign_change_brackets(grid: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k + 1 < grid.len() {
        let (f0, f1) = (values[k], values[k + 1]);
        if f0 == 0.0 {
            out.push((grid[k], grid[k]));
            // Skip a plateau of zeros.
            while k + 1 < grid.len() && values[k + 1] == 0.0 {
                k += 1;
            }
        } else if f0 * f1 < 0.0 {
            out.push((grid[k], grid[k + 1]));
        }
        k += 1;
    }
    if let (Some(&g), Some(&v)) = (grid.last(), values.last()) {
        if v == 0.0 && out.last().is_none_or(|&(lo, _)| lo != g) && values[values.len() - 2] != 0.0 {
            out.push((g, g));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bdi_half() -> ModelSpec {
        ModelSpec::bdi(1.0, 0.5, 2.0, &[(1, 1.0)]).unwrap()
    }

    fn bdi_exact() -> ModelSpec {
        ModelSpec::bdi(1.0, 0.0, 2.0, &[(1, 1.0)]).unwrap()
    }

    #[test]
    fn rate_examples() {
        assert!((bdi_half().rate(-1, 0.5) - 1.0).abs() < 1e-15);
        for z in [0.0, 0.3, 7.0] {
            assert_eq!(bdi_exact().rate(1, z), 1.0);
        }
        assert_eq!(bdi_half().rate(5, 1.0), 0.0);
        // Clamped below zero.
        assert_eq!(bdi_half().rate(-1, -3.0), 0.0);
    }

    #[test]
    fn drift_and_sigma2_examples() {
        let m = bdi_half();
        assert!((m.drift(0.0) - 1.0).abs() < 1e-15);
        assert!(m.drift(2.0 / 3.0).abs() < 1e-15);
        assert!((m.sigma2(2.0 / 3.0) - 8.0 / 3.0).abs() < 1e-14);
        let e = bdi_exact();
        assert!(e.drift(0.5).abs() < 1e-15);
        assert!((e.sigma2(0.5) - 2.0).abs() < 1e-15);
        let zero = ModelSpec::affine(&[AffineRate { jump: 1, intercept: 0.0, slope: 1.0 }]).unwrap();
        assert_eq!(zero.sigma2(-1.0), 0.0);
    }

    #[test]
    fn support_rules() {
        let m = ModelSpec::bdi(1.0, 0.5, 2.0, &[(1, 0.5), (3, 0.5)]).unwrap();
        assert_eq!(m.support(), &[-1, 1, 3]);
        let no_births = ModelSpec::bdi(1.0, 0.0, 2.0, &[(3, 1.0)]).unwrap();
        assert_eq!(no_births.support(), &[-1, 1]);
        let aff = ModelSpec::affine(&[
            AffineRate { jump: 2, intercept: -1.0, slope: 0.0 },
            AffineRate { jump: -1, intercept: 0.0, slope: 1.0 },
        ]);
        assert_eq!(aff.unwrap().support(), &[-1]);
        assert!(ModelSpec::affine(&[AffineRate { jump: 1, intercept: -1.0, slope: 0.0 }]).is_err());
        assert!(ModelSpec::bdi(1.0, 0.5, 2.0, &[(1, 0.4)]).is_err());
        assert!(ModelSpec::bdi(0.0, 0.5, 2.0, &[(1, 1.0)]).is_err());
    }

    #[test]
    fn generator_examples() {
        let m = bdi_exact();
        let c = LatticeFn::constant(-5, 20, 3.0);
        assert_eq!(m.generator_apply(10, &c, 5).unwrap(), 0.0);
        let id = LatticeFn::from_fn(-5, 20, |k| k as f64);
        assert!(m.generator_apply(10, &id, 5).unwrap().abs() < 1e-12);
        let narrow = LatticeFn::from_fn(5, 5, |k| k as f64);
        assert!(matches!(m.generator_apply(10, &narrow, 5), Err(Error::WindowTooSmall(_))));
    }

    #[test]
    fn generator_of_square() {
        let m = ModelSpec::bdi(1.3, 0.7, 2.0, &[(1, 0.2), (2, 0.3), (4, 0.5)]).unwrap();
        let sq = LatticeFn::from_fn(-10, 60, |k| (k * k) as f64);
        for (n, i) in [(7u64, 3i64), (20, 11), (50, 40)] {
            let z = i as f64 / n as f64;
            let want = 2.0 * i as f64 * n as f64 * m.drift(z) + n as f64 * m.sigma2(z);
            let got = m.generator_apply(n, &sq, i).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn linear_h_has_no_remainder() {
        let m = ModelSpec::affine(&[
            AffineRate { jump: -3, intercept: 0.5, slope: 1.0 },
            AffineRate { jump: 1, intercept: 2.0, slope: 0.0 },
            AffineRate { jump: 4, intercept: 0.1, slope: 0.2 },
        ])
        .unwrap();
        let h = LatticeFn::from_fn(-10, 30, |k| 2.0 * k as f64 - 1.0);
        let parts = m.generator_decompose(9, &h, 6).unwrap();
        assert_eq!(parts.sigma_term, 0.0);
        assert_eq!(parts.remainder, 0.0);
    }

    #[test]
    fn decompose_needs_second_differences() {
        let m = bdi_exact();
        let h = LatticeFn::from_fn(4, 6, |k| k as f64);
        assert!(m.generator_decompose(10, &h, 5).is_ok());
        let h = LatticeFn::from_fn(5, 6, |k| k as f64);
        assert!(matches!(m.generator_decompose(10, &h, 5), Err(Error::WindowTooSmall(_))));
    }

    #[test]
    fn assumptions_for_bdi() {
        let r = bdi_half().check_assumptions((1e-6, 10.0), &[0.1, 0.5, 1.0]);
        assert!(r.a1_ok && r.a2a_ok && r.a2b_ok && r.a3_ok, "{r:?}");
        assert!((r.c.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f_prime_c.unwrap() + 1.5).abs() < 1e-12);
        assert_eq!(r.gcd_of_support, 1);
        assert!((r.lambda0 - 0.5).abs() < 1e-6);
        assert_eq!(r.l2, Some(0.0));
        // inf |F| at distance η from c is η (d − b m₁) = 1.5 η.
        for m in &r.mu_eta {
            assert!((m.mu - 1.5 * m.eta).abs() < 0.02, "{m:?}");
        }
    }

    #[test]
    fn assumptions_fail_without_stable_root() {
        let m = ModelSpec::bdi(1.0, 1.0, 0.5, &[(1, 1.0)]).unwrap();
        let r = m.check_assumptions((1e-6, 50.0), &[0.1]);
        assert!(!r.a1_ok);
        assert!(r.c.is_none());
    }

    #[test]
    fn even_lattice_flagged() {
        let m = ModelSpec::affine(&[
            AffineRate { jump: -2, intercept: 0.0, slope: 1.0 },
            AffineRate { jump: 2, intercept: 1.0, slope: 0.0 },
        ])
        .unwrap();
        let r = m.check_assumptions((1e-6, 5.0), &[0.1]);
        assert_eq!(r.gcd_of_support, 2);
        assert!(!r.a2b_ok);
        assert!(r.a1_ok);
    }

    #[test]
    fn tabulated_uses_finite_differences() {
        let m = ModelSpec::tabulated(vec![
            (1, Arc::new(|_z: f64| 1.0) as RateCallback),
            (-1, Arc::new(|z: f64| z * z) as RateCallback),
        ])
        .unwrap();
        assert!(m.drift_derivative(1.0).is_none());
        assert!((m.drift_slope(1.0) + 2.0).abs() < 1e-8);
        let r = m.check_assumptions((1e-6, 5.0), &[0.2]);
        assert!(r.a1_ok);
        assert!((r.c.unwrap() - 1.0).abs() < 1e-12);
        // λ_{−1}'' = 2, |j| λ_{−1}(c) = 1.
        assert!((r.l2.unwrap() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn sign_changes_counted_once_at_grid_zeros() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(sign_change_brackets(&grid, &[1.0, 0.0, -1.0, -2.0, -3.0]).len(), 1);
        assert_eq!(sign_change_brackets(&grid, &[1.0, -1.0, 1.0, -1.0, -2.0]).len(), 3);
        assert_eq!(sign_change_brackets(&grid, &[1.0, 1.0, 1.0, 1.0, 0.0]).len(), 1);
    }
}
