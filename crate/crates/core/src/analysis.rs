//! Distances between lattice laws, equilibrium diagnostics and convergence
//! studies over a grid of population scales.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{find_equilibrium, EquilibriumInfo};
use crate::lattice::{LatticeDist, LatticeFn};
use crate::model::ModelSpec;
use crate::stationary::{stationary_with_retry, TruncationPolicy, DEFAULT_K};
use crate::stein::{second_difference_expectation, CentredPoisson, IntSet};
use crate::{Error, Result};

/// Metric values below this are treated as exact zeros and left out of fits.
pub const FIT_FLOOR: f64 = 1e-10;

/// Metrics fitted by [`convergence_study`], in CSV column order.
pub const FITTED_METRICS: [&str; 6] = [
    "tv_to_centred_poisson",
    "kolmogorov",
    "shift_tv",
    "mean_abs_dev",
    "second_moment_in",
    "tail_mass",
];

/// `½ Σ_k |p(k) − q(k)|`.
pub fn tv_distance(p: &LatticeDist, q: &LatticeDist) -> f64 {
    let lo = p.lo().min(q.lo());
    let hi = p.hi().max(q.hi());
    let sum: f64 = (lo..=hi).map(|k| (p.pmf(k) - q.pmf(k)).abs()).sum();
    (0.5 * sum).min(1.0)
}

/// `sup_k |P[X ≤ k] − Q[X ≤ k]|`.
pub fn kolmogorov_distance(p: &LatticeDist, q: &LatticeDist) -> f64 {
    let lo = p.lo().min(q.lo());
    let hi = p.hi().max(q.hi());
    let (mut fp, mut fq, mut sup) = (0.0f64, 0.0f64, 0.0f64);
    for k in lo..=hi {
        fp += p.pmf(k);
        fq += q.pmf(k);
        sup = sup.max((fp - fq).abs());
    }
    sup.min(1.0)
}

/// Total variation between `p` and `p` translated by one.
pub fn shift_tv(p: &LatticeDist) -> f64 {
    tv_distance(p, &p.translate(1))
}

/// `|Σ_i π(i) (𝒜_n h)(i)|` over the states where `dist` has positive mass.
///
/// `h` must be defined at every such state and at every state reachable
/// from it in one jump.
pub fn dynkin_residual(model: &ModelSpec, n: u64, dist: &LatticeDist, h: &LatticeFn) -> Result<f64> {
    let mut total = 0.0;
    for (i, p) in dist.iter() {
        if p > 0.0 {
            total += p * model.generator_apply(n, h, i)?;
        }
    }
    Ok(total.abs())
}

/// Moments of `z_n − c` under an equilibrium law, with `z_n = Z_n / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStats {
    /// `E|z_n − c|`.
    pub mean_abs_dev: f64,
    /// `E{(z_n − c)² 1(|z_n − c| ≤ δ)}`.
    pub second_moment_in: f64,
    /// `P[|z_n − c| > δ′]`.
    pub tail_mass: f64,
    /// `E{|z_n − c| 1(|z_n − c| > δ)}`.
    pub first_moment_out: f64,
}

pub fn concentration_stats(
    dist: &LatticeDist,
    n: u64,
    c: f64,
    delta: f64,
    delta_prime: f64,
) -> Result<ConcentrationStats> {
    if !(delta_prime > 0.0 && delta_prime <= delta) {
        return Err(Error::InvalidInput(format!(
            "need 0 < delta' <= delta, got delta={delta}, delta'={delta_prime}"
        )));
    }
    let nf = n as f64;
    let mut s = ConcentrationStats {
        mean_abs_dev: 0.0,
        second_moment_in: 0.0,
        tail_mass: 0.0,
        first_moment_out: 0.0,
    };
    for (i, p) in dist.iter() {
        let dev = (i as f64 / nf - c).abs();
        s.mean_abs_dev += p * dev;
        if dev <= delta {
            s.second_moment_in += p * dev * dev;
        } else {
            s.first_moment_out += p * dev;
        }
        if dev > delta_prime {
            s.tail_mass += p;
        }
    }
    Ok(s)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Points that entered the fit.
    pub points: usize,
}

/// Unweighted log-log fit over the pairs with `y >= FIT_FLOOR`; `None` when
/// fewer than two such pairs remain.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|&(&x, &y)| x > 0.0 && y >= FIT_FLOOR && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogLogFit {
        slope,
        intercept,
        r2,
        points: pts.len(),
    })
}

/// Knobs of [`convergence_study`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Truncation half-width in standard deviations.
    pub k: f64,
    /// Defaults to `c / 2`.
    pub delta: Option<f64>,
    /// Defaults to `delta`.
    pub delta_prime: Option<f64>,
    /// Root bracket; defaults to the model's.
    pub bracket: Option<(f64, f64)>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            delta: None,
            delta_prime: None,
            bracket: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub c: f64,
    pub v_c: f64,
    /// `d_TV(P̂o(n v_c), Π_n * δ_{−⌊nc⌋})`.
    pub tv_to_centred_poisson: f64,
    pub kolmogorov: f64,
    /// `d_TV(Π_n, Π_n * δ_1)`.
    pub shift_tv: f64,
    pub mean_abs_dev: f64,
    pub second_moment_in: f64,
    pub tail_mass: f64,
    pub first_moment_out: f64,
    pub boundary_mass: f64,
    pub residual_norm: f64,
    /// `|E ∇²g(Ŵ+1)|` for `g = g_{n v_c, {l ≤ 0}}` and `Ŵ` the centred law.
    pub stein_second_difference: f64,
}

impl ConvergenceRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "tv_to_centred_poisson" => self.tv_to_centred_poisson,
            "kolmogorov" => self.kolmogorov,
            "shift_tv" => self.shift_tv,
            "mean_abs_dev" => self.mean_abs_dev,
            "second_moment_in" => self.second_moment_in,
            "tail_mass" => self.tail_mass,
            "first_moment_out" => self.first_moment_out,
            "stein_second_difference" => self.stein_second_difference,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub equilibrium: EquilibriumInfo,
    pub delta: f64,
    pub delta_prime: f64,
    /// Sorted by `n`.
    pub rows: Vec<ConvergenceRow>,
    /// Log-log fits keyed by metric name; `None` when too few positive values.
    pub fitted: BTreeMap<String, Option<LogLogFit>>,
}

impl ConvergenceReport {
    pub const CSV_HEADER: &'static str = "n,c,v_c,tv_to_centred_poisson,kolmogorov,shift_tv,\
mean_abs_dev,second_moment_in,tail_mass,first_moment_out,boundary_mass,residual_norm,\
stein_second_difference";

    pub fn fit(&self, metric: &str) -> Option<LogLogFit> {
        self.fitted.get(metric).copied().flatten()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.n,
                r.c,
                r.v_c,
                r.tv_to_centred_poisson,
                r.kolmogorov,
                r.shift_tv,
                r.mean_abs_dev,
                r.second_moment_in,
                r.tail_mass,
                r.first_moment_out,
                r.boundary_mass,
                r.residual_norm,
                r.stein_second_difference
            )?;
        }
        Ok(())
    }

    /// Two-column `ln n, ln metric` data for one metric, skipping zeros.
    pub fn write_plot_data<W: Write>(&self, metric: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# ln_n ln_{metric}")?;
        for r in &self.rows {
            if let Some(y) = r.metric(metric).filter(|&y| y > 0.0) {
                writeln!(out, "{:e} {:e}", (r.n as f64).ln(), y.ln())?;
            }
        }
        Ok(())
    }
}

/// Everything [`convergence_study`] computes for one `n`.
pub fn study_row(
    model: &ModelSpec,
    eq: &EquilibriumInfo,
    n: u64,
    k: f64,
    delta: f64,
    delta_prime: f64,
) -> Result<ConvergenceRow> {
    let policy = TruncationPolicy::for_model(model, n, eq, k);
    let (dist, diag) = stationary_with_retry(model, n, &policy)?;
    let centred = dist.centre(eq.centre_shift(n));
    let v = n as f64 * eq.v_c;
    let target = CentredPoisson::new(v)?.to_lattice();
    let conc = concentration_stats(&dist, n, eq.c, delta, delta_prime)?;
    Ok(ConvergenceRow {
        n,
        c: eq.c,
        v_c: eq.v_c,
        tv_to_centred_poisson: tv_distance(&target, &centred),
        kolmogorov: kolmogorov_distance(&target, &centred),
        shift_tv: shift_tv(&dist),
        mean_abs_dev: conc.mean_abs_dev,
        second_moment_in: conc.second_moment_in,
        tail_mass: conc.tail_mass,
        first_moment_out: conc.first_moment_out,
        boundary_mass: diag.boundary_mass,
        residual_norm: diag.residual_norm,
        stein_second_difference: second_difference_expectation(&centred, v, &IntSet::AtMost(0))?,
    })
}

/// Exact stationary solves over `n_grid` (at least four distinct values),
/// compared against `P̂o(n v_c)` after centring by `⌊n c⌋`, with log-log
/// slope fits for each metric in [`FITTED_METRICS`].
///
/// Rows are computed in parallel; any failed row aborts the study.
pub fn convergence_study(
    model: &ModelSpec,
    n_grid: &[u64],
    opts: &StudyOptions,
) -> Result<ConvergenceReport> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 4 || grid[0] == 0 {
        return Err(Error::InvalidInput(
            "convergence study needs at least four distinct positive n".into(),
        ));
    }
    let eq = find_equilibrium(model, opts.bracket.unwrap_or_else(|| model.default_bracket()))?;
    let delta = opts.delta.unwrap_or(eq.c.abs() / 2.0);
    let delta_prime = opts.delta_prime.unwrap_or(delta);
    let rows: Vec<ConvergenceRow> = grid
        .par_iter()
        .map(|&n| study_row(model, &eq, n, opts.k, delta, delta_prime))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let fitted = FITTED_METRICS
        .iter()
        .map(|&name| {
            let ys: Vec<f64> = rows.iter().map(|r| r.metric(name).unwrap_or(0.0)).collect();
            (name.to_string(), fit_loglog(&xs, &ys))
        })
        .collect();
    Ok(ConvergenceReport {
        equilibrium: eq,
        delta,
        delta_prime,
        rows,
        fitted,
    })
}
