//! Acceptance gate. Each test prints one `PASS`/`FAIL` line per criterion
//! before asserting it.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use popequil::analysis::{
    convergence_study, dynkin_residual, tv_distance, ConvergenceReport, StudyOptions,
};
use popequil::equilibrium::find_equilibrium;
use popequil::model::{a_coeff, a_coeff_binomial, b_coeff, b_coeff_binomial, AffineRate, ModelSpec};
use popequil::simulate::{ssa_run, SimConfig};
use popequil::stationary::{stationary_exact, stationary_with_retry, TruncationPolicy, DEFAULT_K};
use popequil::stein::{poisson_pmf, stein_solve, CentredPoisson, IntSet};
use popequil::LatticeFn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Written to the stderr handle directly, which the test harness does not capture.
fn verdict(id: &str, ok: bool, detail: String) {
    let mark = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{mark} criterion {id}: {detail}");
}

fn immigration_death() -> ModelSpec {
    ModelSpec::bdi(1.0, 0.0, 2.0, &[(1, 1.0)]).unwrap()
}

fn group_births() -> ModelSpec {
    ModelSpec::bdi(1.0, 0.5, 2.0, &[(1, 0.5), (2, 0.5)]).unwrap()
}

const GRID: [u64; 5] = [50, 100, 200, 400, 800];

fn main_study() -> &'static (ConvergenceReport, Duration) {
    static STUDY: OnceLock<(ConvergenceReport, Duration)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let t = Instant::now();
        let r = convergence_study(&group_births(), &GRID, &StudyOptions::default()).unwrap();
        (r, t.elapsed())
    })
}

fn slope_in(report: &ConvergenceReport, metric: &str, lo: f64, hi: f64) -> (bool, String) {
    match report.fit(metric) {
        Some(f) => (
            f.slope >= lo && f.slope <= hi,
            format!("{metric} slope {:.4} (r2 {:.4}) in [{lo}, {hi}]", f.slope, f.r2),
        ),
        None => (false, format!("{metric}: no fit")),
    }
}

#[test]
fn criterion_1_exactness() {
    let t = Instant::now();
    let m = immigration_death();
    let eq = find_equilibrium(&m, m.default_bracket()).unwrap();
    let mut worst_pmf: f64 = 0.0;
    let mut tv_ok = true;
    let mut detail = Vec::new();
    for n in [50u64, 100, 200, 400] {
        let policy = TruncationPolicy::for_model(&m, n, &eq, DEFAULT_K);
        let (dist, diag) = stationary_exact(&m, n, &policy).unwrap();
        let mean = n as f64 / 2.0;
        for (i, p) in dist.iter() {
            worst_pmf = worst_pmf.max((p - poisson_pmf(mean, i)).abs());
        }
        let target = CentredPoisson::new(n as f64 * eq.v_c).unwrap().to_lattice();
        let tv = tv_distance(&target, &dist.centre(eq.centre_shift(n)));
        tv_ok &= tv <= 1e-8 + diag.boundary_mass;
        detail.push(format!("n={n} tv={tv:.2e}"));
    }
    let elapsed = t.elapsed();
    let ok = worst_pmf <= 1e-10 && tv_ok && elapsed <= Duration::from_secs(10);
    verdict(
        "1",
        ok,
        format!("max pmf err {worst_pmf:.2e}; {}; {elapsed:?}", detail.join(", ")),
    );
    assert!(ok);
}

#[test]
fn criterion_2_main_rate() {
    let (report, elapsed) = main_study();
    let (mut ok, mut detail) = slope_in(report, "tv_to_centred_poisson", -0.65, -0.35);
    let r2 = report.fit("tv_to_centred_poisson").map_or(0.0, |f| f.r2);
    ok &= r2 >= 0.95 && *elapsed <= Duration::from_secs(60);
    detail.push_str(&format!("; {elapsed:?}"));
    verdict("2", ok, detail);
    assert!(ok);
}

#[test]
fn criterion_3_shift_smoothness() {
    let (report, _) = main_study();
    let (ok, detail) = slope_in(report, "shift_tv", -0.65, -0.35);
    verdict("3", ok, detail);
    assert!(ok);
}

#[test]
fn criterion_4_concentration() {
    let (report, _) = main_study();
    let (a, da) = slope_in(report, "mean_abs_dev", -0.65, -0.35);
    let (b, db) = slope_in(report, "second_moment_in", -1.2, -0.8);
    let tiny = report.rows.iter().all(|r| r.tail_mass < 1e-12);
    let (c, dc) = if tiny {
        (true, "tail_mass < 1e-12 for all n".to_string())
    } else {
        slope_in(report, "tail_mass", f64::NEG_INFINITY, -0.8)
    };
    let ok = a && b && c;
    verdict("4", ok, format!("{da}; {db}; {dc}"));
    assert!(ok);
}

fn random_set(rng: &mut ChaCha8Rng, v: f64) -> IntSet {
    let lo = -(v.floor() as i64);
    let hi = (4.0 * v.sqrt()).ceil() as i64 + 2;
    match rng.random_range(0..4) {
        0 => IntSet::AtMost(rng.random_range(lo - 2..=hi)),
        1 => IntSet::AtLeast(rng.random_range(lo..=hi + 2)),
        _ => {
            let k = rng.random_range(1..=6);
            IntSet::Points((0..k).map(|_| rng.random_range(lo - 1..=hi + 1)).collect())
        }
    }
}

#[test]
fn criterion_5_stein_machinery() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_res, mut cases, mut failures): (f64, usize, Vec<String>) = (0.0, 0, Vec::new());
    for v in [0.5f64, 1.0, 2.5, 4.0, 10.7, 100.0, 1000.0] {
        let fl = v.floor() as i64;
        let window = (-fl - 3, (6.0 * v.sqrt()).ceil() as i64 + 10);
        for _ in 0..50 {
            let set = random_set(&mut rng, v);
            let sol = stein_solve(v, &set, window).unwrap();
            cases += 1;
            worst_res = worst_res.max(sol.max_residual);
            let below_zero = (window.0..=-fl).all(|l| sol.g.get(l) == Some(0.0));
            if sol.max_residual > 1e-10 || !sol.bound_report.within_bounds(v, 1e-12) || !below_zero {
                failures.push(format!("v={v} B={set}: {:?} res={:.2e}", sol.bound_report, sol.max_residual));
            }
        }
    }
    let elapsed = t.elapsed();
    let ok = failures.is_empty() && elapsed <= Duration::from_secs(10);
    verdict(
        "5",
        ok,
        format!("{cases} cases, max residual {worst_res:.2e}, {} failures; {elapsed:?}", failures.len()),
    );
    for f in failures.iter().take(5) {
        let _ = writeln!(std::io::stderr(), "  {f}");
    }
    assert!(ok);
}

fn random_model(rng: &mut ChaCha8Rng) -> ModelSpec {
    if rng.random_bool(0.5) {
        let k = rng.random_range(1..=4);
        let jumps: BTreeSet<i64> = (0..k).map(|_| rng.random_range(1..=10)).collect();
        let q: Vec<(i64, f64)> = jumps.into_iter().map(|j| (j, rng.random_range(0.1..1.0))).collect();
        let total: f64 = q.iter().map(|p| p.1).sum();
        let q: Vec<(i64, f64)> = q.into_iter().map(|(j, w)| (j, w / total)).collect();
        let m1: f64 = q.iter().map(|&(j, w)| j as f64 * w).sum();
        let b = rng.random_range(0.0..1.0);
        let d = b * m1 + rng.random_range(0.2..3.0);
        ModelSpec::bdi(rng.random_range(0.1..3.0), b, d, &q).unwrap()
    } else {
        let mut rates = vec![AffineRate { jump: 1, intercept: rng.random_range(0.1..2.0), slope: 0.0 }];
        let extra: BTreeSet<i64> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(-10i64..=10)).collect();
        for jump in extra {
            if !(-1..=1).contains(&jump) {
                rates.push(AffineRate {
                    jump,
                    intercept: rng.random_range(0.0..1.0),
                    slope: rng.random_range(0.0..2.0),
                });
            }
        }
        rates.push(AffineRate { jump: -1, intercept: 0.0, slope: rng.random_range(0.5..3.0) });
        ModelSpec::affine(&rates).unwrap()
    }
}

#[test]
fn criterion_6_generator_identity() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_split, mut worst_coeff): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let m = random_model(&mut rng);
        let n = rng.random_range(1..=100u64);
        let i = rng.random_range(0..=2 * n as i64);
        let h = LatticeFn::from_fn(i - 14, i + 14, |_| rng.random_range(-1.0..1.0));
        let exact = m.generator_apply(n, &h, i).unwrap();
        let parts = m.generator_decompose(n, &h, i).unwrap();
        let scale = exact.abs().max(parts.sigma_term.abs()).max(parts.drift_term.abs()).max(1.0);
        worst_split = worst_split.max((parts.total() - exact).abs() / scale);

        let g = LatticeFn::from_fn(i - 14, i + 14, |_| rng.random_range(-1.0..1.0));
        for j in 2..=10usize {
            let pairs = [
                (a_coeff(&g, i, j).unwrap(), a_coeff_binomial(&g, i, j).unwrap()),
                (b_coeff(&g, i, j).unwrap(), b_coeff_binomial(&g, i, j).unwrap()),
            ];
            for (x, y) in pairs {
                worst_coeff = worst_coeff.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
            }
        }
    }
    let elapsed = t.elapsed();
    let ok = worst_split <= 1e-10 && worst_coeff <= 1e-10 && elapsed <= Duration::from_secs(5);
    verdict(
        "6",
        ok,
        format!("decomposition rel err {worst_split:.2e}, a_j/b_j forms rel err {worst_coeff:.2e}; {elapsed:?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_7_dynkin() {
    let t = Instant::now();
    let m = group_births();
    let n = 200;
    let eq = find_equilibrium(&m, m.default_bracket()).unwrap();
    let policy = TruncationPolicy::for_model(&m, n, &eq, DEFAULT_K);
    let (dist, _) = stationary_with_retry(&m, n, &policy).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (lo, hi) = (dist.lo() + m.min_jump(), dist.hi() + m.max_jump());
    let centre = eq.centre_shift(n);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let h = if k % 2 == 0 {
            LatticeFn::from_fn(lo, hi, |_| rng.random_range(-1.0..1.0))
        } else {
            let a = centre - rng.random_range(0..40);
            let b = centre + rng.random_range(0..40);
            LatticeFn::from_fn(lo, hi, |i| if (a..=b).contains(&i) { 1.0 } else { 0.0 })
        };
        worst = worst.max(dynkin_residual(&m, n, &dist, &h).unwrap());
    }
    let elapsed = t.elapsed();
    let ok = worst <= 1e-7 && elapsed <= Duration::from_secs(5);
    verdict("7", ok, format!("max residual {worst:.2e} over 20 h; {elapsed:?}"));
    assert!(ok);
}

#[test]
fn criterion_8_simulation() {
    let t = Instant::now();
    let n = 100;
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, m, seed) in [("immigration-death", immigration_death(), 81u64), ("group-births", group_births(), 82)] {
        let eq = find_equilibrium(&m, m.default_bracket()).unwrap();
        let cfg = SimConfig::for_model(n, &eq, seed);
        let est = ssa_run(&m, &cfg).unwrap();
        let again = ssa_run(&m, &cfg).unwrap();
        let (exact, _) =
            stationary_with_retry(&m, n, &TruncationPolicy::for_model(&m, n, &eq, DEFAULT_K)).unwrap();
        let tv = tv_distance(&est.dist, &exact);
        let same = est == again;
        ok &= tv <= 0.05 && same;
        detail.push(format!("{name}: tv {tv:.4}, rerun identical {same}, jumps {}", est.total_jumps));
    }
    let elapsed = t.elapsed();
    ok &= elapsed <= Duration::from_secs(120);
    verdict("8", ok, format!("{}; {elapsed:?}", detail.join("; ")));
    assert!(ok);
}
