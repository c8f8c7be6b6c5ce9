//! JSON-configured experiment runner used by the `popequil` binary.
//!
//! A config names one model and one study. Outputs land in `output.dir`;
//! every file is written to a temporary file in that directory and renamed
//! into place.
//!
//! CSV schemas (header row always present, `.` decimal separator):
//!
//! | file | columns |
//! |------|---------|
//! | `stationary_<n>.csv`, `occupation_<n>.csv` | `state,probability` |
//! | `convergence.csv` | see [`ConvergenceReport::CSV_HEADER`] |
//! | `stein_audit.csv` | [`STEIN_AUDIT_HEADER`] |
//!
//! `<metric>.plotdata` files hold two whitespace-separated columns,
//! `ln n` and `ln metric`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    convergence_study, tv_distance, ConvergenceReport, StudyOptions, FITTED_METRICS,
};
use crate::equilibrium::{find_equilibrium, EquilibriumInfo};
use crate::model::{AssumptionReport, ModelConfig, ModelSpec};
use crate::simulate::{ssa_run, SimConfig, DEFAULT_REPLICAS};
use crate::stationary::{stationary_with_retry, TruncationPolicy, DEFAULT_K, MAX_WINDOW};
use crate::stein::{stein_solve, CentredPoisson, IntSet, MIN_WINDOW_SD};
use crate::{Error, Result};

pub const STEIN_AUDIT_HEADER: &str = "v,set,sup_abs_g,sup_abs_dg,sup_abs_lg,max_residual,within_bounds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Study {
    Equilibrium,
    StationaryOnce,
    SteinAudit,
    Simulate,
    Convergence,
    Assumptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Plotdata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by every study except `stein_audit`.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    pub study: Study,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub n_grid: Option<Vec<u64>>,
    /// Root bracket for the drift; defaults to the model's.
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub stein: SteinConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub k: f64,
    /// Largest window, in states, a stationary solve may use.
    pub max_window: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_window: MAX_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    /// Defaults to `10⁴ v_c`.
    pub t_sample: Option<f64>,
    /// Defaults to `5 / |F'(c)|`.
    pub t_burn: Option<f64>,
    pub replicas: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            t_sample: None,
            t_burn: None,
            replicas: DEFAULT_REPLICAS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteinConfig {
    pub v_grid: Vec<f64>,
}

impl Default for SteinConfig {
    fn default() -> Self {
        Self {
            v_grid: vec![0.5, 1.0, 2.5, 4.0, 10.7, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Defaults to `c / 2`.
    pub delta: Option<f64>,
    /// Defaults to `delta`.
    pub delta_prime: Option<f64>,
    /// `η` values for the assumption check; defaults to 1%, 5% and 10% of
    /// the bracket width.
    pub eta_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.study != Study::SteinAudit && self.model.is_none() {
            return bad("model is required for this study");
        }
        match self.study {
            Study::StationaryOnce | Study::Simulate if !matches!(self.n, Some(n) if n > 0) => {
                return bad("n must be a positive integer for this study");
            }
            Study::Convergence => match &self.n_grid {
                None => return bad("n_grid is required for the convergence study"),
                Some(g) if g.is_empty() => return bad("n_grid must be nonempty"),
                _ => {}
            },
            Study::SteinAudit if self.stein.v_grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) => {
                return bad("stein.v_grid entries must be positive");
            }
            _ => {}
        }
        if !(self.truncation.k > 0.0) {
            return bad("truncation.k must be positive");
        }
        if self.simulation.replicas == 0 {
            return bad("simulation.replicas must be >= 1");
        }
        Ok(())
    }

    fn model(&self) -> Result<ModelSpec> {
        let cfg = self.model.as_ref().ok_or_else(|| Error::Config("model is required".into()))?;
        ModelSpec::from_config(cfg)
    }

    fn bracket(&self, model: &ModelSpec) -> (f64, f64) {
        self.bracket.unwrap_or_else(|| model.default_bracket())
    }

    fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySummary {
    pub n: u64,
    pub lo: i64,
    pub hi: i64,
    pub mean: f64,
    pub variance: f64,
    pub boundary_mass: f64,
    pub residual_norm: f64,
    pub tv_to_centred_poisson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n: u64,
    pub seed: u64,
    pub replicas: usize,
    pub t_burn: f64,
    pub t_sample: f64,
    pub total_jumps: u64,
    pub max_excursion: f64,
    pub total_time: f64,
    pub mean: f64,
    pub variance: f64,
    /// Distance to the exact stationary law, when that solve succeeds.
    pub tv_to_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinAuditRow {
    pub v: f64,
    pub set: IntSet,
    pub sup_abs_g: f64,
    pub sup_abs_dg: f64,
    pub sup_abs_lg: f64,
    pub max_residual: f64,
    pub within_bounds: bool,
}

/// Everything a run produces; serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub study: Study,
    pub config: ExperimentConfig,
    pub equilibrium: Option<EquilibriumInfo>,
    pub assumptions: Option<AssumptionReport>,
    pub stationary: Option<StationarySummary>,
    pub simulation: Option<SimulationSummary>,
    pub stein_audit: Option<Vec<SteinAuditRow>>,
    pub convergence: Option<ConvergenceReport>,
}

impl Report {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            study: config.study,
            config: config.clone(),
            equilibrium: None,
            assumptions: None,
            stationary: None,
            simulation: None,
            stein_audit: None,
            convergence: None,
        }
    }

    /// One-line human summary of the study outcome.
    pub fn summary(&self) -> String {
        let eq = self
            .equilibrium
            .map(|e| format!("c={:.6} v_c={:.6}", e.c, e.v_c))
            .unwrap_or_default();
        match self.study {
            Study::Equilibrium => format!("equilibrium: {eq}"),
            Study::Assumptions => {
                let a = self.assumptions.as_ref();
                let flag = |f: fn(&AssumptionReport) -> bool| a.map(f).unwrap_or(false);
                format!(
                    "assumptions: A1={} A2a={} A2b={} A3={}",
                    flag(|r| r.a1_ok),
                    flag(|r| r.a2a_ok),
                    flag(|r| r.a2b_ok),
                    flag(|r| r.a3_ok)
                )
            }
            Study::StationaryOnce => match &self.stationary {
                Some(s) => format!(
                    "stationary_once: n={} window=[{}, {}] boundary_mass={:.3e} tv_to_centred_poisson={:.6e}",
                    s.n, s.lo, s.hi, s.boundary_mass, s.tv_to_centred_poisson
                ),
                None => "stationary_once: no result".into(),
            },
            Study::Simulate => match &self.simulation {
                Some(s) => format!(
                    "simulate: n={} jumps={} max_excursion={:.4} tv_to_exact={}",
                    s.n,
                    s.total_jumps,
                    s.max_excursion,
                    s.tv_to_exact.map_or("n/a".into(), |t| format!("{t:.4e}"))
                ),
                None => "simulate: no result".into(),
            },
            Study::SteinAudit => match &self.stein_audit {
                Some(rows) => format!(
                    "stein_audit: {} solves, {} within bounds, max residual {:.3e}",
                    rows.len(),
                    rows.iter().filter(|r| r.within_bounds).count(),
                    rows.iter().map(|r| r.max_residual).fold(0.0, f64::max)
                ),
                None => "stein_audit: no result".into(),
            },
            Study::Convergence => match &self.convergence {
                Some(r) => {
                    let fits: Vec<String> = FITTED_METRICS
                        .iter()
                        .map(|&m| match r.fit(m) {
                            Some(f) => format!("{m}={:.3}", f.slope),
                            None => format!("{m}=n/a"),
                        })
                        .collect();
                    format!("convergence: {} rows, slopes {}", r.rows.len(), fits.join(" "))
                }
                None => "convergence: no result".into(),
            },
        }
    }
}

/// Runs the configured study and writes its outputs.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut report = Report::new(config);
    match config.study {
        Study::Equilibrium => {
            let model = config.model()?;
            report.equilibrium = Some(find_equilibrium(&model, config.bracket(&model))?);
        }
        Study::Assumptions => {
            let model = config.model()?;
            let window = config.bracket(&model);
            let width = window.1 - window.0;
            let etas = config
                .analysis
                .eta_grid
                .clone()
                .unwrap_or_else(|| vec![0.01 * width, 0.05 * width, 0.1 * width]);
            report.equilibrium = find_equilibrium(&model, window).ok();
            report.assumptions = Some(model.check_assumptions(window, &etas));
        }
        Study::StationaryOnce => {
            let model = config.model()?;
            let n = config.n.unwrap_or_default();
            let eq = find_equilibrium(&model, config.bracket(&model))?;
            let policy = checked_policy(config, &model, n, &eq)?;
            let (dist, diag) = stationary_with_retry(&model, n, &policy)?;
            let target = CentredPoisson::new(n as f64 * eq.v_c)?.to_lattice();
            report.stationary = Some(StationarySummary {
                n,
                lo: dist.lo(),
                hi: dist.hi(),
                mean: dist.mean(),
                variance: dist.variance(),
                boundary_mass: diag.boundary_mass,
                residual_norm: diag.residual_norm,
                tv_to_centred_poisson: tv_distance(&target, &dist.centre(eq.centre_shift(n))),
            });
            report.equilibrium = Some(eq);
            if config.wants(Format::Csv) {
                write_atomic(dir, &format!("stationary_{n}.csv"), |w| dist.write_csv(w))?;
            }
        }
        Study::Simulate => {
            let model = config.model()?;
            let n = config.n.unwrap_or_default();
            let eq = find_equilibrium(&model, config.bracket(&model))?;
            let sim = &config.simulation;
            let defaults = SimConfig::for_model(n, &eq, sim.seed);
            let cfg = SimConfig {
                t_sample: sim.t_sample.unwrap_or(defaults.t_sample),
                t_burn: sim.t_burn.unwrap_or(defaults.t_burn),
                replicas: sim.replicas,
                ..defaults
            };
            let est = ssa_run(&model, &cfg)?;
            let tv_to_exact = checked_policy(config, &model, n, &eq)
                .and_then(|p| stationary_with_retry(&model, n, &p))
                .ok()
                .map(|(exact, _)| tv_distance(&est.dist, &exact));
            report.simulation = Some(SimulationSummary {
                n,
                seed: cfg.seed,
                replicas: cfg.replicas,
                t_burn: cfg.t_burn,
                t_sample: cfg.t_sample,
                total_jumps: est.total_jumps,
                max_excursion: est.max_excursion,
                total_time: est.total_time,
                mean: est.dist.mean(),
                variance: est.dist.variance(),
                tv_to_exact,
            });
            report.equilibrium = Some(eq);
            if config.wants(Format::Csv) {
                write_atomic(dir, &format!("occupation_{n}.csv"), |w| est.dist.write_csv(w))?;
            }
        }
        Study::SteinAudit => {
            let rows = stein_audit(&config.stein.v_grid)?;
            if config.wants(Format::Csv) {
                write_atomic(dir, "stein_audit.csv", |w| write_stein_audit(&rows, w))?;
            }
            report.stein_audit = Some(rows);
        }
        Study::Convergence => {
            let model = config.model()?;
            let grid = config.n_grid.clone().unwrap_or_default();
            let eq = find_equilibrium(&model, config.bracket(&model))?;
            for &n in &grid {
                checked_policy(config, &model, n, &eq)?;
            }
            let opts = StudyOptions {
                k: config.truncation.k,
                delta: config.analysis.delta,
                delta_prime: config.analysis.delta_prime,
                bracket: config.bracket,
            };
            let conv = convergence_study(&model, &grid, &opts)?;
            if config.wants(Format::Csv) {
                write_atomic(dir, "convergence.csv", |w| conv.write_csv(w))?;
            }
            if config.wants(Format::Plotdata) {
                for m in FITTED_METRICS {
                    write_atomic(dir, &format!("{m}.plotdata"), |w| conv.write_plot_data(m, w))?;
                }
            }
            report.equilibrium = Some(conv.equilibrium);
            report.convergence = Some(conv);
        }
    }
    if config.wants(Format::Json) {
        write_atomic(dir, "report.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            writeln!(w)
        })?;
    }
    Ok(report)
}

fn checked_policy(
    config: &ExperimentConfig,
    model: &ModelSpec,
    n: u64,
    eq: &EquilibriumInfo,
) -> Result<TruncationPolicy> {
    let policy = TruncationPolicy::for_model(model, n, eq, config.truncation.k);
    // The solver may double the half-width once.
    let widest = (4 * policy.half_width + 1) as usize;
    if widest > config.truncation.max_window {
        return Err(Error::Config(format!(
            "n={n} may need {widest} states, above truncation.max_window={}",
            config.truncation.max_window
        )));
    }
    Ok(policy)
}

/// Solves the Stein equation on `[−⌊v⌋, ⌈3 √v⌉]` for every singleton and
/// every half-line with its endpoint in that window, for each `v`.
pub fn stein_audit(v_grid: &[f64]) -> Result<Vec<SteinAuditRow>> {
    let mut rows = Vec::new();
    for &v in v_grid {
        let window = (-(v.floor() as i64), (MIN_WINDOW_SD * v.sqrt()).ceil() as i64);
        for set in IntSet::default_family(window.0, window.1) {
            let sol = stein_solve(v, &set, window)?;
            let b = sol.bound_report;
            rows.push(SteinAuditRow {
                v,
                set,
                sup_abs_g: b.sup_abs_g,
                sup_abs_dg: b.sup_abs_dg,
                sup_abs_lg: b.sup_abs_lg,
                max_residual: sol.max_residual,
                within_bounds: b.within_bounds(v, 1e-12),
            });
        }
    }
    Ok(rows)
}

fn write_stein_audit<W: Write>(rows: &[SteinAuditRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{STEIN_AUDIT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{:e},{},{:e},{:e},{:e},{:e},{}",
            r.v, r.set, r.sup_abs_g, r.sup_abs_dg, r.sup_abs_lg, r.max_residual, r.within_bounds
        )?;
    }
    Ok(())
}

/// Writes `dir/name` through a temporary file in `dir` and a rename.
fn write_atomic<F>(dir: &Path, name: &str, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut fs::File>) -> std::io::Result<()>,
{
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "popequil", version, about = "Equilibrium studies of density-dependent population processes")]
pub struct Args {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's study.
    #[arg(long, value_enum)]
    pub study: Option<Study>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Loads the config named by `args`, applies flag overrides and runs it on
/// a pool of `--jobs` threads.
pub fn run_args(args: &Args) -> Result<Report> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.study {
        config.study = s;
    }
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.simulation.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run(&config))
}

/// Machine-readable error object printed by the binary on failure.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({ "error": err.name(), "message": err.to_string() }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bdi_json(study: &str, extra: &str) -> String {
        format!(
            r#"{{"model": {{"family": "bdi_group_births", "a": 1.0, "b": 0.0, "d": 2.0,
                "offspring": [[1, 1.0]]}}, "study": "{study}"{extra}}}"#
        )
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(&bdi_json("equilibrium", "")).unwrap();
        assert_eq!(cfg.study, Study::Equilibrium);
        assert_eq!(cfg.truncation, TruncationConfig::default());
        assert_eq!(cfg.output.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn validation_errors_are_config_errors() {
        for text in [
            bdi_json("convergence", ""),
            bdi_json("convergence", r#", "n_grid": []"#),
            bdi_json("stationary_once", ""),
            bdi_json("simulate", r#", "n": 0"#),
            bdi_json("equilibrium", r#", "bogus": 1"#),
            r#"{"study": "equilibrium"}"#.to_string(),
            "not json".to_string(),
        ] {
            let err = ExperimentConfig::from_json(&text).unwrap_err();
            assert_eq!(err.name(), "ConfigError", "{text}");
        }
        assert!(ExperimentConfig::from_json(r#"{"study": "stein_audit"}"#).is_ok());
    }

    #[test]
    fn max_window_is_enforced() {
        let mut cfg = ExperimentConfig::from_json(&bdi_json("stationary_once", r#", "n": 100"#)).unwrap();
        cfg.truncation.max_window = 50;
        let dir = tempfile::tempdir().unwrap();
        cfg.output.dir = dir.path().to_path_buf();
        assert_eq!(run(&cfg).unwrap_err().name(), "ConfigError");
    }

    #[test]
    fn stein_audit_rows_hold_bounds() {
        let rows = stein_audit(&[1.0, 7.3]).unwrap();
        assert!(rows.iter().all(|r| r.within_bounds && r.max_residual < 1e-10));
        assert_eq!(rows.len(), 3 * 5 + 3 * 17);
    }

    #[test]
    fn error_object_is_json() {
        let v: serde_json::Value =
            serde_json::from_str(&error_json(&Error::StuckState { state: 3 })).unwrap();
        assert_eq!(v["error"], "StuckState");
    }
}
