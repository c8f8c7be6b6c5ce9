//! Gillespie simulation of `Z_n` and occupation-time estimates of its
//! stationary law.
//!
//! Each replica runs the direct method: from state `i` wait an exponential
//! time with rate `R(i) = Σ_j n λ_j(i/n)`, then jump by `j` with probability
//! `n λ_j(i/n) / R(i)`. Time spent in each state during
//! `[t_burn, t_burn + t_sample)` is accumulated and the replicas are pooled
//! in index order, so the result does not depend on thread scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumInfo;
use crate::lattice::LatticeDist;
use crate::model::ModelSpec;
use crate::{Error, Result};

/// Simulated time per replica, in units of `v_c`.
pub const DEFAULT_SAMPLE_SCALE: f64 = 1e4;
/// Burn-in, in relaxation times `1 / |F'(c)|`.
pub const DEFAULT_BURN_RELAXATIONS: f64 = 5.0;
pub const DEFAULT_REPLICAS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u64,
    pub t_burn: f64,
    pub t_sample: f64,
    pub replicas: usize,
    pub seed: u64,
    pub initial_state: i64,
    /// Density `c` against which `max_excursion` is measured.
    pub reference_density: f64,
}

impl SimConfig {
    /// Defaults: start at `⌊n c⌋`, burn in for five relaxation times, then
    /// sample for `10⁴ v_c` time units in each of four replicas.
    pub fn for_model(n: u64, eq: &EquilibriumInfo, seed: u64) -> Self {
        Self {
            n,
            t_burn: DEFAULT_BURN_RELAXATIONS / eq.f_prime_c.abs(),
            t_sample: DEFAULT_SAMPLE_SCALE * eq.v_c,
            replicas: DEFAULT_REPLICAS,
            seed,
            initial_state: eq.centre_shift(n),
            reference_density: eq.c,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if !(self.t_sample > 0.0 && self.t_sample.is_finite()) {
            return Err(Error::InvalidInput(format!("t_sample {} must be > 0", self.t_sample)));
        }
        if !(self.t_burn >= 0.0 && self.t_burn.is_finite()) {
            return Err(Error::InvalidInput(format!("t_burn {} must be >= 0", self.t_burn)));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidInput("replicas must be >= 1".into()));
        }
        Ok(())
    }
}

/// Completed sojourns in one state that started and ended inside the
/// sampling period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SojournStats {
    pub state: i64,
    pub count: u64,
    pub total_time: f64,
}

impl SojournStats {
    pub fn mean(&self) -> f64 {
        self.total_time / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    /// Time-weighted occupation law pooled over replicas.
    pub dist: LatticeDist,
    /// Jumps made during the sampling periods.
    pub total_jumps: u64,
    /// `max |Z_n(t)/n − c|` over the sampling periods.
    pub max_excursion: f64,
    /// Sampled time over all replicas.
    pub total_time: f64,
    pub sojourns: Vec<SojournStats>,
}

/// Occupation times on a growable integer window.
#[derive(Default)]
struct Occupation {
    offset: i64,
    time: Vec<f64>,
}

impl Occupation {
    fn add(&mut self, state: i64, dt: f64) {
        if self.time.is_empty() {
            self.offset = state;
        }
        if state < self.offset {
            let grow = (self.offset - state) as usize;
            let mut time = vec![0.0; grow];
            time.append(&mut self.time);
            self.time = time;
            self.offset = state;
        }
        let idx = (state - self.offset) as usize;
        if idx >= self.time.len() {
            self.time.resize(idx + 1, 0.0);
        }
        self.time[idx] += dt;
    }
}

struct ReplicaOutcome {
    occupation: Occupation,
    jumps: u64,
    max_excursion: f64,
    sojourns: BTreeMap<i64, (u64, f64)>,
}

fn run_replica(model: &ModelSpec, cfg: &SimConfig, replica: usize) -> Result<ReplicaOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ replica as u64);
    let nf = cfg.n as f64;
    let support = model.support();
    let mut rates = vec![0.0; support.len()];
    let t_end = cfg.t_burn + cfg.t_sample;
    let mut out = ReplicaOutcome {
        occupation: Occupation::default(),
        jumps: 0,
        max_excursion: 0.0,
        sojourns: BTreeMap::new(),
    };
    let mut state = cfg.initial_state;
    let mut t = 0.0;
    loop {
        let z = state as f64 / nf;
        let mut total = 0.0;
        for (r, &j) in rates.iter_mut().zip(support) {
            *r = nf * model.rate(j, z);
            total += *r;
        }
        if !total.is_finite() {
            return Err(Error::RateOverflow { state });
        }
        if total == 0.0 {
            return Err(Error::StuckState { state });
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        let t_next = t + hold;
        let start = t.max(cfg.t_burn);
        let stop = t_next.min(t_end);
        if stop > start {
            out.occupation.add(state, stop - start);
            out.max_excursion = out.max_excursion.max((z - cfg.reference_density).abs());
        }
        if t_next >= t_end {
            break;
        }
        if t >= cfg.t_burn {
            let entry = out.sojourns.entry(state).or_insert((0, 0.0));
            entry.0 += 1;
            entry.1 += hold;
        }
        if t_next >= cfg.t_burn {
            out.jumps += 1;
        }
        let mut u = rng.random::<f64>() * total;
        let mut jump = support[support.len() - 1];
        for (&r, &j) in rates.iter().zip(support) {
            if u < r {
                jump = j;
                break;
            }
            u -= r;
        }
        state += jump;
        t = t_next;
    }
    Ok(out)
}

/// Runs `cfg.replicas` independent trajectories in parallel and pools their
/// occupation measures.
///
/// Replica `k` is seeded with `seed ^ k`; identical inputs give bit-identical
/// output regardless of the thread pool.
pub fn ssa_run(model: &ModelSpec, cfg: &SimConfig) -> Result<OccupationEstimate> {
    cfg.validate()?;
    let outcomes: Vec<ReplicaOutcome> = (0..cfg.replicas)
        .into_par_iter()
        .map(|k| run_replica(model, cfg, k))
        .collect::<Result<_>>()?;

    let lo = outcomes.iter().map(|o| o.occupation.offset).min().unwrap_or(0);
    let hi = outcomes
        .iter()
        .map(|o| o.occupation.offset + o.occupation.time.len() as i64 - 1)
        .max()
        .unwrap_or(0);
    let mut pooled = vec![0.0; (hi - lo + 1) as usize];
    let mut sojourns: BTreeMap<i64, (u64, f64)> = BTreeMap::new();
    let mut total_jumps = 0;
    let mut max_excursion: f64 = 0.0;
    for o in &outcomes {
        for (k, &t) in o.occupation.time.iter().enumerate() {
            pooled[(o.occupation.offset - lo) as usize + k] += t;
        }
        for (&state, &(count, time)) in &o.sojourns {
            let e = sojourns.entry(state).or_insert((0, 0.0));
            e.0 += count;
            e.1 += time;
        }
        total_jumps += o.jumps;
        max_excursion = max_excursion.max(o.max_excursion);
    }
    let total_time: f64 = pooled.iter().sum();
    Ok(OccupationEstimate {
        dist: LatticeDist::from_weights(lo, pooled)?,
        total_jumps,
        max_excursion,
        total_time,
        sojourns: sojourns
            .into_iter()
            .map(|(state, (count, total_time))| SojournStats {
                state,
                count,
                total_time,
            })
            .collect(),
    })
}
