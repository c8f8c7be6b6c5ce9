//! Equilibrium distributions of density-dependent Markov population
//! processes on the integers, and their translated Poisson approximation.
//!
//! A process `Z_n` jumps `i -> i + j` at rate `n * λ_j(i / n)`. For large `n`
//! its equilibrium law `Π_n`, centred at `⌊n c⌋`, is close in total variation
//! to a Poisson law with mean `n v_c` shifted left by `⌊n v_c⌋`, where `c` is
//! the stable root of the drift `F(z) = Σ j λ_j(z)` and
//! `v_c = σ²(c) / (-2 F'(c))`.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: rate families, drift, variance function, generator and its
//!   second-order decomposition, numeric assumption checks.
//! * [`equilibrium`]: the deterministic equilibrium `c` and `v_c`.
//! * [`stein`]: the centred Poisson law and the solution of its Stein equation.
//! * [`lattice`]: finitely supported distributions on `ℤ`.
//! * [`stationary`]: exact stationary law on a truncated window.
//! * [`simulate`]: Gillespie simulation and occupation-time estimates.
//! * [`analysis`]: distances, concentration statistics, convergence studies.
//! * [`cli`]: JSON-configured experiment runner behind the `popequil` binary.
//!
//! ```
//! use popequil::model::ModelSpec;
//! use popequil::equilibrium::find_equilibrium;
//!
//! let model = ModelSpec::bdi(1.0, 0.5, 2.0, &[(1, 0.5), (2, 0.5)]).unwrap();
//! let eq = find_equilibrium(&model, model.default_bracket()).unwrap();
//! assert!((eq.c - 0.8).abs() < 1e-12);
//! assert!((eq.v_c - 1.44).abs() < 1e-10);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod equilibrium;
mod error;
pub mod lattice;
pub mod model;
pub mod simulate;
pub mod stationary;
pub mod stein;

pub use error::{Error, Result};
pub use lattice::{LatticeDist, LatticeFn};
