//! Compiles every chapter of the book under `book/src` as doc-tests, so the
//! snippets there stay in sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/equilibrium.md")]
pub mod equilibrium {}
#[doc = include_str!("../../../book/src/stein.md")]
pub mod stein {}
#[doc = include_str!("../../../book/src/stationary.md")]
pub mod stationary {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/convergence.md")]
pub mod convergence {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
