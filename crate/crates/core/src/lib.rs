//! Ensemble-filtering quasi-Newton optimization.
//!
//! The optimizer samples a small ensemble around its current best point,
//! turns particle/gradient covariances into a diagonal surrogate of the
//! inverse Hessian and takes Newton-like steps with backtracking. The crate
//! also ships benchmark objectives with analytic gradients, Adam and gradient
//! descent baselines, a small hand-differentiated classifier for mini-batch
//! experiments, and the `finder-opt` experiment runner.
//!
//! ```
//! use finder::finder::{run, HyperParams, ZetaSchedule};
//! use finder::objectives::{Benchmark, BenchmarkId};
//!
//! let sphere = Benchmark::new(BenchmarkId::Sphere, 50).unwrap();
//! let out = run(&[1.0; 50], &sphere, &HyperParams::default(), &ZetaSchedule::constant()).unwrap();
//! assert!(out.best_loss <= 1e-12);
//! ```

pub mod baselines;
pub mod ensemble;
pub mod error;
pub mod finder;
pub mod harness;
pub mod objectives;
pub mod tinynet;
pub mod training;

pub use error::{Error, Result};
