//! Single-epoch check on the five-dimensional sphere started from all ones.
//!
//! With `gamma = 1` the diagonal gain equals the exact inverse-Hessian
//! diagonal `0.5`, the first backtracking trial is accepted, the updated
//! ensemble collapses onto the origin and the origin becomes the anchor.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{diagonal_gain, generate_ensemble, sort_by_cost, DiffusionDiag};
use crate::error::Result;
use crate::finder::{
    armijo_search, compute_increment, retain_best_and_select, update_ensemble, ArmijoRule,
    HyperParams, INITIAL_SPREAD,
};
use crate::objectives::{Benchmark, BenchmarkId, Objective};

/// Reference 5x5 ensemble (rows are coordinates, columns particles) sampled
/// around the all-ones anchor with spread 0.1, rounded to four decimals.
#[rustfmt::skip]
pub const REFERENCE_ENSEMBLE: [[f64; 5]; 5] = [
    [1.0000, 0.9774, 1.0538, 1.0130, 1.0964],
    [1.0000, 1.0525, 0.9924, 1.0226, 0.9661],
    [1.0000, 0.9111, 1.0330, 1.0314, 0.9254],
    [1.0000, 0.9699, 1.0046, 0.9095, 0.9455],
    [1.0000, 0.9996, 0.9198, 1.0840, 1.0809],
];

pub const GAIN_TOL: f64 = 1e-9;
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenConfig {
    pub p: usize,
    pub gamma: f64,
    /// Sample the ensemble from this seed instead of using the reference matrix.
    pub seed: Option<u64>,
}

impl Default for GoldenConfig {
    fn default() -> Self {
        Self {
            p: 5,
            gamma: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GoldenReport {
    pub ensemble: DMatrix<f64>,
    pub permutation: Vec<usize>,
    pub gain: Vec<f64>,
    pub alpha: f64,
    pub updated: DMatrix<f64>,
    pub final_anchor: Vec<f64>,
    pub final_loss: f64,
    /// Human-readable description of every failed check.
    pub failures: Vec<String>,
}

impl GoldenReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let gain = if self.gain.iter().all(|b| (b - 0.5).abs() <= GAIN_TOL) {
            format!("[0.5 ×{}]", self.gain.len())
        } else {
            format!("{:?}", self.gain)
        };
        let final_part = if self.final_anchor.iter().all(|v| v.abs() <= ZERO_TOL) {
            "0".to_string()
        } else {
            format!("{:?}", self.final_anchor)
        };
        format!("B={gain} alpha={:?} final={final_part}", self.alpha)
    }
}

pub fn run_golden(config: &GoldenConfig) -> Result<GoldenReport> {
    const N: usize = 5;
    let objective = Benchmark::new(BenchmarkId::Sphere, N)?;
    let hp = HyperParams {
        p: config.p,
        gamma: config.gamma,
        ..HyperParams::default()
    };
    hp.validate()?;

    let ensemble = match (config.seed, config.p) {
        (None, 5) => DMatrix::from_fn(N, N, |i, j| REFERENCE_ENSEMBLE[i][j]),
        (seed, p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let spread = DiffusionDiag::constant(N, INITIAL_SPREAD)?;
            generate_ensemble(&[1.0; N], &spread, p, &mut rng)?
        }
    };

    let p = ensemble.ncols();
    let mut gradients = DMatrix::zeros(N, p);
    let mut costs = Vec::with_capacity(p);
    for j in 0..p {
        let (f, g) = objective.value_and_gradient(ensemble.column(j).as_slice())?;
        gradients.column_mut(j).copy_from_slice(&g);
        costs.push(f);
    }
    let sorted = sort_by_cost(&ensemble, &gradients, &costs)?;
    let gain = diagonal_gain(&sorted.particles, &sorted.gradients, hp.gamma)?;
    let increment = compute_increment(&DMatrix::zeros(N, p), &gain, &sorted.gradients, hp.theta)?;
    let search = armijo_search(
        sorted.particles.column(0).as_slice(),
        sorted.gradients.column(0).as_slice(),
        increment.column(0).as_slice(),
        sorted.costs[0],
        &objective,
        &ArmijoRule::from(&hp),
    )?;
    let updated = update_ensemble(&sorted.particles, &increment, search.alpha)?;
    let selection = retain_best_and_select(
        &updated,
        sorted.particles.column(0).as_slice(),
        Some(sorted.costs[0]),
        &objective,
    )?;

    let mut failures = Vec::new();
    if let Some((i, b)) = gain
        .scaled()
        .iter()
        .enumerate()
        .find(|(_, b)| (*b - 0.5).abs() > GAIN_TOL)
    {
        failures.push(format!("gain B[{i}] = {b}, expected 0.5 ± {GAIN_TOL:e}"));
    }
    if search.alpha != 1.0 {
        failures.push(format!("alpha = {}, expected 1.0", search.alpha));
    }
    let max_updated = updated.amax();
    if max_updated > ZERO_TOL {
        failures.push(format!(
            "updated ensemble max |entry| = {max_updated:e}, expected ≤ {ZERO_TOL:e}"
        ));
    }
    let max_anchor = selection.anchor.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_anchor > ZERO_TOL {
        failures.push(format!(
            "final anchor max |entry| = {max_anchor:e}, expected 0"
        ));
    }

    Ok(GoldenReport {
        ensemble,
        permutation: sorted.permutation,
        gain: gain.scaled().to_vec(),
        alpha: search.alpha,
        updated,
        final_anchor: selection.anchor,
        final_loss: selection.best_loss,
        failures,
    })
}
