//! Particle ensembles and the covariance-based gain estimates built from them.
//!
//! Ensembles and gradient matrices are `N x p` matrices whose columns are
//! particles. The diagonal gain is the production path; the full gain matrix
//! is only meant for small `N` where it serves as a reference.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Largest dimension accepted by [`full_gain`].
pub const FULL_GAIN_MAX_DIM: usize = 50;

/// Default measurement-noise regulariser for [`full_gain`].
pub const DEFAULT_Q_EPS: f64 = 1e-10;

/// Diagonal of the sampling spread `R`. Every entry is finite and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionDiag(Vec<f64>);

impl DiffusionDiag {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(
                "diffusion",
                format!("entries must be finite and positive, found {bad}"),
            ));
        }
        Ok(Self(entries))
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Clamped diagonal gain `B` and its tempered form `B^gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGain {
    raw: Vec<f64>,
    scaled: Vec<f64>,
    gamma: f64,
}

impl DiagonalGain {
    /// `B` after the negative-entry clamp.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// `B^gamma`, with `0^gamma = 0`.
    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// (min, mean, max) of the scaled gain.
    pub fn stats(&self) -> (f64, f64, f64) {
        let min = self.scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = self.scaled.iter().sum::<f64>() / self.scaled.len() as f64;
        (min, mean, max)
    }
}

/// Ensemble and gradients with columns ordered by ascending cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedEnsemble {
    pub particles: DMatrix<f64>,
    pub gradients: DMatrix<f64>,
    pub costs: Vec<f64>,
    /// `permutation[k]` is the original column now at position `k`.
    pub permutation: Vec<usize>,
}

/// Samples `p` particles around `anchor`: column 0 is the anchor itself and
/// every other column is `anchor + R z` with `z` uniform on `[-1, 1]^N`.
pub fn generate_ensemble<R: Rng + ?Sized>(
    anchor: &[f64],
    spread: &DiffusionDiag,
    p: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(invalid("p", "ensemble size must be ≥ 1"));
    }
    if spread.len() != anchor.len() {
        return Err(Error::DimensionMismatch {
            expected: anchor.len(),
            actual: spread.len(),
        });
    }
    let n = anchor.len();
    let mut x = DMatrix::zeros(n, p);
    x.column_mut(0).copy_from_slice(anchor);
    for j in 1..p {
        let mut col = x.column_mut(j);
        for i in 0..n {
            let z: f64 = rng.gen_range(-1.0..=1.0);
            col[i] = anchor[i] + spread.0[i] * z;
        }
    }
    Ok(x)
}

/// Reorders ensemble and gradient columns by ascending cost. Ties keep the
/// original column order.
pub fn sort_by_cost(particles: &DMatrix<f64>, gradients: &DMatrix<f64>, costs: &[f64]) -> Result<SortedEnsemble> {
    let p = particles.ncols();
    if gradients.shape() != particles.shape() {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: gradients.ncols(),
        });
    }
    if costs.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: costs.len(),
        });
    }
    let permutation = argsort(costs);
    Ok(SortedEnsemble {
        particles: particles.select_columns(&permutation),
        gradients: gradients.select_columns(&permutation),
        costs: permutation.iter().map(|&k| costs[k]).collect(),
        permutation,
    })
}

/// Stable ascending argsort.
pub fn argsort(costs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    order
}

/// Per-coordinate ratio of particle/gradient covariance to gradient variance.
///
/// Entries with a vanishing (or non-finite) ratio become 0, negative entries
/// are clamped to 0, and the tempered gain is `B^gamma`.
pub fn diagonal_gain(particles: &DMatrix<f64>, gradients: &DMatrix<f64>, gamma: f64) -> Result<DiagonalGain> {
    let (n, p) = particles.shape();
    if p < 2 {
        return Err(invalid("p", "gain estimate needs at least two particles"));
    }
    if gradients.shape() != (n, p) {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            actual: gradients.len(),
        });
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid("gamma", "must lie in [0, 1]"));
    }
    let pf = p as f64;
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let xr = particles.row(i);
        let gr = gradients.row(i);
        let x_mean = xr.sum() / pf;
        let g_mean = gr.sum() / pf;
        let mut cross = 0.0;
        let mut var = 0.0;
        for j in 0..p {
            let dx = xr[j] - x_mean;
            let dg = gr[j] - g_mean;
            cross += dx * dg;
            var += dg * dg;
        }
        let b = cross / var;
        raw.push(if b.is_finite() && b > 0.0 { b } else { 0.0 });
    }
    let scaled = raw
        .iter()
        .map(|&b| if b == 0.0 { 0.0 } else { b.powf(gamma) })
        .collect();
    Ok(DiagonalGain { raw, scaled, gamma })
}

/// Full gain `-Cov(X, G) (Cov(G, G) + q_eps I)^-1` with 1/p sample covariances.
///
/// Only defined for `N <= FULL_GAIN_MAX_DIM`. The covariance has rank at most
/// `p - 1`, so it mirrors the inverse Hessian on the whole space only when
/// `p > N`.
pub fn full_gain(particles: &DMatrix<f64>, gradients: &DMatrix<f64>, q_eps: f64) -> Result<DMatrix<f64>> {
    let (n, p) = particles.shape();
    if n > FULL_GAIN_MAX_DIM {
        return Err(invalid(
            "dim",
            format!("full gain limited to N ≤ {FULL_GAIN_MAX_DIM}, got {n}"),
        ));
    }
    if p < 2 {
        return Err(invalid("p", "gain estimate needs at least two particles"));
    }
    if gradients.shape() != (n, p) {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            actual: gradients.len(),
        });
    }
    if !(q_eps.is_finite() && q_eps > 0.0) {
        return Err(invalid("q_eps", "must be finite and positive"));
    }
    let pf = p as f64;
    let x_anom = centre_columns(particles);
    let g_anom = centre_columns(gradients);
    let cross = &x_anom * g_anom.transpose() / pf;
    let mut system = &g_anom * g_anom.transpose() / pf;
    for i in 0..n {
        system[(i, i)] += q_eps;
    }
    // system is symmetric, so G~ = -(system^-1 cross^T)^T
    let rhs = cross.transpose();
    let solved = match system.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularGain("gradient covariance not invertible".into()))?,
    };
    let gain = -solved.transpose();
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularGain("gain has non-finite entries".into()));
    }
    Ok(gain)
}

fn centre_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.column_mean();
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere_grad(x: &DMatrix<f64>) -> DMatrix<f64> {
        x * 2.0
    }

    #[test]
    fn single_particle_is_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = DiffusionDiag::constant(3, 0.1).unwrap();
        let x = generate_ensemble(&[1.0, 2.0, 3.0], &r, 1, &mut rng).unwrap();
        assert_eq!(x.shape(), (3, 1));
        assert_eq!(x.column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn tiny_spread_collapses_to_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = DiffusionDiag::constant(4, 1e-12).unwrap();
        let x = generate_ensemble(&[0.5; 4], &r, 6, &mut rng).unwrap();
        assert!(x.iter().all(|v| (v - 0.5).abs() <= 1e-12));
    }

    #[test]
    fn samples_stay_within_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = DiffusionDiag::constant(5, 0.1).unwrap();
        let x = generate_ensemble(&[1.0; 5], &r, 5, &mut rng).unwrap();
        assert!(x.iter().all(|v| (0.9..=1.1).contains(v)));
        assert!(x.columns(1, 4).iter().any(|v| *v != 1.0));
    }

    #[test]
    fn zero_spread_and_empty_ensembles_rejected() {
        assert!(DiffusionDiag::new(vec![0.1, 0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = DiffusionDiag::constant(2, 0.1).unwrap();
        assert!(generate_ensemble(&[0.0; 2], &r, 0, &mut rng).is_err());
    }

    #[test]
    fn known_costs_sort_order() {
        let f = [5.2940, 5.0716, 4.8174, 4.6710, 5.1885];
        assert_eq!(argsort(&f), vec![3, 2, 1, 4, 0]);
        assert_eq!(argsort(&[1.0, 2.0, 3.0]), vec![0, 1, 2]);
        assert_eq!(argsort(&[7.0; 4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn sort_moves_columns_together() {
        let x = DMatrix::from_row_slice(1, 3, &[10.0, 20.0, 30.0]);
        let g = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let s = sort_by_cost(&x, &g, &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.particles.as_slice(), &[20.0, 30.0, 10.0]);
        assert_eq!(s.gradients.as_slice(), &[2.0, 3.0, 1.0]);
        assert_eq!(s.costs, vec![1.0, 2.0, 3.0]);
        assert!(sort_by_cost(&x, &g, &[1.0]).is_err());
    }

    #[test]
    fn sphere_gain_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = DiffusionDiag::constant(5, 0.1).unwrap();
        let x = generate_ensemble(&[1.0; 5], &r, 5, &mut rng).unwrap();
        let gain = diagonal_gain(&x, &sphere_grad(&x), 1.0).unwrap();
        for b in gain.scaled() {
            assert!((b - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_gradient_gives_zero_gain() {
        let x = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]);
        let g = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 2.0, 4.0]);
        let gain = diagonal_gain(&x, &g, 1.0).unwrap();
        assert_eq!(gain.raw()[0], 0.0);
        assert!((gain.raw()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negative_gain_is_clamped() {
        // gradient decreasing in x: concave direction
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        let g = DMatrix::from_row_slice(1, 3, &[0.0, -1.0, -2.0]);
        let gain = diagonal_gain(&x, &g, 1.0).unwrap();
        assert_eq!(gain.raw(), &[0.0]);
        assert_eq!(gain.scaled(), &[0.0]);
    }

    #[test]
    fn gamma_zero_maps_positive_gain_to_one() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let gain = diagonal_gain(&x, &g, 0.0).unwrap();
        assert_eq!(gain.scaled(), &[1.0]);
    }

    #[test]
    fn gain_requires_two_particles() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(diagonal_gain(&x, &x, 1.0).is_err());
        assert!(full_gain(&x, &x, 1e-10).is_err());
    }

    #[test]
    fn full_gain_scalar_case() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let gain = full_gain(&x, &g, 1e-12).unwrap();
        assert!((gain[(0, 0)] + 0.5).abs() < 1e-11);
    }

    #[test]
    fn full_gain_sphere_is_minus_half_identity() {
        // p > N so the sample covariance has full rank
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = DiffusionDiag::constant(5, 0.5).unwrap();
        let x = generate_ensemble(&[1.0; 5], &r, 12, &mut rng).unwrap();
        let gain = full_gain(&x, &sphere_grad(&x), 1e-10).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { -0.5 } else { 0.0 };
                assert!((gain[(i, j)] - expected).abs() < 1e-6, "{i},{j}: {}", gain[(i, j)]);
            }
        }
    }

    #[test]
    fn full_gain_rejects_large_dims() {
        let x = DMatrix::zeros(FULL_GAIN_MAX_DIM + 1, 3);
        assert!(full_gain(&x, &x, 1e-10).is_err());
    }
}
