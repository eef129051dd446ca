//! Objective contract and the standard benchmark functions.
//!
//! Every benchmark has a global minimum value of `0` and an analytic gradient.
//! Evaluations are written so that rounding can never push a value below zero.

mod minibatch;

pub use minibatch::{minibatch_loss_and_grad, BatchView, MinibatchObjective};

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A differentiable cost `f: R^N -> [0, inf)`.
///
/// Implementations must be pure: the same input gives the same output.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(x)
    }
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).value_and_gradient(x)
    }
}

/// The benchmark suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    Sphere,
    Griewank,
    Ackley,
    Rastrigin,
    Rosenbrock,
    HighConditionedElliptic,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 6] = [
        BenchmarkId::Sphere,
        BenchmarkId::Griewank,
        BenchmarkId::Ackley,
        BenchmarkId::Rastrigin,
        BenchmarkId::Rosenbrock,
        BenchmarkId::HighConditionedElliptic,
    ];

    /// Lowercase name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Sphere => "sphere",
            BenchmarkId::Griewank => "griewank",
            BenchmarkId::Ackley => "ackley",
            BenchmarkId::Rastrigin => "rastrigin",
            BenchmarkId::Rosenbrock => "rosenbrock",
            BenchmarkId::HighConditionedElliptic => "elliptic",
        }
    }

    pub fn min_dim(self) -> usize {
        match self {
            BenchmarkId::Rosenbrock => 2,
            _ => 1,
        }
    }

    /// The point where the function attains its global minimum `0`.
    pub fn minimizer(self, dim: usize) -> Vec<f64> {
        match self {
            BenchmarkId::Rosenbrock => vec![1.0; dim],
            _ => vec![0.0; dim],
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown objective `{s}` (expected sphere|griewank|ackley|rastrigin|rosenbrock|elliptic)"
                ))
            })
    }
}

/// Evaluate a benchmark at `x`. The length of `x` is the dimension.
pub fn evaluate(id: BenchmarkId, x: &[f64]) -> Result<f64> {
    check_domain(id, x.len())?;
    let n = x.len();
    let value = match id {
        BenchmarkId::Sphere => x.iter().map(|v| v * v).sum(),
        BenchmarkId::Rosenbrock => x
            .windows(2)
            .map(|w| {
                let a = w[1] - w[0] * w[0];
                let b = 1.0 - w[0];
                100.0 * a * a + b * b
            })
            .sum(),
        // 10N + sum(x^2 - 10 cos 2 pi x), regrouped so each term is >= 0
        BenchmarkId::Rastrigin => x
            .iter()
            .map(|v| v * v + 10.0 * (1.0 - (2.0 * PI * v).cos()))
            .sum(),
        BenchmarkId::Ackley => {
            let (r, c) = ackley_terms(x);
            -20.0 * (-0.2 * r).exp_m1() - E * (c - 1.0).exp_m1()
        }
        BenchmarkId::Griewank => {
            let quad: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
            let prod: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                .product();
            (1.0 - prod) + quad
        }
        BenchmarkId::HighConditionedElliptic => x
            .iter()
            .enumerate()
            .map(|(i, v)| elliptic_weight(i, n) * v * v)
            .sum(),
    };
    Ok(value)
}

/// Analytic gradient of a benchmark at `x`.
pub fn gradient(id: BenchmarkId, x: &[f64]) -> Result<Vec<f64>> {
    check_domain(id, x.len())?;
    let n = x.len();
    let grad = match id {
        BenchmarkId::Sphere => x.iter().map(|v| 2.0 * v).collect(),
        BenchmarkId::Rosenbrock => {
            let mut g = vec![0.0; n];
            for i in 0..n - 1 {
                let a = x[i + 1] - x[i] * x[i];
                g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
                g[i + 1] += 200.0 * a;
            }
            g
        }
        BenchmarkId::Rastrigin => x
            .iter()
            .map(|v| 2.0 * v + 20.0 * PI * (2.0 * PI * v).sin())
            .collect(),
        BenchmarkId::Ackley => {
            let nf = n as f64;
            let (r, c) = ackley_terms(x);
            let radial = if r > 0.0 {
                4.0 * (-0.2 * r).exp() / (nf * r)
            } else {
                0.0
            };
            let wave = 2.0 * PI * c.exp() / nf;
            x.iter()
                .map(|v| radial * v + wave * (2.0 * PI * v).sin())
                .collect()
        }
        BenchmarkId::Griewank => {
            let scaled: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, v)| v / ((i + 1) as f64).sqrt())
                .collect();
            // product of cos over all j != i without dividing by cos(x_i)
            let mut prefix = vec![1.0; n + 1];
            for i in 0..n {
                prefix[i + 1] = prefix[i] * scaled[i].cos();
            }
            let mut suffix = vec![1.0; n + 1];
            for i in (0..n).rev() {
                suffix[i] = suffix[i + 1] * scaled[i].cos();
            }
            (0..n)
                .map(|i| {
                    let others = prefix[i] * suffix[i + 1];
                    x[i] / 2000.0 + scaled[i].sin() / ((i + 1) as f64).sqrt() * others
                })
                .collect()
        }
        BenchmarkId::HighConditionedElliptic => x
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * elliptic_weight(i, n) * v)
            .collect(),
    };
    Ok(grad)
}

fn check_domain(id: BenchmarkId, n: usize) -> Result<()> {
    if n < id.min_dim() {
        return Err(Error::Domain(format!(
            "{id} requires dimension >= {}, got {n}",
            id.min_dim()
        )));
    }
    Ok(())
}

// Returns (sqrt(mean x^2), mean cos 2 pi x) with the cosine mean capped at 1.
fn ackley_terms(x: &[f64]) -> (f64, f64) {
    let nf = x.len() as f64;
    let r = (x.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
    let c = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / nf;
    (r, c.min(1.0))
}

fn elliptic_weight(i: usize, n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        1e6f64.powf(i as f64 / (n - 1) as f64)
    }
}

/// A benchmark function bound to a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Benchmark {
    id: BenchmarkId,
    dim: usize,
}

impl Benchmark {
    pub fn new(id: BenchmarkId, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(crate::error::invalid("dim", "dim must be ≥ 1"));
        }
        check_domain(id, dim)?;
        Ok(Self { id, dim })
    }

    pub fn id(&self) -> BenchmarkId {
        self.id
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

impl Objective for Benchmark {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        evaluate(self.id, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        gradient(self.id, x)
    }
}

/// Any closure pair can serve as an objective, mostly useful in tests.
pub struct FnObjective<F, G> {
    dim: usize,
    f: F,
    g: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, f: F, g: G) -> Self {
        Self { dim, f, g }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok((self.f)(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok((self.g)(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_of_ones() {
        assert_eq!(evaluate(BenchmarkId::Sphere, &[1.0; 5]).unwrap(), 5.0);
        assert_eq!(
            gradient(BenchmarkId::Sphere, &[1.0; 5]).unwrap(),
            vec![2.0; 5]
        );
    }

    #[test]
    fn reference_ensemble_first_row() {
        // First row of the golden 5x5 ensemble.
        let row = [1.0000, 0.9774, 1.0538, 1.0130, 1.0964];
        let f = evaluate(BenchmarkId::Sphere, &row).unwrap();
        assert!((f - 5.2940).abs() < 5e-4, "{f}");
    }

    #[test]
    fn minimizers_evaluate_to_zero() {
        for id in BenchmarkId::ALL {
            for n in [2usize, 7, 100] {
                let f = evaluate(id, &id.minimizer(n)).unwrap();
                assert!(f.abs() <= 1e-12, "{id} n={n}: {f}");
            }
        }
    }

    #[test]
    fn stationary_minimum_for_ackley() {
        let g = gradient(BenchmarkId::Ackley, &[0.0; 6]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rosenbrock_needs_two_dims() {
        assert!(matches!(
            evaluate(BenchmarkId::Rosenbrock, &[1.0]),
            Err(Error::Domain(_))
        ));
        assert!(Benchmark::new(BenchmarkId::Rosenbrock, 1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = Benchmark::new(BenchmarkId::Rastrigin, 3).unwrap();
        assert!(matches!(
            b.value(&[0.0; 4]),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 4
            })
        ));
        assert!(b.gradient(&[0.0; 2]).is_err());
    }

    #[test]
    fn zero_dim_rejected() {
        let err = Benchmark::new(BenchmarkId::Sphere, 0).unwrap_err();
        assert!(err.to_string().contains("dim must be ≥ 1"));
    }

    #[test]
    fn parse_names() {
        for id in BenchmarkId::ALL {
            assert_eq!(id.name().parse::<BenchmarkId>().unwrap(), id);
        }
        assert!("Sphere".parse::<BenchmarkId>().is_err());
    }
}
