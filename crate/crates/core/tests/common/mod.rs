#![allow(dead_code)]

use std::f64::consts::{E, PI};

use finder::objectives::BenchmarkId;

/// Textbook benchmark formulas, written independently of the library.
pub fn reference_value(id: BenchmarkId, x: &[f64]) -> f64 {
    let n = x.len() as f64;
    match id {
        BenchmarkId::Sphere => x.iter().map(|v| v * v).sum(),
        BenchmarkId::Rastrigin => 10.0 * n + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>(),
        BenchmarkId::Ackley => {
            let r = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let c = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
            -20.0 * (-0.2 * r).exp() - c.exp() + 20.0 + E
        }
        BenchmarkId::Griewank => {
            let s: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
            let p: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                .product();
            1.0 + s - p
        }
        BenchmarkId::Rosenbrock => x
            .windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum(),
        BenchmarkId::HighConditionedElliptic => {
            let denom = (x.len().max(2) - 1) as f64;
            x.iter()
                .enumerate()
                .map(|(i, v)| 1e6f64.powf(i as f64 / denom) * v * v)
                .sum()
        }
    }
}

/// Central differences with a step scaled to each coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1)` measured in the Euclidean norm.
pub fn vector_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1.0)
}

/// Largest componentwise `|a - b| / max(|a|, |b|, 1)`.
pub fn max_component_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
