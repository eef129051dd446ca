//! First-order reference optimizers: Adam and plain gradient descent.

use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::objectives::Objective;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments with the usual defaults (`lr = 1e-3`, `0.9`, `0.999`, `1e-8`).
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }
}

/// One bias-corrected Adam update; returns the new point.
pub fn adam_step(state: &mut AdamState, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if x.len() != state.m.len() || g.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            actual: if x.len() != state.m.len() { x.len() } else { g.len() },
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let mut next = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        next.push(x[i] - state.lr * m_hat / (v_hat.sqrt() + state.eps));
    }
    Ok(next)
}

/// `x - lr * g`.
pub fn gd_step(x: &[f64], g: &[f64], lr: f64) -> Result<Vec<f64>> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(invalid("lr", "learning rate must be > 0"));
    }
    if x.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: g.len(),
        });
    }
    Ok(x.iter().zip(g).map(|(xi, gi)| xi - lr * gi).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstOrder {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    GradientDescent { lr: f64 },
}

impl FirstOrder {
    pub fn adam() -> Self {
        let s = AdamState::new(0);
        FirstOrder::Adam {
            lr: s.lr,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
        }
    }

    pub fn gd(lr: f64) -> Self {
        FirstOrder::GradientDescent { lr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineEpoch {
    pub epoch: usize,
    /// Lowest loss seen so far.
    pub best_loss: f64,
    pub forward_evals: u64,
    pub grad_evals: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStatus {
    Converged,
    BudgetExhausted,
    /// Loss became non-finite; the run stopped at that epoch.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    /// Best point seen.
    pub x_best: Vec<f64>,
    pub best_loss: f64,
    pub status: BaselineStatus,
    pub trace: Vec<BaselineEpoch>,
}

/// Full-batch first-order run: one gradient step per epoch, tracking the
/// best point seen. Stops on `best_loss <= eps_tol`, after `max_epochs`, or
/// when the iterate's loss stops being finite.
pub fn run_first_order<O: Objective + ?Sized>(
    x0: &[f64],
    objective: &O,
    method: FirstOrder,
    eps_tol: f64,
    max_epochs: usize,
) -> Result<BaselineOutcome> {
    if x0.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            actual: x0.len(),
        });
    }
    let started = Instant::now();
    let mut adam = match method {
        FirstOrder::Adam { lr, beta1, beta2, eps } => Some(AdamState {
            lr,
            beta1,
            beta2,
            eps,
            ..AdamState::new(x0.len())
        }),
        FirstOrder::GradientDescent { lr } => {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(invalid("lr", "learning rate must be > 0"));
            }
            None
        }
    };
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective.value_and_gradient(&x)?;
    let mut forward = 1u64;
    let mut grads = 1u64;
    if !f.is_finite() {
        return Err(Error::NonFiniteLoss {
            value: f,
            context: "initial point".into(),
        });
    }
    let mut best_loss = f;
    let mut x_best = x.clone();
    let mut trace = Vec::new();
    let mut status = BaselineStatus::BudgetExhausted;
    let mut epoch = 0;
    while best_loss > eps_tol && epoch < max_epochs {
        x = match (&mut adam, method) {
            (Some(state), _) => adam_step(state, &x, &g)?,
            (None, FirstOrder::GradientDescent { lr }) => gd_step(&x, &g, lr)?,
            (None, FirstOrder::Adam { .. }) => unreachable!(),
        };
        (f, g) = objective.value_and_gradient(&x)?;
        forward += 1;
        grads += 1;
        epoch += 1;
        let diverged = !f.is_finite();
        if !diverged && f < best_loss {
            best_loss = f;
            x_best.clone_from(&x);
        }
        trace.push(BaselineEpoch {
            epoch,
            best_loss,
            forward_evals: forward,
            grad_evals: grads,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if diverged {
            status = BaselineStatus::Diverged;
            break;
        }
    }
    if best_loss <= eps_tol {
        status = BaselineStatus::Converged;
    }
    Ok(BaselineOutcome {
        x_best,
        best_loss,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Benchmark, BenchmarkId};

    #[test]
    fn first_adam_step_magnitude() {
        let mut s = AdamState::new(1);
        let x = adam_step(&mut s, &[0.0], &[1.0]).unwrap();
        // m_hat = 1, v_hat = 1, step = lr / (1 + eps)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((x[0] - expected).abs() < 1e-18);
        assert!((x[0] + 9.99999e-4).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_keeps_point() {
        let mut s = AdamState::new(3);
        let x = adam_step(&mut s, &[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = AdamState::new(2);
        let mut b = AdamState::new(2);
        let xa = adam_step(&mut a, &[0.3, -0.1], &[1.5, -2.0]).unwrap();
        let xb = adam_step(&mut b, &[0.3, -0.1], &[1.5, -2.0]).unwrap();
        assert_eq!(xa, xb);
        assert_eq!(a, b);
    }

    #[test]
    fn gd_arithmetic() {
        assert_eq!(gd_step(&[1.0; 4], &[2.0; 4], 0.5).unwrap(), vec![0.0; 4]);
        assert_eq!(gd_step(&[1.0], &[0.0], 0.3).unwrap(), vec![1.0]);
        let x = gd_step(&[1.0], &[2.0], 0.1).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15);
        assert!(gd_step(&[1.0], &[2.0], 0.0).is_err());
    }

    #[test]
    fn adam_decreases_sphere() {
        let obj = Benchmark::new(BenchmarkId::Sphere, 10).unwrap();
        let mut s = AdamState::new(10);
        let mut x = vec![1.0; 10];
        let mut prev = obj.value(&x).unwrap();
        for _ in 0..100 {
            let g = obj.gradient(&x).unwrap();
            x = adam_step(&mut s, &x, &g).unwrap();
            let f = obj.value(&x).unwrap();
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn gd_diverges_on_steep_quadratic() {
        let obj = Benchmark::new(BenchmarkId::HighConditionedElliptic, 3).unwrap();
        let out = run_first_order(&[1.0; 3], &obj, FirstOrder::gd(1.0), 1e-12, 5000).unwrap();
        assert_eq!(out.status, BaselineStatus::Diverged);
        assert!(out.best_loss.is_finite());
    }
}
