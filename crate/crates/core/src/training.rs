//! Mini-batch training of the small classifier with FINDER or a baseline.
//!
//! A training epoch is one pass over the data: `len / batch_size` optimizer
//! steps, step `k` seeing batch token `k`.

use std::time::Instant;

use crate::baselines::{adam_step, gd_step, AdamState, FirstOrder};
use crate::error::{Error, Result};
use crate::finder::{HyperParams, OptimizerState};
use crate::objectives::{MinibatchObjective, Objective};
use crate::tinynet::accuracy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainEpoch {
    pub epoch: usize,
    /// Full-dataset loss at the end of the epoch.
    pub loss: f64,
    pub accuracy: f64,
    /// Step multiplier of the last FINDER step, 0 for baselines.
    pub alpha: f64,
    pub forward_evals: u64,
    pub grad_evals: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub trace: Vec<TrainEpoch>,
    pub reached_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trainer {
    Finder(HyperParams),
    FirstOrder(FirstOrder),
}

/// Trains for at most `epochs` passes, stopping early once training accuracy
/// reaches `target_accuracy`. Full-dataset evaluations for monitoring are not
/// counted as optimizer work.
pub fn train_classifier(
    objective: &MinibatchObjective,
    theta0: &[f64],
    trainer: &Trainer,
    epochs: usize,
    target_accuracy: f64,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let per_epoch = objective.batches_per_epoch() as u64;
    let mut trace = Vec::with_capacity(epochs);
    let mut reached_target = false;

    let mut finder_state = match trainer {
        Trainer::Finder(hp) => Some(OptimizerState::new(theta0, &objective.batch(0), hp)?),
        Trainer::FirstOrder(_) => None,
    };
    let mut adam = match trainer {
        Trainer::FirstOrder(FirstOrder::Adam { lr, beta1, beta2, eps }) => Some(AdamState {
            lr: *lr,
            beta1: *beta1,
            beta2: *beta2,
            eps: *eps,
            ..AdamState::new(theta0.len())
        }),
        _ => None,
    };
    let mut params = theta0.to_vec();
    let (mut forward, mut grads) = (0u64, 0u64);

    for epoch in 1..=epochs {
        let mut alpha = 0.0;
        for b in 0..per_epoch {
            let token = (epoch as u64 - 1) * per_epoch + b;
            let batch = objective.batch(token);
            match (trainer, finder_state.as_mut()) {
                (Trainer::Finder(hp), Some(state)) => {
                    let report = state.step(&batch, hp)?;
                    alpha = report.alpha;
                }
                (Trainer::FirstOrder(method), None) => {
                    let (f, g) = batch.value_and_gradient(&params)?;
                    forward += 1;
                    grads += 1;
                    if !f.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            value: f,
                            context: format!("batch {token}"),
                        });
                    }
                    params = match (method, adam.as_mut()) {
                        (FirstOrder::Adam { .. }, Some(state)) => adam_step(state, &params, &g)?,
                        (FirstOrder::GradientDescent { lr }, _) => gd_step(&params, &g, *lr)?,
                        _ => unreachable!(),
                    };
                }
                _ => unreachable!(),
            }
        }
        if let Some(state) = &finder_state {
            params.clone_from(&state.anchor);
            forward = state.counters.forward();
            grads = state.counters.gradient;
        }
        let loss = objective.full_loss(&params)?;
        let acc = accuracy(objective.model(), &params, objective.data())?;
        trace.push(TrainEpoch {
            epoch,
            loss,
            accuracy: acc,
            alpha,
            forward_evals: forward,
            grad_evals: grads,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if acc >= target_accuracy {
            reached_target = true;
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        trace,
        reached_target,
    })
}
