//! Experiment runner behind the `finder-opt` command line.

mod config;
mod golden;
mod trace;

pub use config::{load_config, NetConfig, ObjectiveKind, OptimizerKind, RunConfig, KNOWN_KEYS, SEED_ENV};
pub use golden::{run_golden, GoldenConfig, GoldenReport, GAIN_TOL, REFERENCE_ENSEMBLE, ZERO_TOL};
pub use trace::{write_merged, write_trace, write_trace_file, TraceRow, TRACE_HEADER};

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{run_first_order, BaselineStatus, FirstOrder};
use crate::error::{Error, Result};
use crate::finder::{run, RunStatus};
use crate::objectives::{Benchmark, BenchmarkId, MinibatchObjective};
use crate::tinynet::{Activation, Dataset, MlpSpec};
use crate::training::{train_classifier, Trainer};

/// Exit status of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    BudgetExhausted,
    Diverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::Diverged => 1,
            Outcome::BudgetExhausted => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub optimizer: OptimizerKind,
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub rows: Vec<TraceRow>,
    pub final_loss: f64,
    pub outcome: Outcome,
    /// How the starting point was produced.
    pub start: String,
}

impl RunSummary {
    pub fn epochs(&self) -> usize {
        self.rows.last().map_or(0, |r| r.epoch)
    }

    pub fn forward_evals(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.forward_evals)
    }

    pub fn grad_evals(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.grad_evals)
    }

    pub fn wall_ms(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.wall_ms)
    }
}

/// Starting point for a benchmark run: all ones for the sphere, otherwise a
/// uniform draw from `[-2, 2]^N` on stream 1 of a ChaCha8 generator keyed by
/// `seed`.
pub fn initial_point(id: BenchmarkId, dim: usize, seed: u64) -> (Vec<f64>, String) {
    if id == BenchmarkId::Sphere {
        return (vec![1.0; dim], "ones".to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let x0 = (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    (x0, format!("uniform[-2,2] seed={seed}"))
}

/// Executes one configured run and returns its trace.
pub fn execute(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let mut summary = match config.objective {
        ObjectiveKind::Benchmark(id) => execute_benchmark(config, id)?,
        ObjectiveKind::Tinynet => execute_tinynet(config)?,
    };
    if !config.wall_time {
        for row in &mut summary.rows {
            row.wall_ms = 0;
        }
    }
    Ok(summary)
}

fn first_order(config: &RunConfig) -> FirstOrder {
    match config.optimizer {
        OptimizerKind::Adam => FirstOrder::Adam {
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
        },
        _ => FirstOrder::GradientDescent { lr: config.lr },
    }
}

fn execute_benchmark(config: &RunConfig, id: BenchmarkId) -> Result<RunSummary> {
    let objective = Benchmark::new(id, config.dim)?;
    let (x0, start) = initial_point(id, config.dim, config.seed);
    let (rows, final_loss, outcome) = match config.optimizer {
        OptimizerKind::Finder => {
            let out = run(&x0, &objective, &config.finder_params(), &config.schedule)?;
            let rows = out
                .trace
                .iter()
                .map(|r| TraceRow {
                    epoch: r.epoch,
                    best_loss: r.best_loss,
                    alpha: r.alpha,
                    forward_evals: r.counters.forward(),
                    grad_evals: r.counters.gradient,
                    wall_ms: r.wall_ms,
                })
                .collect();
            let outcome = match out.status {
                RunStatus::Converged => Outcome::Converged,
                RunStatus::BudgetExhausted => Outcome::BudgetExhausted,
            };
            (rows, out.best_loss, outcome)
        }
        OptimizerKind::Adam | OptimizerKind::Gd => {
            let out = run_first_order(&x0, &objective, first_order(config), config.eps_tol, config.epochs)?;
            let rows = out
                .trace
                .iter()
                .map(|r| TraceRow {
                    epoch: r.epoch,
                    best_loss: r.best_loss,
                    alpha: 0.0,
                    forward_evals: r.forward_evals,
                    grad_evals: r.grad_evals,
                    wall_ms: r.wall_ms,
                })
                .collect();
            let outcome = match out.status {
                BaselineStatus::Converged => Outcome::Converged,
                BaselineStatus::BudgetExhausted => Outcome::BudgetExhausted,
                BaselineStatus::Diverged => Outcome::Diverged,
            };
            (rows, out.best_loss, outcome)
        }
    };
    Ok(RunSummary {
        optimizer: config.optimizer,
        objective: config.objective,
        dim: config.dim,
        rows,
        final_loss,
        outcome,
        start,
    })
}

/// Builds the mini-batch objective and starting parameters of a `tinynet` run.
pub fn tinynet_problem(config: &RunConfig) -> Result<(MinibatchObjective, Vec<f64>)> {
    let data = Dataset::gaussian_blobs(config.net.samples, 2, 2, config.net.radius, config.seed)?;
    let mut sizes = vec![2];
    sizes.extend(&config.net.hidden);
    sizes.push(2);
    let spec = MlpSpec::new(sizes, Activation::Relu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let theta0 = spec.init_params(&mut rng);
    let objective = MinibatchObjective::new(spec, data, config.net.batch_size, config.seed)?;
    Ok((objective, theta0))
}

fn execute_tinynet(config: &RunConfig) -> Result<RunSummary> {
    let (objective, theta0) = tinynet_problem(config)?;
    let trainer = match config.optimizer {
        OptimizerKind::Finder => Trainer::Finder(config.finder_params()),
        _ => Trainer::FirstOrder(first_order(config)),
    };
    let out = train_classifier(&objective, &theta0, &trainer, config.epochs, config.net.target_accuracy)?;
    let rows: Vec<TraceRow> = out
        .trace
        .iter()
        .map(|e| TraceRow {
            epoch: e.epoch,
            best_loss: e.loss,
            alpha: e.alpha,
            forward_evals: e.forward_evals,
            grad_evals: e.grad_evals,
            wall_ms: e.wall_ms,
        })
        .collect();
    let final_loss = rows.last().map_or(objective.full_loss(&theta0)?, |r| r.best_loss);
    let outcome = if out.reached_target || final_loss <= config.eps_tol {
        Outcome::Converged
    } else {
        Outcome::BudgetExhausted
    };
    Ok(RunSummary {
        optimizer: config.optimizer,
        objective: config.objective,
        dim: objective.model().param_count(),
        rows,
        final_loss,
        outcome,
        start: format!("glorot seed={}", config.seed),
    })
}

/// Runs a bench config, writes its trace if an output path is configured and
/// returns the summary.
pub fn cmd_bench(config: &RunConfig) -> Result<RunSummary> {
    let summary = execute(config)?;
    if let Some(path) = &config.out {
        write_trace_file(&summary.rows, path)?;
    }
    Ok(summary)
}

/// Runs each config in turn, writes the merged trace to `out` if given and
/// returns the summaries together with a formatted table.
pub fn cmd_compare(configs: &[RunConfig], out: Option<&Path>) -> Result<(Vec<RunSummary>, String)> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    let first = &configs[0];
    for c in &configs[1..] {
        if c.objective != first.objective || c.dim != first.dim {
            return Err(Error::Config(format!(
                "compare needs a shared objective and dimension: {}/{} vs {}/{}",
                first.objective, first.dim, c.objective, c.dim
            )));
        }
    }
    let mut summaries = Vec::with_capacity(configs.len());
    for c in configs {
        summaries.push(execute(c)?);
    }
    if let Some(path) = out {
        let runs: Vec<(String, Vec<TraceRow>)> = summaries
            .iter()
            .map(|s| (s.optimizer.to_string(), s.rows.clone()))
            .collect();
        let file = std::fs::File::create(path)?;
        write_merged(&runs, std::io::BufWriter::new(file))?;
    }
    let table = format_table(&summaries);
    Ok((summaries, table))
}

pub fn format_table(summaries: &[RunSummary]) -> String {
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<10} {:>14} {:>8} {:>12} {:>12} {:>10}",
        "optimizer", "final_loss", "epochs", "forward", "grad", "wall_ms"
    );
    for s in summaries {
        let _ = writeln!(
            table,
            "{:<10} {:>14.6e} {:>8} {:>12} {:>12} {:>10}",
            s.optimizer.name(),
            s.final_loss,
            s.epochs(),
            s.forward_evals(),
            s.grad_evals(),
            s.wall_ms()
        );
    }
    table
}
