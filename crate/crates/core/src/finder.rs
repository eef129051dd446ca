//! The ensemble-filtering quasi-Newton iteration.
//!
//! One epoch samples an ensemble around the current anchor, estimates a
//! diagonal inverse-Hessian surrogate from particle/gradient covariances,
//! accumulates the scaled gradients into a momentum-like increment matrix,
//! picks a step multiplier by backtracking, and latches onto the best of the
//! updated ensemble and the previous best particle. The sampling spread then
//! follows the span between the best and worst candidates.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{diagonal_gain, generate_ensemble, sort_by_cost, DiagonalGain, DiffusionDiag};
use crate::error::{invalid, Error, Result};
use crate::objectives::Objective;

/// Initial sampling spread `R_0`.
pub const INITIAL_SPREAD: f64 = 0.1;

/// Gain exponent recommended for noisy objectives with batches of about 500.
pub const NOISY_GAMMA_BATCH_500: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Ensemble size.
    pub p: usize,
    /// Increment memory factor, in `[0, 1)`.
    pub theta: f64,
    /// Gain exponent, in `[0, 1]`.
    pub gamma: f64,
    /// Span memory weight.
    pub c_s: f64,
    /// Armijo sufficient-decrease constant.
    pub c_alpha: f64,
    /// Upper bound on the diffusion diagonal.
    pub zeta1: f64,
    /// Diffusion entry used where the span vanishes.
    pub zeta2: f64,
    /// Smallest step multiplier tried by the line search.
    pub delta_min: f64,
    /// Step multiplier used when every backtracking trial fails.
    pub alpha_fallback: f64,
    /// First step multiplier tried by the line search.
    pub alpha_cap: f64,
    pub eps_tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Reuse the known cost of the retained particle instead of re-evaluating it.
    pub cache_retained: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            p: 5,
            theta: 0.9,
            gamma: 1.0,
            c_s: 0.1,
            c_alpha: 0.01,
            zeta1: 1e-4,
            zeta2: 1e-4,
            delta_min: 1e-6,
            alpha_fallback: 0.1,
            alpha_cap: 1.0,
            eps_tol: 1e-12,
            max_epochs: 1000,
            seed: 0,
            cache_retained: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(invalid("p", "ensemble size must be ≥ 2"));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(invalid("theta", "θ must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma", "γ must lie in [0, 1]"));
        }
        if !(self.c_s > 0.0 && self.c_s <= 1.0) {
            return Err(invalid("c_s", "must lie in (0, 1]"));
        }
        if !(self.c_alpha > 0.0 && self.c_alpha < 1.0) {
            return Err(invalid("c_alpha", "must lie in (0, 1)"));
        }
        let positive = [
            ("zeta1", self.zeta1),
            ("zeta2", self.zeta2),
            ("delta_min", self.delta_min),
            ("alpha_fallback", self.alpha_fallback),
            ("eps_tol", self.eps_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        if !(self.alpha_cap > 0.0 && self.alpha_cap <= 1.0) {
            return Err(invalid("alpha_cap", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Defaults tuned for mini-batch (noisy) losses: no increment memory, a
/// small gain exponent (batches of about 100) and a tight sampling spread.
pub fn noisy_preset() -> HyperParams {
    HyperParams {
        theta: 0.0,
        gamma: 0.1,
        zeta1: 1e-6,
        zeta2: 1e-6,
        ..HyperParams::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Constant,
    Linear,
}

/// Optional epoch-dependent override of `zeta1 = zeta2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon_epochs: usize,
    pub mode: ScheduleMode,
}

impl Default for ZetaSchedule {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 1e-5,
            horizon_epochs: 1000,
            mode: ScheduleMode::Constant,
        }
    }
}

impl ZetaSchedule {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn linear(start: f64, end: f64, horizon_epochs: usize) -> Self {
        Self {
            start,
            end,
            horizon_epochs,
            mode: ScheduleMode::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == ScheduleMode::Linear {
            if !(self.end > 0.0 && self.start >= self.end && self.start.is_finite()) {
                return Err(invalid("schedule", "need start ≥ end > 0"));
            }
            if self.horizon_epochs == 0 {
                return Err(invalid("schedule", "horizon must be ≥ 1 epoch"));
            }
        }
        Ok(())
    }

    /// Value for epoch `t`, or `None` when the hyperparameters apply unchanged.
    pub fn value_at(&self, t: usize) -> Option<f64> {
        match self.mode {
            ScheduleMode::Constant => None,
            ScheduleMode::Linear if t >= self.horizon_epochs => Some(self.end),
            ScheduleMode::Linear => {
                let frac = t as f64 / self.horizon_epochs as f64;
                Some(self.start + (self.end - self.start) * frac)
            }
        }
    }
}

/// Cumulative objective evaluation counts, split by purpose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounters {
    /// Evaluation of the starting point.
    pub initial: u64,
    /// Cost evaluations of sampled ensemble members.
    pub ensemble: u64,
    /// Cost evaluations of updated particles and the retained best.
    pub candidates: u64,
    /// Backtracking trials.
    pub line_search: u64,
    /// Gradient evaluations.
    pub gradient: u64,
}

impl EvalCounters {
    pub fn forward(&self) -> u64 {
        self.initial + self.ensemble + self.candidates + self.line_search
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// Epochs completed, starting at 1.
    pub epoch: usize,
    pub best_loss: f64,
    pub alpha: f64,
    pub line_search_accepted: bool,
    pub line_search_trials: usize,
    pub gain_min: f64,
    pub gain_mean: f64,
    pub gain_max: f64,
    pub counters: EvalCounters,
    /// Milliseconds since the run started; 0 for bare [`OptimizerState::step`] calls.
    pub wall_ms: u64,
}

/// Backtracking outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub alpha: f64,
    /// False when every trial failed and the fallback was used.
    pub accepted: bool,
    pub trials: usize,
}

/// Backtracking parameters for [`armijo_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoRule {
    pub c_alpha: f64,
    pub delta_min: f64,
    pub alpha_fallback: f64,
    pub alpha_cap: f64,
}

impl From<&HyperParams> for ArmijoRule {
    fn from(hp: &HyperParams) -> Self {
        Self {
            c_alpha: hp.c_alpha,
            delta_min: hp.delta_min,
            alpha_fallback: hp.alpha_fallback,
            alpha_cap: hp.alpha_cap,
        }
    }
}

/// Finds the largest `delta` in `{cap, cap/2, cap/4, ...}` not below
/// `delta_min` with `f(x - delta d) <= f_best - c_alpha delta <d, g>`.
/// Trials with non-finite cost count as failures.
pub fn armijo_search<O: Objective + ?Sized>(
    x_best: &[f64],
    g_best: &[f64],
    d_best: &[f64],
    f_best: f64,
    objective: &O,
    rule: &ArmijoRule,
) -> Result<LineSearch> {
    let n = x_best.len();
    if g_best.len() != n || d_best.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if g_best.len() != n { g_best.len() } else { d_best.len() },
        });
    }
    let slope: f64 = d_best.iter().zip(g_best).map(|(d, g)| d * g).sum();
    let mut trial = vec![0.0; n];
    let mut delta = rule.alpha_cap;
    let mut trials = 0;
    while delta >= rule.delta_min {
        for ((t, x), d) in trial.iter_mut().zip(x_best).zip(d_best) {
            *t = x - delta * d;
        }
        let f_new = objective.value(&trial)?;
        trials += 1;
        if f_new.is_finite() && f_new <= f_best - rule.c_alpha * delta * slope {
            return Ok(LineSearch {
                alpha: delta,
                accepted: true,
                trials,
            });
        }
        delta *= 0.5;
    }
    Ok(LineSearch {
        alpha: rule.alpha_fallback,
        accepted: false,
        trials,
    })
}

/// `theta * previous + B~ * G^s`, the gain scaling each row.
pub fn compute_increment(
    previous: &DMatrix<f64>,
    gain: &DiagonalGain,
    sorted_gradients: &DMatrix<f64>,
    theta: f64,
) -> Result<DMatrix<f64>> {
    let (n, p) = sorted_gradients.shape();
    if previous.shape() != (n, p) || gain.scaled().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            actual: previous.len(),
        });
    }
    let b = gain.scaled();
    Ok(DMatrix::from_fn(n, p, |i, j| {
        theta * previous[(i, j)] + b[i] * sorted_gradients[(i, j)]
    }))
}

/// `X^s - alpha * Delta`.
pub fn update_ensemble(sorted: &DMatrix<f64>, increment: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if sorted.shape() != increment.shape() {
        return Err(Error::DimensionMismatch {
            expected: sorted.len(),
            actual: increment.len(),
        });
    }
    Ok(sorted - increment * alpha)
}

/// Result of choosing the next anchor among updated particles and the
/// previous best.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub anchor: Vec<f64>,
    pub worst: Vec<f64>,
    pub best_loss: f64,
    /// Column of `[X^ | prev_best]` that became the anchor.
    pub best_index: usize,
    pub worst_index: usize,
    /// Cost evaluations spent.
    pub evaluations: u64,
}

/// Evaluates `[updated | prev_best]` and returns the arg-min column as the new
/// anchor and the arg-max column as the worst particle. Ties go to the lower
/// column index, so the previous best only wins on strict improvement.
/// `prev_best_cost`, when given, is used instead of re-evaluating `prev_best`.
pub fn retain_best_and_select<O: Objective + ?Sized>(
    updated: &DMatrix<f64>,
    prev_best: &[f64],
    prev_best_cost: Option<f64>,
    objective: &O,
) -> Result<Selection> {
    if updated.nrows() != prev_best.len() {
        return Err(Error::DimensionMismatch {
            expected: updated.nrows(),
            actual: prev_best.len(),
        });
    }
    let p = updated.ncols();
    let mut costs = Vec::with_capacity(p + 1);
    let mut evaluations = 0;
    for (j, col) in updated.column_iter().enumerate() {
        let f = objective.value(col.as_slice())?;
        evaluations += 1;
        ensure_finite(f, || format!("updated particle {j}"))?;
        costs.push(f);
    }
    let retained = match prev_best_cost {
        Some(f) => f,
        None => {
            evaluations += 1;
            objective.value(prev_best)?
        }
    };
    ensure_finite(retained, || "retained particle".to_string())?;
    costs.push(retained);

    let column = |k: usize| -> Vec<f64> {
        if k < p {
            updated.column(k).as_slice().to_vec()
        } else {
            prev_best.to_vec()
        }
    };
    let mut best = 0;
    let mut worst = 0;
    for (k, &f) in costs.iter().enumerate() {
        if f < costs[best] {
            best = k;
        }
        if f > costs[worst] {
            worst = k;
        }
    }
    Ok(Selection {
        anchor: column(best),
        worst: column(worst),
        best_loss: costs[best],
        best_index: best,
        worst_index: worst,
        evaluations,
    })
}

/// Span memory update and the capped diffusion diagonal derived from it.
pub fn update_diffusion(
    span: &[f64],
    best: &[f64],
    worst: &[f64],
    c_s: f64,
    zeta1: f64,
    zeta2: f64,
) -> Result<(Vec<f64>, DiffusionDiag)> {
    let n = span.len();
    if best.len() != n || worst.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if best.len() != n { best.len() } else { worst.len() },
        });
    }
    let next: Vec<f64> = span
        .iter()
        .zip(best.iter().zip(worst))
        .map(|(s, (b, w))| (1.0 - c_s) * s + c_s * (w - b))
        .collect();
    let diag = next
        .iter()
        .map(|&s| if s != 0.0 { s.abs().min(zeta1) } else { zeta2 })
        .collect();
    Ok((next, DiffusionDiag::new(diag)?))
}

/// Optimizer state carried between epochs.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub t: usize,
    pub anchor: Vec<f64>,
    pub best_loss: f64,
    /// Increment memory, one column per sorted ensemble slot.
    pub increment: DMatrix<f64>,
    /// Best-to-worst span memory.
    pub span: Vec<f64>,
    pub diffusion: DiffusionDiag,
    pub counters: EvalCounters,
    rng: ChaCha8Rng,
}

impl OptimizerState {
    /// Fresh state at `x0`: zero increment and span, spread `0.1` everywhere.
    /// Costs one evaluation of `x0`.
    pub fn new<O: Objective + ?Sized>(x0: &[f64], objective: &O, hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        if x0.len() != objective.dim() {
            return Err(Error::DimensionMismatch {
                expected: objective.dim(),
                actual: x0.len(),
            });
        }
        let best_loss = objective.value(x0)?;
        ensure_finite(best_loss, || "initial point".to_string())?;
        let n = x0.len();
        Ok(Self {
            t: 0,
            anchor: x0.to_vec(),
            best_loss,
            increment: DMatrix::zeros(n, hp.p),
            span: vec![0.0; n],
            diffusion: DiffusionDiag::constant(n, INITIAL_SPREAD)?,
            counters: EvalCounters {
                initial: 1,
                ..EvalCounters::default()
            },
            rng: ChaCha8Rng::seed_from_u64(hp.seed),
        })
    }

    /// Runs one epoch.
    pub fn step<O: Objective + ?Sized>(&mut self, objective: &O, hp: &HyperParams) -> Result<EpochReport> {
        let n = self.anchor.len();
        let p = hp.p;
        if self.increment.shape() != (n, p) {
            return Err(invalid("p", "ensemble size changed mid-run"));
        }

        let particles = generate_ensemble(&self.anchor, &self.diffusion, p, &mut self.rng)?;
        let mut gradients = DMatrix::zeros(n, p);
        let mut costs = Vec::with_capacity(p);
        for j in 0..p {
            let (f, mut g) = objective.value_and_gradient(particles.column(j).as_slice())?;
            self.counters.ensemble += 1;
            self.counters.gradient += 1;
            ensure_finite(f, || format!("ensemble particle {j} in epoch {}", self.t + 1))?;
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: g.len(),
                });
            }
            for v in g.iter_mut().filter(|v| !v.is_finite()) {
                *v = 0.0;
            }
            gradients.column_mut(j).copy_from_slice(&g);
            costs.push(f);
        }

        let sorted = sort_by_cost(&particles, &gradients, &costs)?;
        let gain = diagonal_gain(&sorted.particles, &sorted.gradients, hp.gamma)?;
        let increment = compute_increment(&self.increment, &gain, &sorted.gradients, hp.theta)?;

        let best = sorted.particles.column(0);
        let search = armijo_search(
            best.as_slice(),
            sorted.gradients.column(0).as_slice(),
            increment.column(0).as_slice(),
            sorted.costs[0],
            objective,
            &ArmijoRule::from(hp),
        )?;
        self.counters.line_search += search.trials as u64;

        let updated = update_ensemble(&sorted.particles, &increment, search.alpha)?;
        let cached = hp.cache_retained.then_some(sorted.costs[0]);
        let selection = retain_best_and_select(&updated, best.as_slice(), cached, objective)?;
        self.counters.candidates += selection.evaluations;

        let (span, diffusion) = update_diffusion(
            &self.span,
            &selection.anchor,
            &selection.worst,
            hp.c_s,
            hp.zeta1,
            hp.zeta2,
        )?;

        self.span = span;
        self.diffusion = diffusion;
        self.increment = increment;
        self.anchor = selection.anchor;
        self.best_loss = selection.best_loss;
        self.t += 1;

        let (gain_min, gain_mean, gain_max) = gain.stats();
        Ok(EpochReport {
            epoch: self.t,
            best_loss: self.best_loss,
            alpha: search.alpha,
            line_search_accepted: search.accepted,
            line_search_trials: search.trials,
            gain_min,
            gain_mean,
            gain_max,
            counters: self.counters,
            wall_ms: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Best loss reached `eps_tol`.
    Converged,
    /// Epoch budget exhausted first.
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub x_star: Vec<f64>,
    pub best_loss: f64,
    pub status: RunStatus,
    pub trace: Vec<EpochReport>,
    pub counters: EvalCounters,
}

/// Iterates until the anchor cost drops to `eps_tol` or `max_epochs` epochs
/// have run.
pub fn run<O: Objective + ?Sized>(
    x0: &[f64],
    objective: &O,
    hp: &HyperParams,
    schedule: &ZetaSchedule,
) -> Result<RunOutcome> {
    run_with(x0, |_| objective, hp, schedule, |_| {})
}

/// General driver: `objective_at(t)` supplies the objective for epoch `t`
/// (mini-batch runs hand out a different batch each epoch) and `observer`
/// sees every report as it is produced.
pub fn run_with<O, F, V>(
    x0: &[f64],
    mut objective_at: F,
    hp: &HyperParams,
    schedule: &ZetaSchedule,
    mut observer: V,
) -> Result<RunOutcome>
where
    O: Objective,
    F: FnMut(usize) -> O,
    V: FnMut(&EpochReport),
{
    schedule.validate()?;
    let started = Instant::now();
    let mut state = OptimizerState::new(x0, &objective_at(0), hp)?;
    let mut trace = Vec::new();
    let mut epoch_hp = hp.clone();
    while state.best_loss > hp.eps_tol && state.t < hp.max_epochs {
        if let Some(zeta) = schedule.value_at(state.t) {
            epoch_hp.zeta1 = zeta;
            epoch_hp.zeta2 = zeta;
        }
        let objective = objective_at(state.t);
        let mut report = state.step(&objective, &epoch_hp)?;
        report.wall_ms = started.elapsed().as_millis() as u64;
        observer(&report);
        trace.push(report);
    }
    let status = if state.best_loss <= hp.eps_tol {
        RunStatus::Converged
    } else {
        RunStatus::BudgetExhausted
    };
    Ok(RunOutcome {
        x_star: state.anchor,
        best_loss: state.best_loss,
        status,
        trace,
        counters: state.counters,
    })
}

fn ensure_finite(value: f64, context: impl FnOnce() -> String) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            value,
            context: context(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Benchmark, BenchmarkId, FnObjective};

    fn sphere(n: usize) -> Benchmark {
        Benchmark::new(BenchmarkId::Sphere, n).unwrap()
    }

    #[test]
    fn defaults_and_noisy_preset() {
        let d = HyperParams::default();
        assert_eq!((d.p, d.theta, d.gamma, d.c_s, d.c_alpha), (5, 0.9, 1.0, 0.1, 0.01));
        assert_eq!((d.zeta1, d.zeta2), (1e-4, 1e-4));
        let n = noisy_preset();
        assert_eq!(n.theta, 0.0);
        assert_eq!(n.gamma, 0.1);
        assert_eq!((n.zeta1, n.zeta2), (1e-6, 1e-6));
        let rest = HyperParams {
            theta: d.theta,
            gamma: d.gamma,
            zeta1: d.zeta1,
            zeta2: d.zeta2,
            ..n
        };
        assert_eq!(rest, d);
    }

    #[test]
    fn validation_ranges() {
        let bad = [
            HyperParams { p: 1, ..Default::default() },
            HyperParams { theta: 1.0, ..Default::default() },
            HyperParams { gamma: 1.5, ..Default::default() },
            HyperParams { zeta1: 0.0, ..Default::default() },
            HyperParams { eps_tol: 0.0, ..Default::default() },
            HyperParams { alpha_cap: 2.0, ..Default::default() },
        ];
        for hp in bad {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
        assert!(HyperParams::default().validate().is_ok());
    }

    #[test]
    fn linear_schedule_interpolates() {
        let s = ZetaSchedule::linear(0.1, 1e-5, 1000);
        assert_eq!(s.value_at(0), Some(0.1));
        assert!((s.value_at(500).unwrap() - 0.050005).abs() < 1e-15);
        assert_eq!(s.value_at(1000), Some(1e-5));
        assert_eq!(s.value_at(5000), Some(1e-5));
        assert_eq!(ZetaSchedule::constant().value_at(10), None);
    }

    #[test]
    fn increment_special_cases() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let gain = diagonal_gain(&x, &g, 1.0).unwrap();
        let prev = DMatrix::from_row_slice(1, 2, &[3.0, -1.0]);
        let d0 = compute_increment(&prev, &gain, &g, 0.0).unwrap();
        assert_eq!(d0.as_slice(), &[0.0, 1.0]);
        let d = compute_increment(&prev, &gain, &g, 0.5).unwrap();
        assert_eq!(d.as_slice(), &[1.5, 0.5]);

        let flat = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let zero_gain = diagonal_gain(&x, &flat, 1.0).unwrap();
        let kept = compute_increment(&prev, &zero_gain, &flat, 0.9).unwrap();
        assert_eq!(kept, &prev * 0.9);
    }

    #[test]
    fn armijo_zero_direction_takes_full_step() {
        let obj = sphere(3);
        let rule = ArmijoRule::from(&HyperParams::default());
        let ls = armijo_search(&[1.0; 3], &[2.0; 3], &[0.0; 3], 3.0, &obj, &rule).unwrap();
        assert_eq!(ls, LineSearch { alpha: 1.0, accepted: true, trials: 1 });
    }

    #[test]
    fn armijo_quartic_backtracks() {
        // f = x^4 at x = 10, d chosen as 3x so a unit step lands at -20.
        let obj = FnObjective::new(1, |x: &[f64]| x[0].powi(4), |x: &[f64]| vec![4.0 * x[0].powi(3)]);
        let rule = ArmijoRule::from(&HyperParams::default());
        let (x, g, d) = (10.0, 4000.0, 30.0);
        let ls = armijo_search(&[x], &[g], &[d], 1e4, &obj, &rule).unwrap();
        assert!(ls.accepted);
        assert!(ls.alpha < 1.0);
        // brute force over the halving sequence
        let mut expected = None;
        let mut delta = 1.0;
        while delta >= 1e-6 {
            if (x - delta * d).powi(4) <= 1e4 - 0.01 * delta * d * g {
                expected = Some(delta);
                break;
            }
            delta *= 0.5;
        }
        assert_eq!(Some(ls.alpha), expected);
    }

    #[test]
    fn armijo_falls_back_when_all_trials_fail() {
        // ascent direction never satisfies sufficient decrease
        let obj = sphere(1);
        let rule = ArmijoRule::from(&HyperParams::default());
        let ls = armijo_search(&[1.0], &[2.0], &[-1.0], 1.0, &obj, &rule).unwrap();
        assert!(!ls.accepted);
        assert_eq!(ls.alpha, 0.1);
        assert_eq!(ls.trials, 20);
    }

    #[test]
    fn update_with_zero_increment_is_identity() {
        let xs = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(update_ensemble(&xs, &zero, 0.3).unwrap(), xs);
    }

    #[test]
    fn retained_particle_wins_when_updates_are_worse() {
        let obj = sphere(2);
        let updated = DMatrix::from_column_slice(2, 2, &[3.0, 3.0, -2.0, 2.0]);
        let s = retain_best_and_select(&updated, &[0.5, 0.5], Some(0.5), &obj).unwrap();
        assert_eq!(s.anchor, vec![0.5, 0.5]);
        assert_eq!(s.best_index, 2);
        assert_eq!(s.worst, vec![3.0, 3.0]);
        assert_eq!(s.evaluations, 2);
        let uncached = retain_best_and_select(&updated, &[0.5, 0.5], None, &obj).unwrap();
        assert_eq!(uncached.evaluations, 3);
        assert_eq!(uncached.best_loss, 0.5);
    }

    #[test]
    fn ties_prefer_lower_column() {
        let obj = sphere(1);
        let updated = DMatrix::from_column_slice(1, 2, &[1.0, -1.0]);
        let s = retain_best_and_select(&updated, &[1.0], None, &obj).unwrap();
        assert_eq!(s.best_index, 0);
        assert_eq!(s.worst_index, 0);
    }

    #[test]
    fn diffusion_branches() {
        let (span, r) = update_diffusion(&[0.0; 3], &[1.0; 3], &[1.0; 3], 0.1, 1e-4, 2e-4).unwrap();
        assert_eq!(span, vec![0.0; 3]);
        assert_eq!(r.as_slice(), &[2e-4; 3]);

        let (span, r) = update_diffusion(&[0.0; 2], &[0.0; 2], &[1.0; 2], 0.1, 1e-4, 1e-4).unwrap();
        assert_eq!(span, vec![0.1; 2]);
        assert_eq!(r.as_slice(), &[1e-4; 2]);

        let (_, r) = update_diffusion(&[1e-5 / 0.9], &[0.0], &[0.0], 0.1, 1e-4, 1e-4).unwrap();
        assert!((r.as_slice()[0] - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn one_step_solves_sphere() {
        let obj = sphere(5);
        let hp = HyperParams { seed: 3, ..Default::default() };
        let mut state = OptimizerState::new(&[1.0; 5], &obj, &hp).unwrap();
        let report = state.step(&obj, &hp).unwrap();
        assert!(report.best_loss <= 1e-20, "{}", report.best_loss);
        assert_eq!(report.alpha, 1.0);
        assert_eq!(report.counters.gradient, 5);
    }

    #[test]
    fn zero_budget_returns_start() {
        let obj = sphere(4);
        let hp = HyperParams { max_epochs: 0, ..Default::default() };
        let out = run(&[1.0; 4], &obj, &hp, &ZetaSchedule::constant()).unwrap();
        assert_eq!(out.x_star, vec![1.0; 4]);
        assert!(out.trace.is_empty());
        assert_eq!(out.status, RunStatus::BudgetExhausted);
    }

    #[test]
    fn already_converged_runs_no_epochs() {
        let obj = sphere(4);
        let out = run(&[0.0; 4], &obj, &HyperParams::default(), &ZetaSchedule::constant()).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.status, RunStatus::Converged);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let obj = FnObjective::new(1, |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { x[0] * x[0] }, |x: &[f64]| vec![2.0 * x[0]]);
        let hp = HyperParams::default();
        let err = run(&[1.0], &obj, &hp, &ZetaSchedule::constant()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }));
    }
}
