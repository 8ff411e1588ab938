//! Pulse synthesis: GRAPE on the ideal gate error, homotopic refinement of the
//! estimated noise error at fixed precision, batch-stochastic b-GRAPE over
//! sampled clock noise, and the weighted composite objective.

mod bgrape;
pub mod gradient;
mod grape;
mod homotopic;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{self, EstimatorOptions};
use crate::linalg::RMatrix;
use crate::montecarlo;
use crate::noise::{ClockNoiseModel, SecondMomentModel};
use crate::system::{ControlSchedule, GateTarget, QuantumSystem};

pub use bgrape::bgrape_optimize;
pub use gradient::unitary_jacobian;
pub use gradient::{grad_j0, grad_js, j0_value, j0_with_gradient, j0_with_gradient_on_grid, js_with_gradient};
pub use grape::grape_minimize;
pub use homotopic::homotopic_refine;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateSchedule {
    #[default]
    Constant,
    /// `α_ℓ = α / sqrt(ℓ + 1)`
    InvSqrt,
}

/// Where b-GRAPE draws its batches from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplingMode {
    /// New realizations every iteration.
    #[default]
    Fresh,
    /// Batches are picked from a fixed pool of `size` realizations.
    FixedPool { size: u64 },
}

/// What the homotopic stage removes from the `J_N` gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// The component along the `J₀` gradient.
    #[default]
    GateGradient,
    /// Everything that moves the final unitary to first order.
    UnitaryJacobian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Initial step size (fixed step for b-GRAPE).
    pub learning_rate: f64,
    pub lr_schedule: LearningRateSchedule,
    /// Backtracking factor applied on a rejected step.
    pub backtrack_shrink: f64,
    pub max_backtracks: usize,
    /// Step growth after an accepted line-search step.
    pub step_growth: f64,
    /// Use the Barzilai-Borwein step as the first line-search trial
    /// (homotopic refinement).
    pub barzilai_borwein: bool,
    pub projection: Projection,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub j0_target: f64,
    pub j0_ceiling: f64,
    /// Iteration cap for each precision-restoring GRAPE run.
    pub restore_max_iters: usize,
    pub beta: f64,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
    /// Stop when the relative objective improvement over `stall_window`
    /// iterations drops below `stall_tol`.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Set from the config's `[estimator]` section, not serialized here.
    #[serde(skip)]
    pub estimator: EstimatorOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            learning_rate: 0.01,
            lr_schedule: LearningRateSchedule::Constant,
            backtrack_shrink: 0.5,
            max_backtracks: 60,
            step_growth: 1.5,
            barzilai_borwein: true,
            projection: Projection::GateGradient,
            armijo: 1e-4,
            j0_target: 1e-10,
            j0_ceiling: 1e-6,
            restore_max_iters: 5000,
            beta: 1.0,
            batch_size: 5,
            sampling: SamplingMode::Fresh,
            seed: 0,
            stall_window: 50,
            stall_tol: 1e-6,
            estimator: EstimatorOptions::default(),
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(crate::Error::InvalidArgument(msg.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.j0_target < self.j0_ceiling) {
            return bad("j0_target must be below j0_ceiling");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return bad("backtrack_shrink must lie in (0, 1)");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be >= 0");
        }
        if let SamplingMode::FixedPool { size: 0 } = self.sampling {
            return bad("fixed sampling pool must be nonempty");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub j0: f64,
    /// `J₀` for GRAPE, `J_N` for homotopic, batch `J_S` for b-GRAPE,
    /// `J₀ + βJ_N` for the composite mode.
    pub objective: f64,
    pub tested_error: Option<f64>,
    pub step: f64,
    /// Seconds since the optimizer started.
    #[serde(skip)]
    pub elapsed: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Number of precision-restoring GRAPE runs (homotopic only).
    pub restorations: usize,
    /// Reason the run stopped early, if it did.
    pub note: Option<String>,
}

/// Periodic Monte-Carlo testing of intermediate controls.
#[derive(Clone, Debug)]
pub struct PeriodicTest {
    pub model: ClockNoiseModel,
    pub samples: usize,
    pub seed: u64,
    /// Test every `every` iterations (and the final iterate); 0 disables.
    pub every: usize,
}

impl PeriodicTest {
    fn due(&self, iteration: usize) -> bool {
        self.every > 0 && iteration.is_multiple_of(self.every)
    }

    fn run(&self, system: &QuantumSystem, schedule: &ControlSchedule, target: &GateTarget) -> Result<f64> {
        Ok(montecarlo::test_average_error(system, schedule, target, &self.model, self.samples, self.seed)?.mean)
    }
}

pub(crate) struct Recorder<'a> {
    start: Instant,
    tester: Option<&'a PeriodicTest>,
    pub trace: OptimizationTrace,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(tester: Option<&'a PeriodicTest>) -> Self {
        Self { start: Instant::now(), tester, trace: OptimizationTrace::default() }
    }

    pub(crate) fn record(
        &mut self,
        iteration: usize,
        j0: f64,
        objective: f64,
        step: f64,
        force_test: bool,
        ctx: (&QuantumSystem, &ControlSchedule, &GateTarget),
    ) -> Result<()> {
        let tested_error = match self.tester {
            Some(t) if t.every > 0 && (force_test || t.due(iteration)) => Some(t.run(ctx.0, ctx.1, ctx.2)?),
            _ => None,
        };
        self.trace.records.push(TraceRecord {
            iteration,
            j0,
            objective,
            tested_error,
            step,
            elapsed: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    /// Tests the final iterate if the last record has no tested value.
    pub(crate) fn finish(&mut self, ctx: (&QuantumSystem, &ControlSchedule, &GateTarget)) -> Result<()> {
        if let (Some(t), Some(last)) = (self.tester, self.trace.records.last_mut()) {
            if t.every > 0 && last.tested_error.is_none() {
                last.tested_error = Some(t.run(ctx.0, ctx.1, ctx.2)?);
            }
        }
        Ok(())
    }
}

fn inner(a: &RMatrix, b: &RMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Removes from `g_jn` its component along `g_j0`:
/// `g_jn − (⟨g_j0, g_jn⟩ / ⟨g_j0, g_j0⟩) g_j0`.
pub fn projected_direction(g_jn: &RMatrix, g_j0: &RMatrix) -> RMatrix {
    let norm_sq = inner(g_j0, g_j0);
    if norm_sq.sqrt() < 1e-14 {
        return g_jn.clone();
    }
    g_jn - g_j0.scale(inner(g_j0, g_jn) / norm_sq)
}

/// Projects `g` onto the kernel of `jacobian` (columns indexed like the
/// column-major storage of `g`).
pub fn kernel_projection(g: &RMatrix, jacobian: &RMatrix) -> RMatrix {
    let svd = jacobian.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let flat = nalgebra::DVector::from_column_slice(g.as_slice());
    let mut out = flat.clone();
    for (i, sv) in svd.singular_values.iter().enumerate() {
        if *sv > 1e-10 * smax {
            let row = v_t.row(i).transpose();
            out -= &row * row.dot(&flat);
        }
    }
    RMatrix::from_column_slice(g.nrows(), g.ncols(), out.as_slice())
}

/// `J₀ + β·J_N`.
pub fn composite_objective(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    moments: &SecondMomentModel,
    beta: f64,
    est: EstimatorOptions,
) -> Result<f64> {
    let j0 = j0_value(system, schedule, target)?;
    if beta == 0.0 {
        return Ok(j0);
    }
    Ok(j0 + beta * estimator::jn_value(system, schedule, moments, est)?)
}

fn composite_with_gradient(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    moments: &SecondMomentModel,
    beta: f64,
    est: EstimatorOptions,
) -> Result<(f64, f64, RMatrix)> {
    let (j0, g0) = j0_with_gradient(system, schedule, target)?;
    let (jn, gn) = estimator::jn_with_gradient(system, schedule, moments, est)?;
    Ok((j0, j0 + beta * jn, g0 + gn.scale(beta)))
}

/// Minimizes `J₀ + β·J_N` by backtracking gradient descent; the trace
/// objective is the composite value.
pub fn composite_minimize(
    system: &QuantumSystem,
    schedule0: &ControlSchedule,
    target: &GateTarget,
    moments: &SecondMomentModel,
    opts: &OptimizerOptions,
) -> Result<(ControlSchedule, OptimizationTrace)> {
    opts.validate()?;
    let (beta, est) = (opts.beta, opts.estimator);
    let mut rec = Recorder::new(None);
    let mut u = schedule0.clone();
    let (mut j0, mut obj, mut g) = composite_with_gradient(system, &u, target, moments, beta, est)?;
    rec.record(0, j0, obj, 0.0, false, (system, &u, target))?;
    let mut alpha = opts.learning_rate;
    let mut history = vec![obj];
    for it in 1..=opts.max_iters {
        let gn2 = inner(&g, &g);
        if gn2 == 0.0 {
            rec.trace.converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let cand = u.stepped(&g, alpha);
            let val = composite_objective(system, &cand, target, moments, beta, est)?;
            if val <= obj - opts.armijo * alpha * gn2 {
                accepted = Some(cand);
                break;
            }
            alpha *= opts.backtrack_shrink;
        }
        let Some(cand) = accepted else {
            rec.trace.converged = true;
            rec.trace.note = Some("line search exhausted".into());
            break;
        };
        u = cand;
        (j0, obj, g) = composite_with_gradient(system, &u, target, moments, beta, est)?;
        rec.record(it, j0, obj, alpha, false, (system, &u, target))?;
        alpha *= opts.step_growth;
        history.push(obj);
        if stalled(&history, opts.stall_window, opts.stall_tol) {
            rec.trace.converged = true;
            break;
        }
    }
    Ok((u, rec.trace))
}

/// Relative improvement over the last `window` entries below `tol`.
pub(crate) fn stalled(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() <= window {
        return false;
    }
    let old = history[history.len() - 1 - window];
    let new = *history.last().unwrap();
    old <= 0.0 || (old - new) / old.abs() < tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_cases() {
        let g0 = RMatrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
        let par = g0.scale(-3.5);
        assert!(projected_direction(&par, &g0).iter().all(|x| x.abs() < 1e-14));
        let orth = RMatrix::from_row_slice(1, 3, &[2.0, -1.0, 0.0]);
        assert_eq!(projected_direction(&orth, &g0), orth);
        let zero = RMatrix::zeros(1, 3);
        assert_eq!(projected_direction(&orth, &zero), orth);
    }

    #[test]
    fn options_validation() {
        assert!(OptimizerOptions::default().validate().is_ok());
        let bad = OptimizerOptions { j0_target: 1e-5, j0_ceiling: 1e-6, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerOptions { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerOptions { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stall_rule() {
        assert!(!stalled(&[1.0, 0.5], 50, 1e-6));
        let flat = vec![1.0; 60];
        assert!(stalled(&flat, 50, 1e-6));
        let falling: Vec<f64> = (0..60).map(|i| 1.0 / (i + 1) as f64).collect();
        assert!(!stalled(&falling, 50, 1e-6));
    }
}
