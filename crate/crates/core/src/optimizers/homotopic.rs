use super::gradient::{j0_with_gradient, unitary_jacobian};
use super::grape::grape_run;
use super::{
    inner, kernel_projection, projected_direction, stalled, OptimizationTrace, OptimizerOptions, PeriodicTest,
    Projection, Recorder,
};
use crate::error::Result;
use crate::estimator::{jn_value, jn_with_gradient};
use crate::linalg::RMatrix;
use crate::noise::SecondMomentModel;
use crate::system::{ControlSchedule, GateTarget, QuantumSystem};

/// Second stage of the homotopic scheme: descend `J_N` along its gradient
/// with the `J₀` gradient projected out, restoring `J₀ ≤ j0_target` with
/// GRAPE whenever it drifts above `j0_ceiling`.
///
/// An input above `j0_target` is first brought down by GRAPE. Every trace
/// record satisfies `J₀ ≤ j0_ceiling`. If a restoration fails the run stops
/// and returns the last schedule that met the ceiling.
pub fn homotopic_refine(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    moments: &SecondMomentModel,
    opts: &OptimizerOptions,
    tester: Option<&PeriodicTest>,
) -> Result<(ControlSchedule, OptimizationTrace)> {
    opts.validate()?;
    let est = opts.estimator;
    let mut rec = Recorder::new(tester);

    let mut u = schedule.clone();
    let (mut j0, mut g0) = j0_with_gradient(system, &u, target)?;
    if j0 > opts.j0_target {
        let (restored, t) = grape_run(system, &u, target, opts, opts.restore_max_iters, None)?;
        rec.trace.restorations += 1;
        if !t.converged {
            rec.trace.note = Some("initial GRAPE stage did not reach the precision target".into());
            return Ok((restored, rec.trace));
        }
        u = restored;
        (j0, g0) = j0_with_gradient(system, &u, target)?;
    }
    let (mut jn, mut gn) = jn_with_gradient(system, &u, moments, est)?;
    rec.record(0, j0, jn, 0.0, true, (system, &u, target))?;
    if moments.is_zero() {
        rec.trace.converged = true;
        return Ok((u, rec.trace));
    }

    let mut alpha = opts.learning_rate;
    let mut history = vec![jn];
    // previous (amplitudes, direction) for the Barzilai-Borwein trial step
    let mut previous: Option<(RMatrix, RMatrix)> = None;
    for it in 1..=opts.max_iters {
        let dir = match opts.projection {
            Projection::GateGradient => projected_direction(&gn, &g0),
            Projection::UnitaryJacobian => kernel_projection(&gn, &unitary_jacobian(system, &u)?),
        };
        if let Some((pu, pd)) = previous.take() {
            if opts.barzilai_borwein {
                let s = u.amplitudes() - pu;
                let y = &dir - pd;
                let sy = inner(&s, &y);
                if sy > 0.0 {
                    alpha = inner(&s, &s) / sy;
                }
            }
        }
        let slope = inner(&gn, &dir);
        if slope <= 0.0 {
            rec.trace.converged = true;
            rec.trace.note = Some("projected direction vanished".into());
            break;
        }
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let cand = u.stepped(&dir, alpha);
            let val = jn_value(system, &cand, moments, est)?;
            if val <= jn - opts.armijo * alpha * slope {
                accepted = Some(cand);
                break;
            }
            alpha *= opts.backtrack_shrink;
        }
        let Some(mut cand) = accepted else {
            rec.trace.converged = true;
            rec.trace.note = Some("line search exhausted".into());
            break;
        };
        let (mut cj0, mut cg0) = j0_with_gradient(system, &cand, target)?;
        let mut grow = true;
        if cj0 > opts.j0_ceiling {
            let (restored, t) = grape_run(system, &cand, target, opts, opts.restore_max_iters, None)?;
            rec.trace.restorations += 1;
            if !t.converged {
                rec.trace.note = Some(format!("precision restoration failed at iteration {it}"));
                break;
            }
            cand = restored;
            (cj0, cg0) = j0_with_gradient(system, &cand, target)?;
            // no growth after a restoration
            alpha *= opts.backtrack_shrink;
            grow = false;
        }
        if grow {
            previous = Some((u.amplitudes().clone(), dir));
        }
        u = cand;
        (j0, g0) = (cj0, cg0);
        (jn, gn) = jn_with_gradient(system, &u, moments, est)?;
        rec.record(it, j0, jn, alpha, false, (system, &u, target))?;
        if grow {
            alpha *= opts.step_growth;
        }
        history.push(jn);
        if stalled(&history, opts.stall_window, opts.stall_tol) {
            rec.trace.converged = true;
            rec.trace.note = Some("J_N improvement stalled".into());
            break;
        }
    }
    if rec.trace.note.is_none() {
        rec.trace.converged = true;
    }
    rec.finish((system, &u, target))?;
    Ok((u, rec.trace))
}
