use super::gradient::{j0_value, j0_with_gradient};
use super::{inner, OptimizationTrace, OptimizerOptions, PeriodicTest, Recorder};
use crate::error::Result;
use crate::system::{ControlSchedule, GateTarget, QuantumSystem};

/// Steepest descent on `J₀` with Armijo backtracking.
///
/// Stops once `J₀ ≤ j0_target` (converged), after `max_iters` accepted
/// steps, or when the line search can no longer decrease `J₀`; the last two
/// leave `trace.converged == false`. Accepted `J₀` values never increase.
pub fn grape_minimize(
    system: &QuantumSystem,
    schedule0: &ControlSchedule,
    target: &GateTarget,
    opts: &OptimizerOptions,
    tester: Option<&PeriodicTest>,
) -> Result<(ControlSchedule, OptimizationTrace)> {
    grape_run(system, schedule0, target, opts, opts.max_iters, tester)
}

pub(super) fn grape_run(
    system: &QuantumSystem,
    schedule0: &ControlSchedule,
    target: &GateTarget,
    opts: &OptimizerOptions,
    max_iters: usize,
    tester: Option<&PeriodicTest>,
) -> Result<(ControlSchedule, OptimizationTrace)> {
    opts.validate()?;
    let mut rec = Recorder::new(tester);
    let mut u = schedule0.clone();
    let (mut j0, mut g) = j0_with_gradient(system, &u, target)?;
    rec.record(0, j0, j0, 0.0, false, (system, &u, target))?;
    let mut alpha = opts.learning_rate;
    for it in 1..=max_iters {
        if j0 <= opts.j0_target {
            break;
        }
        let gn2 = inner(&g, &g);
        if gn2 == 0.0 {
            rec.trace.note = Some("zero gradient above target".into());
            break;
        }
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let cand = u.stepped(&g, alpha);
            let val = j0_value(system, &cand, target)?;
            if val <= j0 - opts.armijo * alpha * gn2 {
                accepted = Some(cand);
                break;
            }
            alpha *= opts.backtrack_shrink;
        }
        let Some(cand) = accepted else {
            rec.trace.note = Some("line search exhausted".into());
            break;
        };
        u = cand;
        (j0, g) = j0_with_gradient(system, &u, target)?;
        rec.record(it, j0, j0, alpha, false, (system, &u, target))?;
        alpha *= opts.step_growth;
    }
    rec.trace.converged = j0 <= opts.j0_target;
    if !rec.trace.converged && rec.trace.note.is_none() {
        rec.trace.note = Some(format!("J0 = {j0:e} above target after {max_iters} iterations"));
    }
    rec.finish((system, &u, target))?;
    Ok((u, rec.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMatrix, RMatrix};
    use crate::operators::build_operator;
    use crate::system::PhaseMode;

    fn x_gate_problem() -> (QuantumSystem, GateTarget) {
        let sys = QuantumSystem::new(
            CMatrix::zeros(2, 2),
            vec![build_operator("X").unwrap(), build_operator("Y").unwrap()],
            vec![0, 0],
        )
        .unwrap();
        // exp(-i π/2 X) = -iX lies in SU(2)
        let target = GateTarget::new(build_operator("-i X").unwrap(), PhaseMode::Plain).unwrap();
        (sys, target)
    }

    #[test]
    fn single_qubit_x_gate_converges() {
        let (sys, target) = x_gate_problem();
        let sched = crate::presets::random_schedule(&sys, 10, 1.0, 0.1, 5);
        let opts = OptimizerOptions { max_iters: 500, ..Default::default() };
        let (out, trace) = grape_minimize(&sys, &sched, &target, &opts, None).unwrap();
        let j0 = j0_value(&sys, &out, &target).unwrap();
        assert!(trace.converged, "{:?}", trace.note);
        assert!(j0 < 1e-10, "{j0}");
        assert!(trace.records.len() <= 501);
        for w in trace.records.windows(2) {
            assert!(w[1].j0 <= w[0].j0);
        }
    }

    #[test]
    fn optimal_start_takes_no_steps() {
        let (sys, target) = x_gate_problem();
        let sched = ControlSchedule::new(
            1.0,
            RMatrix::from_row_slice(2, 2, &[std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4, 0.0, 0.0]),
        )
        .unwrap();
        let (out, trace) = grape_minimize(&sys, &sched, &target, &OptimizerOptions::default(), None).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(out, sched);
    }
}
