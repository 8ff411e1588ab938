//! Exact gradients of the gate error with respect to schedule amplitudes.
//!
//! The realized unitary is an ordered product of segment propagators. A
//! forward sweep stores the partial products, a backward sweep carries the
//! adjoint, and each segment contributes `Re tr(B_i dP_i)` through the
//! spectral derivative of its propagator. On a merged (noisy) grid a slice
//! amplitude is active on several segments and collects all of them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix, SpectralPropagator};
use crate::noise::MergedTimingGrid;
use crate::system::{ControlSchedule, GateTarget, PhaseMode, QuantumSystem};

/// Gate error on `grid` and its gradient with respect to the amplitudes.
pub fn j0_with_gradient_on_grid(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    grid: &MergedTimingGrid,
    target: &GateTarget,
) -> Result<(f64, RMatrix)> {
    check(system, schedule, target)?;
    grid.check_compatible(schedule)?;
    let m = system.n_controls();
    let n_seg = grid.segment_count();
    let mut amps = vec![0.0; m];
    let props: Vec<SpectralPropagator> = (0..n_seg)
        .map(|seg| {
            grid.fill_amplitudes(schedule, seg, &mut amps);
            SpectralPropagator::new(&system.hamiltonian(&amps), grid.duration(seg))
        })
        .collect();

    // partial products before each segment
    let mut before = Vec::with_capacity(n_seg + 1);
    before.push(linalg::identity(system.dim()));
    for p in &props {
        let next = &p.propagator * before.last().unwrap();
        before.push(next);
    }
    let u = &before[n_seg];
    let uf = &target.unitary;
    let error = crate::system::gate_error_unchecked(u, uf, target.phase_mode);

    // dJ = Re tr(A dU)
    let adjoint = match target.phase_mode {
        PhaseMode::Plain => (u - uf).adjoint().scale(2.0),
        PhaseMode::PhaseInvariant => {
            let z = linalg::trace_product(&uf.adjoint(), u);
            if z.norm() == 0.0 {
                CMatrix::zeros(u.nrows(), u.ncols())
            } else {
                uf.adjoint() * (z.conj() / z.norm() * -2.0)
            }
        }
    };

    let mut grad = RMatrix::zeros(m, schedule.slices());
    let mut after_adj = adjoint;
    for seg in (0..n_seg).rev() {
        let p = &props[seg];
        let b = &before[seg] * &after_adj;
        let active: Vec<(usize, usize)> = (0..m).filter_map(|k| grid.active_slice(seg, k).map(|s| (k, s))).collect();
        if !active.is_empty() {
            let y = p.gradient_weights(&b);
            for (k, s) in active {
                grad[(k, s)] += SpectralPropagator::weighted_trace(&y, &system.controls()[k]).re;
            }
        }
        after_adj *= &p.propagator;
    }
    Ok((error, grad))
}

fn check(system: &QuantumSystem, schedule: &ControlSchedule, target: &GateTarget) -> Result<()> {
    if schedule.n_controls() != system.n_controls() {
        return Err(Error::Dimension(format!(
            "schedule has {} control rows, system has {} controls",
            schedule.n_controls(),
            system.n_controls()
        )));
    }
    if target.dim() != system.dim() {
        return Err(Error::Dimension(format!(
            "target is {}-dimensional, system is {}-dimensional",
            target.dim(),
            system.dim()
        )));
    }
    Ok(())
}

/// Ideal-grid gate error `J₀` and its gradient.
pub fn j0_with_gradient(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
) -> Result<(f64, RMatrix)> {
    j0_with_gradient_on_grid(system, schedule, &MergedTimingGrid::ideal(schedule), target)
}

pub fn grad_j0(system: &QuantumSystem, schedule: &ControlSchedule, target: &GateTarget) -> Result<RMatrix> {
    j0_with_gradient(system, schedule, target).map(|(_, g)| g)
}

/// `J₀` of the ideally clocked schedule.
pub fn j0_value(system: &QuantumSystem, schedule: &ControlSchedule, target: &GateTarget) -> Result<f64> {
    check(system, schedule, target)?;
    let traj = crate::system::propagate_ideal(system, schedule)?;
    target.error(traj.final_unitary())
}

/// Derivatives of the ideal final unitary in its own frame.
///
/// Row `2(a·n + b)` (and `+1`) holds the real (imaginary) part of entry
/// `(a, b)` of `U(T)† ∂U(T)/∂u_k^s`, column `s·m + k` (the column-major layout
/// of the amplitude matrix). Directions in the kernel of this matrix leave
/// `U(T)` unchanged to first order.
pub fn unitary_jacobian(system: &QuantumSystem, schedule: &ControlSchedule) -> Result<RMatrix> {
    if schedule.n_controls() != system.n_controls() {
        return Err(Error::Dimension(format!(
            "schedule has {} control rows, system has {} controls",
            schedule.n_controls(),
            system.n_controls()
        )));
    }
    let (m, n) = (system.n_controls(), system.dim());
    let mut amps = vec![0.0; m];
    let mut before = linalg::identity(n);
    let mut jac = RMatrix::zeros(2 * n * n, m * schedule.slices());
    for s in 0..schedule.slices() {
        for (k, a) in amps.iter_mut().enumerate() {
            *a = schedule.amplitude(k, s);
        }
        let p = SpectralPropagator::new(&system.hamiltonian(&amps), schedule.sample_period());
        let frame_in = before.adjoint() * p.propagator.adjoint();
        for k in 0..m {
            let x = &frame_in * p.derivative(&system.controls()[k]) * &before;
            let col = s * m + k;
            for (idx, z) in x.transpose().iter().enumerate() {
                jac[(2 * idx, col)] = z.re;
                jac[(2 * idx + 1, col)] = z.im;
            }
        }
        before = &p.propagator * &before;
    }
    Ok(jac)
}

/// Batch objective `J_S = (1/B) Σ_b ‖U(T, t_b) − U_f‖²` and its gradient.
/// Per-sample terms are computed in parallel and summed in batch order.
pub fn js_with_gradient(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    batch: &[MergedTimingGrid],
) -> Result<(f64, RMatrix)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch must contain at least one sample".into()));
    }
    let parts = batch
        .par_iter()
        .map(|grid| j0_with_gradient_on_grid(system, schedule, grid, target))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    let mut grad = RMatrix::zeros(schedule.n_controls(), schedule.slices());
    for (v, g) in parts {
        value += v;
        grad += g;
    }
    Ok((value * scale, grad.scale(scale)))
}

pub fn grad_js(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    batch: &[MergedTimingGrid],
) -> Result<RMatrix> {
    js_with_gradient(system, schedule, target, batch).map(|(_, g)| g)
}
