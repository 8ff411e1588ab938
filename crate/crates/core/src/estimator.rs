//! Perturbative estimate of the clock-noise averaged gate error.
//!
//! To first order in the timing offsets, a slip `δt_k^j` at edge `j` adds a
//! sliver of area `δt_k^j·δu_k^j` of control `k`, seen through the ideal
//! propagator at that edge. Averaging `‖Δ(T)‖_F²` over the noise gives
//!
//! ```text
//! J_N = Σ_{k,k'} C^τ_{kk'} tr(δH_k δH_k')
//!     + μ₀² Σ_j Σ_{k,k'} Jc_{kk'} δu_k^j δu_k'^j tr(H̄_k^j H̄_k'^j)
//! ```
//!
//! with `H̄_k^j = Ū†(t_j) H_k Ū(t_j)` and `δH_k = Σ_j δu_k^j H̄_k^j`. With
//! `Jc = I` the jitter term is `μ₀² Σ_k ‖δu_k‖² ‖H_k‖_F²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix, SpectralPropagator, C64};
use crate::noise::SecondMomentModel;
use crate::system::{self, ControlSchedule, QuantumSystem};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Also count the turn-on edge at `t = 0`, whose decrement is `-u_k^1`.
    #[serde(default)]
    pub include_turn_on: bool,
}

/// Edge sensitivities of one schedule.
#[derive(Clone, Debug)]
pub struct InteractionSet {
    /// Edge indices `j` (edge `j` sits at `j·T_s`).
    pub edges: Vec<usize>,
    /// `hbar[k][e]` is `H̄_k` at `edges[e]`.
    pub hbar: Vec<Vec<CMatrix>>,
    /// `du[(k, e)]`: amplitude just before the edge minus just after it.
    pub du: RMatrix,
    /// `tr(H_k H_k')` (real for Hermitian controls).
    pub control_overlaps: RMatrix,
}

impl InteractionSet {
    pub fn n_controls(&self) -> usize {
        self.du.nrows()
    }

    /// `δH_k = Σ_e δu_k^e H̄_k^e`.
    pub fn delta_h(&self, control: usize) -> CMatrix {
        let dim = self.hbar[control][0].nrows();
        let mut acc = CMatrix::zeros(dim, dim);
        for (e, h) in self.hbar[control].iter().enumerate() {
            let d = self.du[(control, e)];
            if d != 0.0 {
                acc += h.scale(d);
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub jn_total: f64,
    pub jn_latency: f64,
    pub jn_jitter: f64,
    /// `‖δu_k‖²` over the estimator's edges, per control.
    pub smoothness: Vec<f64>,
}

fn edge_list(slices: usize, opts: EstimatorOptions) -> Vec<usize> {
    let first = if opts.include_turn_on { 0 } else { 1 };
    (first..slices).collect()
}

/// `u_k` before edge `j` minus after it (zero field before `t = 0`).
fn decrement(schedule: &ControlSchedule, control: usize, edge: usize) -> f64 {
    let before = if edge == 0 { 0.0 } else { schedule.amplitude(control, edge - 1) };
    before - schedule.amplitude(control, edge)
}

fn control_overlaps(system: &QuantumSystem) -> RMatrix {
    let m = system.n_controls();
    RMatrix::from_fn(m, m, |k, l| linalg::trace_product(&system.controls()[k], &system.controls()[l]).re)
}

pub fn interaction_set(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    opts: EstimatorOptions,
) -> Result<InteractionSet> {
    let traj = system::propagate_ideal(system, schedule)?;
    Ok(interaction_set_from(system, schedule, &traj.edge_unitaries, opts))
}

fn interaction_set_from(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    edge_unitaries: &[CMatrix],
    opts: EstimatorOptions,
) -> InteractionSet {
    let edges = edge_list(schedule.slices(), opts);
    let m = system.n_controls();
    let hbar = system
        .controls()
        .iter()
        .map(|hk| {
            edges
                .iter()
                .map(|&j| {
                    let u = &edge_unitaries[j];
                    u.adjoint() * hk * u
                })
                .collect()
        })
        .collect();
    let du = RMatrix::from_fn(m, edges.len(), |k, e| decrement(schedule, k, edges[e]));
    InteractionSet { edges, hbar, du, control_overlaps: control_overlaps(system) }
}

pub fn estimate_jn(iset: &InteractionSet, moments: &SecondMomentModel) -> Result<RobustnessReport> {
    let m = iset.n_controls();
    if moments.n_controls() != m {
        return Err(Error::Dimension(format!(
            "moments describe {} controls, interaction set has {m}",
            moments.n_controls()
        )));
    }
    let delta: Vec<CMatrix> = (0..m).map(|k| iset.delta_h(k)).collect();
    let mut latency = 0.0;
    for k in 0..m {
        for l in 0..m {
            let c = moments.ctau[(k, l)];
            if c != 0.0 {
                latency += c * linalg::trace_product(&delta[k], &delta[l]).re;
            }
        }
    }
    let mut jitter = 0.0;
    if moments.mu0sq != 0.0 {
        for e in 0..iset.edges.len() {
            for k in 0..m {
                for l in 0..m {
                    let jc = moments.jitter_coupling[(k, l)];
                    let prod = iset.du[(k, e)] * iset.du[(l, e)];
                    if jc != 0.0 && prod != 0.0 {
                        jitter += jc * prod * linalg::trace_product(&iset.hbar[k][e], &iset.hbar[l][e]).re;
                    }
                }
            }
        }
        jitter *= moments.mu0sq;
    }
    let smoothness = (0..m).map(|k| iset.du.row(k).iter().map(|d| d * d).sum()).collect();
    Ok(RobustnessReport { jn_total: latency + jitter, jn_latency: latency, jn_jitter: jitter, smoothness })
}

/// `J_N` of a schedule in one call.
pub fn jn_value(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    moments: &SecondMomentModel,
    opts: EstimatorOptions,
) -> Result<f64> {
    Ok(estimate_jn(&interaction_set(system, schedule, opts)?, moments)?.jn_total)
}

fn check_moments(system: &QuantumSystem, schedule: &ControlSchedule, moments: &SecondMomentModel) -> Result<()> {
    if moments.n_controls() != system.n_controls() || schedule.n_controls() != system.n_controls() {
        return Err(Error::Dimension(format!(
            "system has {} controls, schedule {}, moments {}",
            system.n_controls(),
            schedule.n_controls(),
            moments.n_controls()
        )));
    }
    Ok(())
}

/// `J_N` and its exact gradient with respect to every amplitude.
///
/// The gradient has two parts: the explicit dependence through the decrements
/// and the dependence of every `H̄_k^j` on the slices before edge `j`. A slice
/// variation `dP_s` rotates all later edge frames by
/// `X_s = Ū_s† P_s† dP_s Ū_s`, so `dH̄ = [H̄, X_s]`, and the latency term
/// changes by `2 tr(X_s Σ_k [G_k, S_k^(s)])` with `G_k = Σ_l C_kl δH_l` and
/// `S_k^(s)` the partial sum of `δu H̄` over edges after slice `s`. The jitter
/// term only sees `tr(H̄ H̄') = tr(H H')`, which is frame independent.
pub fn jn_with_gradient(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    moments: &SecondMomentModel,
    opts: EstimatorOptions,
) -> Result<(f64, RMatrix)> {
    check_moments(system, schedule, moments)?;
    let m = system.n_controls();
    let slices = schedule.slices();
    let props = system::ideal_slice_propagators(system, schedule);
    let traj = system::trajectory_from_slices(system.dim(), &props);
    let iset = interaction_set_from(system, schedule, &traj.edge_unitaries, opts);
    let report = estimate_jn(&iset, moments)?;
    let mut grad = RMatrix::zeros(m, slices);
    if moments.is_zero() {
        return Ok((report.jn_total, grad));
    }

    let delta: Vec<CMatrix> = (0..m).map(|k| iset.delta_h(k)).collect();
    let dim = system.dim();
    let g: Vec<CMatrix> = (0..m)
        .map(|k| {
            let mut acc = CMatrix::zeros(dim, dim);
            for l in 0..m {
                let c = moments.ctau[(k, l)];
                if c != 0.0 {
                    acc += delta[l].scale(c);
                }
            }
            acc
        })
        .collect();

    // explicit dependence through the decrements
    let edge_pos: Vec<Option<usize>> = {
        let mut pos = vec![None; slices + 1];
        for (e, &j) in iset.edges.iter().enumerate() {
            pos[j] = Some(e);
        }
        pos
    };
    let mut d_du = RMatrix::zeros(m, iset.edges.len());
    for k in 0..m {
        for e in 0..iset.edges.len() {
            let mut v = 2.0 * linalg::trace_product(&iset.hbar[k][e], &g[k]).re;
            if moments.mu0sq != 0.0 {
                let mut jit = 0.0;
                for l in 0..m {
                    jit += moments.jitter_coupling[(k, l)] * iset.du[(l, e)] * iset.control_overlaps[(k, l)];
                }
                v += 2.0 * moments.mu0sq * jit;
            }
            d_du[(k, e)] = v;
        }
    }
    for k in 0..m {
        for s in 0..slices {
            // δu at edge s is u[s-1] - u[s]; at edge s+1 it is u[s] - u[s+1]
            if let Some(e) = edge_pos[s] {
                grad[(k, s)] -= d_du[(k, e)];
            }
            if let Some(e) = edge_pos[s + 1] {
                grad[(k, s)] += d_du[(k, e)];
            }
        }
    }

    // frame rotation of later edges
    let mut suffix: Vec<CMatrix> = vec![CMatrix::zeros(dim, dim); m];
    for s in (0..slices).rev() {
        if let Some(e) = edge_pos[s + 1] {
            for k in 0..m {
                let d = iset.du[(k, e)];
                if d != 0.0 {
                    suffix[k] += iset.hbar[k][e].scale(d);
                }
            }
        }
        let mut w = CMatrix::zeros(dim, dim);
        for k in 0..m {
            w += &g[k] * &suffix[k] - &suffix[k] * &g[k];
        }
        if w.iter().all(|z| *z == C64::ZERO) {
            continue;
        }
        let before = &traj.edge_unitaries[s];
        let after = &traj.edge_unitaries[s + 1];
        let b = before * w * after.adjoint();
        let p = &props[s];
        let y = p.gradient_weights(&b);
        for (k, h) in system.controls().iter().enumerate() {
            grad[(k, s)] += 2.0 * SpectralPropagator::weighted_trace(&y, h).re;
        }
    }
    Ok((report.jn_total, grad))
}

pub fn grad_jn(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    moments: &SecondMomentModel,
    opts: EstimatorOptions,
) -> Result<RMatrix> {
    jn_with_gradient(system, schedule, moments, opts).map(|(_, g)| g)
}

/// Central-difference step for amplitude `u`.
pub fn fd_step(u: f64) -> f64 {
    1e-6 * u.abs().max(1.0)
}

/// Central finite-difference gradient of `J_N`, one coordinate per task.
pub fn grad_jn_fd(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    moments: &SecondMomentModel,
    opts: EstimatorOptions,
) -> Result<RMatrix> {
    check_moments(system, schedule, moments)?;
    let (m, slices) = (schedule.n_controls(), schedule.slices());
    let values: Vec<f64> = (0..m * slices)
        .into_par_iter()
        .map(|idx| {
            let (k, s) = (idx / slices, idx % slices);
            let h = fd_step(schedule.amplitude(k, s));
            let mut plus = schedule.amplitudes().clone();
            plus[(k, s)] += h;
            let mut minus = schedule.amplitudes().clone();
            minus[(k, s)] -= h;
            let jp = jn_value(system, &schedule.with_amplitudes(plus), moments, opts)?;
            let jm = jn_value(system, &schedule.with_amplitudes(minus), moments, opts)?;
            Ok((jp - jm) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    Ok(RMatrix::from_row_slice(m, slices, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::second_moments;
    use crate::operators::build_operator;
    use crate::presets;

    fn single(op: &str) -> QuantumSystem {
        QuantumSystem::new(CMatrix::zeros(2, 2), vec![build_operator(op).unwrap()], vec![0]).unwrap()
    }

    fn reference_moments_single() -> SecondMomentModel {
        let model = crate::noise::ClockNoiseModel::new(
            vec![crate::noise::UniformRange::new(0.0, 0.4)],
            0.05,
            crate::noise::JitterSharing::PerChannel,
            Default::default(),
            0,
        )
        .unwrap();
        second_moments(&model, &single("Z")).unwrap()
    }

    #[test]
    fn idle_system_has_bare_interactions() {
        let sys = presets::cnot_system();
        let zero_drift =
            QuantumSystem::new(CMatrix::zeros(4, 4), sys.controls().to_vec(), sys.channel_of().to_vec()).unwrap();
        let sched = ControlSchedule::constant(1.0, 4, 6, 0.0).unwrap();
        let iset = interaction_set(&zero_drift, &sched, EstimatorOptions::default()).unwrap();
        assert_eq!(iset.edges, vec![1, 2, 3, 4, 5]);
        for k in 0..4 {
            for h in &iset.hbar[k] {
                assert!((h - &sys.controls()[k]).iter().all(|z| z.norm() < 1e-15));
            }
        }
        assert!(iset.du.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn constant_schedule_has_no_decrements_and_zero_jn() {
        let sys = presets::cnot_system();
        let sched = ControlSchedule::constant(1.0, 4, 10, 0.3).unwrap();
        let iset = interaction_set(&sys, &sched, EstimatorOptions::default()).unwrap();
        assert!(iset.du.iter().all(|d| *d == 0.0));
        let moments = second_moments(&presets::clock_noise(true, 0), &sys).unwrap();
        let rep = estimate_jn(&iset, &moments).unwrap();
        assert_eq!(rep.jn_total, 0.0);
    }

    #[test]
    fn x_control_frame_is_unchanged() {
        let sys = single("X");
        let (a, b) = (0.7, -0.2);
        let sched = ControlSchedule::new(1.0, RMatrix::from_row_slice(1, 2, &[a, b])).unwrap();
        let iset = interaction_set(&sys, &sched, EstimatorOptions::default()).unwrap();
        assert!((&iset.hbar[0][0] - &sys.controls()[0]).iter().all(|z| z.norm() < 1e-14));
        assert!((iset.du[(0, 0)] - (a - b)).abs() < 1e-15);
    }

    #[test]
    fn single_z_closed_form() {
        // 2 (a-b)^2 (C + mu0sq) with tr Z^2 = 2
        let sys = single("Z");
        let sched = ControlSchedule::new(1.0, RMatrix::from_row_slice(1, 2, &[1.3, 0.3])).unwrap();
        let moments = reference_moments_single();
        let rep = estimate_jn(&interaction_set(&sys, &sched, Default::default()).unwrap(), &moments).unwrap();
        let expected = 2.0 * (0.16 / 3.0 + 0.0025 / 3.0);
        assert!((rep.jn_total - expected).abs() < 1e-14);
        assert!((rep.jn_total - 0.1083).abs() < 1e-4);
        assert!((rep.jn_latency + rep.jn_jitter - rep.jn_total).abs() < 1e-16);
    }

    #[test]
    fn turn_on_edge_adds_first_amplitude() {
        let sys = single("Z");
        let sched = ControlSchedule::new(1.0, RMatrix::from_row_slice(1, 2, &[0.5, 0.5])).unwrap();
        let opts = EstimatorOptions { include_turn_on: true };
        let iset = interaction_set(&sys, &sched, opts).unwrap();
        assert_eq!(iset.edges, vec![0, 1]);
        assert_eq!(iset.du[(0, 0)], -0.5);
    }

    #[test]
    fn moment_mismatch_rejected() {
        let sys = single("Z");
        let sched = ControlSchedule::constant(1.0, 1, 3, 0.0).unwrap();
        let iset = interaction_set(&sys, &sched, Default::default()).unwrap();
        assert!(estimate_jn(&iset, &SecondMomentModel::zero(2)).is_err());
    }
}
