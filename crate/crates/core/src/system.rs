//! Controlled quantum systems, piecewise-constant schedules and unitary
//! propagation on ideal and clock-perturbed timing grids.
//!
//! Units: time in ns, Hamiltonian entries in rad/ns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix, SpectralPropagator, C64};
use crate::noise::MergedTimingGrid;

/// Drift plus control Hamiltonians, with each control assigned to a clock
/// channel (zero-based ids).
#[derive(Clone, Debug)]
pub struct QuantumSystem {
    drift: CMatrix,
    controls: Vec<CMatrix>,
    channel_of: Vec<usize>,
    channels: usize,
}

impl QuantumSystem {
    pub fn new(drift: CMatrix, controls: Vec<CMatrix>, channel_of: Vec<usize>) -> Result<Self> {
        linalg::check_hermitian(&drift, "drift Hamiltonian")?;
        let dim = drift.nrows();
        if controls.is_empty() {
            return Err(Error::InvalidArgument("system needs at least one control".into()));
        }
        for (k, h) in controls.iter().enumerate() {
            if h.nrows() != dim || h.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "control {k} is {}x{}, drift is {dim}x{dim}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            linalg::check_hermitian(h, &format!("control Hamiltonian {k}"))?;
        }
        if channel_of.len() != controls.len() {
            return Err(Error::Dimension(format!(
                "{} channel assignments for {} controls",
                channel_of.len(),
                controls.len()
            )));
        }
        let channels = channel_of.iter().max().map_or(0, |c| c + 1);
        for c in 0..channels {
            if !channel_of.contains(&c) {
                return Err(Error::InvalidArgument(format!("channel {c} carries no control")));
            }
        }
        Ok(Self { drift, controls, channel_of, channels })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn controls(&self) -> &[CMatrix] {
        &self.controls
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn channel_of(&self) -> &[usize] {
        &self.channel_of
    }

    pub fn n_channels(&self) -> usize {
        self.channels
    }

    /// `H₀ + Σ_k a_k H_k`.
    pub fn hamiltonian(&self, amplitudes: &[f64]) -> CMatrix {
        let mut h = self.drift.clone();
        for (a, hk) in amplitudes.iter().zip(&self.controls) {
            if *a != 0.0 {
                h += hk.scale(*a);
            }
        }
        h
    }

    fn check_schedule(&self, schedule: &ControlSchedule) -> Result<()> {
        if schedule.n_controls() != self.n_controls() {
            return Err(Error::Dimension(format!(
                "schedule has {} control rows, system has {} controls",
                schedule.n_controls(),
                self.n_controls()
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant amplitudes `u_k^j` on the ideal clock grid: row `k` is a
/// control, column `j` the slice `[j·T_s, (j+1)·T_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    sample_period: f64,
    amplitudes: RMatrix,
    amplitude_bound: Option<f64>,
}

impl ControlSchedule {
    pub fn new(sample_period: f64, amplitudes: RMatrix) -> Result<Self> {
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::InvalidArgument(format!("sample period must be positive, got {sample_period}")));
        }
        if amplitudes.ncols() == 0 || amplitudes.nrows() == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one control and slice".into()));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("schedule amplitudes must be finite".into()));
        }
        Ok(Self { sample_period, amplitudes, amplitude_bound: None })
    }

    pub fn constant(sample_period: f64, controls: usize, slices: usize, value: f64) -> Result<Self> {
        Self::new(sample_period, RMatrix::from_element(controls, slices, value))
    }

    /// Attaches a box bound `|u| ≤ bound`; existing amplitudes must comply.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::InvalidArgument(format!("amplitude bound must be positive, got {bound}")));
        }
        if self.amplitudes.iter().any(|a| a.abs() > bound) {
            return Err(Error::InvalidArgument(format!("amplitudes exceed the bound {bound}")));
        }
        self.amplitude_bound = Some(bound);
        Ok(self)
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn slices(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn n_controls(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn horizon(&self) -> f64 {
        self.slices() as f64 * self.sample_period
    }

    pub fn amplitudes(&self) -> &RMatrix {
        &self.amplitudes
    }

    pub fn amplitude_bound(&self) -> Option<f64> {
        self.amplitude_bound
    }

    pub fn amplitude(&self, control: usize, slice: usize) -> f64 {
        self.amplitudes[(control, slice)]
    }

    /// Ideal edge time `j·T_s`.
    pub fn edge_time(&self, edge: usize) -> f64 {
        edge as f64 * self.sample_period
    }

    /// Returns a copy with new amplitudes, clipped to the box bound if any.
    pub fn with_amplitudes(&self, amplitudes: RMatrix) -> Self {
        assert_eq!(amplitudes.shape(), self.amplitudes.shape(), "amplitude shape changed");
        let mut out = self.clone();
        out.amplitudes = amplitudes;
        if let Some(b) = self.amplitude_bound {
            out.amplitudes.apply(|a| *a = a.clamp(-b, b));
        }
        out
    }

    /// `u ← u - step · direction`, respecting the box bound.
    pub fn stepped(&self, direction: &RMatrix, step: f64) -> Self {
        self.with_amplitudes(&self.amplitudes - direction.scale(step))
    }
}

/// Ideal edge unitaries `Ū(j·T_s)`, `j = 0..=M`.
#[derive(Clone, Debug)]
pub struct UnitaryTrajectory {
    pub edge_unitaries: Vec<CMatrix>,
}

impl UnitaryTrajectory {
    pub fn final_unitary(&self) -> &CMatrix {
        self.edge_unitaries.last().expect("trajectory always holds the identity")
    }

    pub fn at_edge(&self, edge: usize) -> &CMatrix {
        &self.edge_unitaries[edge]
    }
}

/// How the gate error treats a global phase on the realized unitary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// `‖U - U_f‖_F²`
    #[default]
    Plain,
    /// `2N - 2|tr(U_f† U)|`, the plain error minimized over a global phase.
    PhaseInvariant,
}

pub fn gate_error_j0(u: &CMatrix, target: &CMatrix, mode: PhaseMode) -> Result<f64> {
    if u.shape() != target.shape() {
        return Err(Error::Dimension(format!("unitary is {:?}, target is {:?}", u.shape(), target.shape())));
    }
    Ok(gate_error_unchecked(u, target, mode))
}

pub(crate) fn gate_error_unchecked(u: &CMatrix, target: &CMatrix, mode: PhaseMode) -> f64 {
    match mode {
        PhaseMode::Plain => linalg::frobenius_sq(&(u - target)),
        PhaseMode::PhaseInvariant => {
            let n = u.nrows() as f64;
            let overlap = linalg::trace_product(&target.adjoint(), u);
            (2.0 * n - 2.0 * overlap.norm()).max(0.0)
        }
    }
}

/// Target gate together with the error convention used against it.
#[derive(Clone, Debug)]
pub struct GateTarget {
    pub unitary: CMatrix,
    pub phase_mode: PhaseMode,
}

impl GateTarget {
    pub fn new(unitary: CMatrix, phase_mode: PhaseMode) -> Result<Self> {
        if !unitary.is_square() {
            return Err(Error::Dimension("target must be square".into()));
        }
        let defect = linalg::unitarity_defect(&unitary);
        if defect > 1e-8 {
            return Err(Error::InvalidArgument(format!("target is not unitary (defect {defect:e})")));
        }
        Ok(Self { unitary, phase_mode })
    }

    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn error(&self, u: &CMatrix) -> Result<f64> {
        gate_error_j0(u, &self.unitary, self.phase_mode)
    }
}

/// Per-slice spectral propagators of the ideally clocked schedule.
pub(crate) fn ideal_slice_propagators(system: &QuantumSystem, schedule: &ControlSchedule) -> Vec<SpectralPropagator> {
    let m = system.n_controls();
    let mut amps = vec![0.0; m];
    (0..schedule.slices())
        .map(|s| {
            for (k, a) in amps.iter_mut().enumerate() {
                *a = schedule.amplitude(k, s);
            }
            SpectralPropagator::new(&system.hamiltonian(&amps), schedule.sample_period())
        })
        .collect()
}

pub fn propagate_ideal(system: &QuantumSystem, schedule: &ControlSchedule) -> Result<UnitaryTrajectory> {
    system.check_schedule(schedule)?;
    let props = ideal_slice_propagators(system, schedule);
    Ok(trajectory_from_slices(system.dim(), &props))
}

pub(crate) fn trajectory_from_slices(dim: usize, props: &[SpectralPropagator]) -> UnitaryTrajectory {
    let mut edge_unitaries = Vec::with_capacity(props.len() + 1);
    edge_unitaries.push(linalg::identity(dim));
    for p in props {
        let next = &p.propagator * edge_unitaries.last().unwrap();
        edge_unitaries.push(next);
    }
    UnitaryTrajectory { edge_unitaries }
}

/// Final propagator `U(T)` under the clock-perturbed waveform described by
/// `grid`.
pub fn propagate_noisy(system: &QuantumSystem, schedule: &ControlSchedule, grid: &MergedTimingGrid) -> Result<CMatrix> {
    system.check_schedule(schedule)?;
    grid.check_compatible(schedule)?;
    let mut u = linalg::identity(system.dim());
    let mut amps = vec![0.0; system.n_controls()];
    for seg in 0..grid.segment_count() {
        grid.fill_amplitudes(schedule, seg, &mut amps);
        let p = SpectralPropagator::new(&system.hamiltonian(&amps), grid.duration(seg));
        u = &p.propagator * u;
    }
    Ok(u)
}

/// Convenience for tests and reports: `e^{iφ} U`.
pub fn with_global_phase(u: &CMatrix, phase: f64) -> CMatrix {
    u * C64::from_polar(1.0, phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_propagator;
    use crate::noise::{ClockNoiseModel, NoiseSample};
    use crate::operators::build_operator;
    use std::f64::consts::PI;

    fn single_z() -> QuantumSystem {
        let z = build_operator("Z").unwrap();
        QuantumSystem::new(CMatrix::zeros(2, 2), vec![z], vec![0]).unwrap()
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_field_gives_identity_everywhere() {
        let sys = single_z();
        let sched = ControlSchedule::constant(1.0, 1, 5, 0.0).unwrap();
        let traj = propagate_ideal(&sys, &sched).unwrap();
        assert_eq!(traj.edge_unitaries.len(), 6);
        for u in &traj.edge_unitaries {
            assert!(max_diff(u, &linalg::identity(2)) < 1e-15);
        }
    }

    #[test]
    fn commuting_slices_add_areas() {
        let sys = single_z();
        let sched = ControlSchedule::new(1.0, RMatrix::from_row_slice(1, 2, &[1.0, 3.0])).unwrap();
        let traj = propagate_ideal(&sys, &sched).unwrap();
        let expected = hermitian_propagator(&build_operator("Z").unwrap(), 4.0).unwrap();
        assert!(max_diff(traj.final_unitary(), &expected) < 1e-12);
    }

    #[test]
    fn latency_shifts_area_in_commuting_case() {
        let sys = single_z();
        let sched = ControlSchedule::new(1.0, RMatrix::from_row_slice(1, 2, &[1.0, 3.0])).unwrap();
        let sample = NoiseSample::latency_only(&[0.2], sys.channel_of(), 2);
        let grid = crate::noise::build_merged_grid(&sched, &sample).unwrap();
        let u = propagate_noisy(&sys, &sched, &grid).unwrap();
        let expected = hermitian_propagator(&build_operator("Z").unwrap(), 3.4).unwrap();
        assert!(max_diff(&u, &expected) < 1e-12);
    }

    #[test]
    fn constant_field_loses_only_turn_on_gap() {
        let x = build_operator("X").unwrap();
        let sys = QuantumSystem::new(CMatrix::zeros(2, 2), vec![x.clone()], vec![0]).unwrap();
        let (u0, tau, m) = (0.37, 0.15, 6);
        let sched = ControlSchedule::constant(1.0, 1, m, u0).unwrap();
        let sample = NoiseSample::latency_only(&[tau], sys.channel_of(), m);
        let grid = crate::noise::build_merged_grid(&sched, &sample).unwrap();
        let u = propagate_noisy(&sys, &sched, &grid).unwrap();
        let expected = hermitian_propagator(&x, u0 * (m as f64 - tau)).unwrap();
        assert!(max_diff(&u, &expected) < 1e-12);
    }

    #[test]
    fn zero_noise_grid_reproduces_ideal() {
        let sys = crate::presets::cnot_system();
        let sched = crate::presets::random_schedule(&sys, 50, 1.0, 0.12, 3);
        let model = ClockNoiseModel::noiseless(sys.n_channels());
        let sample = model.sample(0, sys.channel_of(), sched.slices());
        let grid = crate::noise::build_merged_grid(&sched, &sample).unwrap();
        let noisy = propagate_noisy(&sys, &sched, &grid).unwrap();
        let ideal = propagate_ideal(&sys, &sched).unwrap();
        assert!(max_diff(&noisy, ideal.final_unitary()) < 1e-12);
    }

    #[test]
    fn gate_error_phase_handling() {
        let target = crate::presets::cnot_target(0.0);
        let rotated = with_global_phase(&target, PI / 2.0);
        assert!(gate_error_j0(&target, &target, PhaseMode::Plain).unwrap() < 1e-15);
        let plain = gate_error_j0(&rotated, &target, PhaseMode::Plain).unwrap();
        assert!((plain - 8.0).abs() < 1e-12);
        let inv = gate_error_j0(&rotated, &target, PhaseMode::PhaseInvariant).unwrap();
        assert!(inv.abs() < 1e-12);
    }

    #[test]
    fn gate_error_rejects_dimension_mismatch() {
        let a = linalg::identity(2);
        let b = linalg::identity(4);
        assert!(matches!(gate_error_j0(&a, &b, PhaseMode::Plain), Err(Error::Dimension(_))));
    }

    #[test]
    fn schedule_row_mismatch_is_rejected() {
        let sys = single_z();
        let sched = ControlSchedule::constant(1.0, 2, 3, 0.0).unwrap();
        assert!(matches!(propagate_ideal(&sys, &sched), Err(Error::Dimension(_))));
    }

    #[test]
    fn channel_without_control_is_rejected() {
        let z = build_operator("Z").unwrap();
        let err = QuantumSystem::new(CMatrix::zeros(2, 2), vec![z], vec![1]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
