//! The two-qubit CNOT benchmark: `g·Z⊗Z` coupling, x/y drives on each qubit
//! delivered through one clock channel per qubit.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{CMatrix, RMatrix, C64};
use crate::noise::{ClockNoiseModel, EdgeConventions, JitterSharing, UniformRange};
use crate::operators::build_operator;
use crate::system::{ControlSchedule, QuantumSystem};

/// ZZ coupling, 2π × 10 MHz in rad/ns.
pub const COUPLING: f64 = TAU * 0.01;
pub const SAMPLE_PERIOD: f64 = 1.0;
pub const SLICES: usize = 50;
pub const LATENCY_MAX: f64 = 0.4;
pub const JITTER_HALF_WIDTH: f64 = 0.05;
/// Global phase that moves CNOT (det −1) into SU(4).
pub const CNOT_PHASE: f64 = FRAC_PI_4;
/// Default half-range of random initial amplitudes, 2π × 20 MHz.
pub const INITIAL_AMPLITUDE: f64 = TAU * 0.02;

pub const DRIFT_EXPR: &str = "2*pi*0.01 Z⊗Z";
pub const CONTROL_EXPRS: [(&str, usize); 4] = [("X⊗I", 0), ("i(SP - SM)⊗I", 0), ("I⊗X", 1), ("I⊗i(SP - SM)", 1)];

pub fn cnot_system() -> QuantumSystem {
    let drift = build_operator(DRIFT_EXPR).expect("preset drift parses");
    let controls = CONTROL_EXPRS.iter().map(|(e, _)| build_operator(e).expect("preset control parses")).collect();
    let channels = CONTROL_EXPRS.iter().map(|(_, c)| *c).collect();
    QuantumSystem::new(drift, controls, channels).expect("preset system is valid")
}

/// `e^{iφ}·CNOT` with qubit 1 as control.
pub fn cnot_target(phase: f64) -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    let p = C64::from_polar(1.0, phase);
    m[(0, 0)] = p;
    m[(1, 1)] = p;
    m[(2, 3)] = p;
    m[(3, 2)] = p;
    m
}

/// Latency `U(0, 0.4)` ns on both channels, optionally with jitter
/// `U(−0.05, 0.05)` ns.
pub fn clock_noise(with_jitter: bool, seed: u64) -> ClockNoiseModel {
    ClockNoiseModel::new(
        vec![UniformRange::new(0.0, LATENCY_MAX); 2],
        if with_jitter { JITTER_HALF_WIDTH } else { 0.0 },
        JitterSharing::PerChannel,
        EdgeConventions::default(),
        seed,
    )
    .expect("preset noise is valid")
}

/// I.i.d. uniform amplitudes in `[-amplitude, amplitude]`.
pub fn random_schedule(
    system: &QuantumSystem,
    slices: usize,
    sample_period: f64,
    amplitude: f64,
    seed: u64,
) -> ControlSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = system.n_controls();
    let mut amps = RMatrix::zeros(m, slices);
    // row-major draw order so a schedule is reproducible from its seed alone
    for k in 0..m {
        for j in 0..slices {
            amps[(k, j)] = amplitude * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    ControlSchedule::new(sample_period, amps).expect("finite random schedule")
}
