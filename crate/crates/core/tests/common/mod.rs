#![allow(dead_code)]

use clockrobust::estimator::{self, EstimatorOptions};
use clockrobust::linalg::{self, CMatrix, RMatrix, C64};
use clockrobust::montecarlo;
use clockrobust::noise::{self, build_merged_grid, ClockNoiseModel, MergedTimingGrid, NoiseSample};
use clockrobust::operators::build_operator;
use clockrobust::optimizers::{self, OptimizerOptions};
use clockrobust::presets;
use clockrobust::system::{propagate_ideal, propagate_noisy, ControlSchedule, GateTarget, PhaseMode, QuantumSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn cnot_target() -> GateTarget {
    GateTarget::new(presets::cnot_target(presets::CNOT_PHASE), PhaseMode::Plain).unwrap()
}

pub fn cnot_schedule(seed: u64) -> ControlSchedule {
    presets::random_schedule(
        &presets::cnot_system(),
        presets::SLICES,
        presets::SAMPLE_PERIOD,
        presets::INITIAL_AMPLITUDE,
        seed,
    )
}

pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn unitarity_defect(u: &CMatrix) -> f64 {
    max_diff(&(u.adjoint() * u), &linalg::identity(u.nrows()))
}

fn grid(schedule: &ControlSchedule, model: &ClockNoiseModel, index: u64, system: &QuantumSystem) -> MergedTimingGrid {
    build_merged_grid(schedule, &model.sample(index, system.channel_of(), schedule.slices())).unwrap()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn unitarity() -> Check {
    let sys = presets::cnot_system();
    let model = presets::clock_noise(true, 5);
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let s = cnot_schedule(seed);
        for u in &propagate_ideal(&sys, &s).unwrap().edge_unitaries {
            worst = worst.max(unitarity_defect(u));
        }
        for i in 0..10 {
            worst = worst.max(unitarity_defect(&propagate_noisy(&sys, &s, &grid(&s, &model, i, &sys)).unwrap()));
        }
    }
    ensure(worst < 1e-10, format!("max |U†U - I| = {worst:.2e}"))
}

pub fn zero_noise_matches_ideal() -> Check {
    let sys = presets::cnot_system();
    let model = ClockNoiseModel::noiseless(2);
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let s = cnot_schedule(seed);
        let noisy = propagate_noisy(&sys, &s, &grid(&s, &model, seed, &sys)).unwrap();
        worst = worst.max(max_diff(&noisy, propagate_ideal(&sys, &s).unwrap().final_unitary()));
    }
    ensure(worst < 1e-12, format!("max deviation {worst:.2e}"))
}

/// Drift and controls all diagonal: the propagator is the exponential of the
/// accumulated pulse areas.
pub fn commuting_oracle() -> Check {
    let d = 0.3;
    let drift = build_operator("Z⊗Z").unwrap().scale(d);
    let controls = vec![build_operator("Z⊗I").unwrap(), build_operator("I⊗Z").unwrap()];
    let diag: Vec<Vec<f64>> = controls.iter().map(|c| (0..4).map(|i| c[(i, i)].re).collect()).collect();
    let zz: Vec<f64> = (0..4).map(|i| drift[(i, i)].re).collect();
    let sys = QuantumSystem::new(drift, controls, vec![0, 1]).unwrap();
    let m = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let amps = RMatrix::from_fn(2, m, |_, _| rng.random_range(-1.0..1.0));
    let s = ControlSchedule::new(1.0, amps).unwrap();
    let model = presets::clock_noise(true, 3);
    let horizon = s.horizon();

    let mut worst = 0.0f64;
    for index in 0..20 {
        let sample = model.sample(index, sys.channel_of(), m);
        let u = propagate_noisy(&sys, &s, &build_merged_grid(&s, &sample).unwrap()).unwrap();
        let areas: Vec<f64> = (0..2)
            .map(|k| {
                let edge = |j: usize| {
                    if j == m {
                        horizon
                    } else {
                        (s.edge_time(j) + sample.offset(k, j)).clamp(0.0, horizon)
                    }
                };
                (0..m).map(|j| s.amplitude(k, j) * (edge(j + 1) - edge(j))).sum()
            })
            .collect();
        let mut expected = CMatrix::zeros(4, 4);
        for i in 0..4 {
            let phase = zz[i] * horizon + areas[0] * diag[0][i] + areas[1] * diag[1][i];
            expected[(i, i)] = C64::from_polar(1.0, -phase);
        }
        worst = worst.max(max_diff(&u, &expected));
    }
    ensure(worst < 1e-10, format!("max deviation {worst:.2e}"))
}

fn coordinates(rows: usize, cols: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (rng.random_range(0..rows), rng.random_range(0..cols))).collect()
}

/// Largest relative deviation between `grad` and a central difference of
/// `f` at 20 random coordinates.
fn fd_relative_error(s: &ControlSchedule, grad: &RMatrix, f: impl Fn(&ControlSchedule) -> f64, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for (k, j) in coordinates(s.n_controls(), s.slices(), 20, seed) {
        let h = estimator::fd_step(s.amplitude(k, j));
        let shifted = |delta: f64| {
            let mut a = s.amplitudes().clone();
            a[(k, j)] += delta;
            f(&s.with_amplitudes(a))
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        worst = worst.max((grad[(k, j)] - fd).abs() / fd.abs().max(f64::MIN_POSITIVE));
    }
    worst
}

pub fn gradient_j0() -> Check {
    let (sys, target, s) = (presets::cnot_system(), cnot_target(), cnot_schedule(1));
    let g = optimizers::grad_j0(&sys, &s, &target).unwrap();
    let err = fd_relative_error(&s, &g, |x| optimizers::j0_value(&sys, x, &target).unwrap(), 1);
    ensure(err < 1e-5, format!("J0 gradient relative error {err:.2e}"))
}

pub fn gradient_js() -> Check {
    let (sys, target, s) = (presets::cnot_system(), cnot_target(), cnot_schedule(2));
    let model = presets::clock_noise(true, 4);
    let batch: Vec<MergedTimingGrid> = (0..5).map(|i| grid(&s, &model, i, &sys)).collect();
    let g = optimizers::grad_js(&sys, &s, &target, &batch).unwrap();
    let js = |x: &ControlSchedule| {
        batch.iter().map(|b| target.error(&propagate_noisy(&sys, x, b).unwrap()).unwrap()).sum::<f64>()
            / batch.len() as f64
    };
    let err = fd_relative_error(&s, &g, js, 2);
    ensure(err < 1e-6, format!("J_S gradient relative error {err:.2e}"))
}

pub fn gradient_jn() -> Check {
    let sys = presets::cnot_system();
    let moments = noise::second_moments(&presets::clock_noise(true, 0), &sys).unwrap();
    let mut worst = 0.0f64;
    for (seed, include_turn_on) in [(3, false), (4, true)] {
        let s = cnot_schedule(seed);
        let opts = EstimatorOptions { include_turn_on };
        let g = estimator::grad_jn(&sys, &s, &moments, opts).unwrap();
        worst = worst.max(fd_relative_error(&s, &g, |x| estimator::jn_value(&sys, x, &moments, opts).unwrap(), seed));
    }
    ensure(worst < 1e-5, format!("J_N gradient relative error {worst:.2e}"))
}

pub fn projection_orthogonality() -> Check {
    let sys = presets::cnot_system();
    let moments = noise::second_moments(&presets::clock_noise(true, 0), &sys).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let s = cnot_schedule(seed);
        let g0 = optimizers::grad_j0(&sys, &s, &cnot_target()).unwrap();
        let gn = estimator::grad_jn(&sys, &s, &moments, EstimatorOptions::default()).unwrap();
        let d = optimizers::projected_direction(&gn, &g0);
        worst = worst.max(d.dot(&g0).abs() / (d.norm() * g0.norm()));
        let jac = optimizers::unitary_jacobian(&sys, &s).unwrap();
        let dk = optimizers::kernel_projection(&gn, &jac);
        let flat = RMatrix::from_column_slice(dk.len(), 1, dk.as_slice());
        worst = worst.max((&jac * flat).norm() / (jac.norm() * dk.norm()));
    }
    ensure(worst < 1e-10, format!("max relative overlap {worst:.2e}"))
}

pub fn quadratic_scaling() -> Check {
    let sys = presets::cnot_system();
    let s = cnot_schedule(6);
    let model = presets::clock_noise(true, 0);
    let opts = EstimatorOptions::default();
    let jn =
        |m: &ClockNoiseModel| estimator::jn_value(&sys, &s, &noise::second_moments(m, &sys).unwrap(), opts).unwrap();
    let base = jn(&model);
    let mut worst = 0.0f64;
    for factor in [0.1, 0.2, 0.5, 2.0] {
        let scaled = jn(&model.scaled(factor).unwrap());
        worst = worst.max((scaled / (factor * factor * base) - 1.0).abs());
    }
    ensure(worst < 1e-12, format!("max relative deviation from λ² scaling {worst:.2e}"))
}

pub fn seed_determinism() -> Check {
    let (sys, target) = (presets::cnot_system(), cnot_target());
    let s = cnot_schedule(7);
    let model = presets::clock_noise(true, 11);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let report = montecarlo::test_average_error(&sys, &s, &target, &model, 300, 9).unwrap();
            let opts = OptimizerOptions { max_iters: 20, learning_rate: 0.05, seed: 3, ..Default::default() };
            let (b, _) = optimizers::bgrape_optimize(&sys, &s, &target, &model, &opts, None).unwrap();
            (report.errors, b.amplitudes().clone())
        })
    };
    let first = run(1);
    let same = [run(1), run(3)].iter().all(|r| {
        r.0.iter().map(|x| x.to_bits()).eq(first.0.iter().map(|x| x.to_bits()))
            && r.1.iter().map(|x| x.to_bits()).eq(first.1.iter().map(|x| x.to_bits()))
    });
    ensure(same, "Monte-Carlo errors and b-GRAPE iterates across reruns and thread counts".into())
}

pub fn property_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("unitarity", unitarity()),
        ("zero-noise propagation", zero_noise_matches_ideal()),
        ("commuting closed form", commuting_oracle()),
        ("J0 gradient", gradient_j0()),
        ("J_S gradient", gradient_js()),
        ("J_N gradient", gradient_jn()),
        ("projection orthogonality", projection_orthogonality()),
        ("quadratic scaling", quadratic_scaling()),
        ("seed determinism", seed_determinism()),
    ]
}

pub fn noise_sample_latency(latency: &[f64]) -> NoiseSample {
    NoiseSample::latency_only(latency, presets::cnot_system().channel_of(), presets::SLICES)
}
