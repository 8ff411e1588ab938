use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradient::{j0_value, js_with_gradient};
use super::{LearningRateSchedule, OptimizationTrace, OptimizerOptions, PeriodicTest, Recorder, SamplingMode};
use crate::error::Result;
use crate::noise::{build_merged_grid, ClockNoiseModel, MergedTimingGrid};
use crate::system::{ControlSchedule, GateTarget, QuantumSystem};

const DIVERGENCE_FACTOR: f64 = 10.0;
const MAX_CONSECUTIVE_HALVINGS: usize = 5;

/// Noise-sample indices used by iteration `iteration`.
fn batch_indices(opts: &OptimizerOptions, iteration: usize) -> Vec<u64> {
    let b = opts.batch_size as u64;
    match opts.sampling {
        SamplingMode::Fresh => (0..b).map(|i| iteration as u64 * b + i).collect(),
        SamplingMode::FixedPool { size } => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_900d);
            rng.set_stream(iteration as u64);
            (0..b).map(|_| rng.random_range(0..size)).collect()
        }
    }
}

/// Stochastic gradient descent on the batch-averaged noisy gate error.
///
/// Iteration `ℓ` draws `batch_size` realizations from `noise` reseeded with
/// `opts.seed`, so the whole trace is a function of the inputs. A batch whose
/// objective exceeds ten times the first batch's undoes the previous step and
/// halves the learning rate; five such batches in a row abort the run.
pub fn bgrape_optimize(
    system: &QuantumSystem,
    schedule0: &ControlSchedule,
    target: &GateTarget,
    noise: &ClockNoiseModel,
    opts: &OptimizerOptions,
    tester: Option<&PeriodicTest>,
) -> Result<(ControlSchedule, OptimizationTrace)> {
    opts.validate()?;
    let train = noise.with_seed(opts.seed);
    let mut rec = Recorder::new(tester);
    let mut u = schedule0.clone();
    let j0 = j0_value(system, &u, target)?;
    rec.record(0, j0, f64::NAN, 0.0, true, (system, &u, target))?;

    let mut lr_scale = 1.0;
    let mut halvings = 0;
    let mut first_batch: Option<f64> = None;
    let mut previous = u.clone();
    for iter in 0..opts.max_iters {
        let batch = batch_indices(opts, iter)
            .into_iter()
            .map(|i| build_merged_grid(&u, &train.sample(i, system.channel_of(), u.slices())))
            .collect::<Result<Vec<MergedTimingGrid>>>()?;
        let (js, grad) = js_with_gradient(system, &u, target, &batch)?;
        let reference = *first_batch.get_or_insert(js);
        if js > DIVERGENCE_FACTOR * reference {
            u = previous.clone();
            lr_scale *= 0.5;
            halvings += 1;
            if halvings >= MAX_CONSECUTIVE_HALVINGS {
                rec.trace.note = Some(format!("diverged: {halvings} consecutive learning-rate halvings"));
                break;
            }
            continue;
        }
        halvings = 0;
        let alpha = match opts.lr_schedule {
            LearningRateSchedule::Constant => opts.learning_rate,
            LearningRateSchedule::InvSqrt => opts.learning_rate / ((iter + 1) as f64).sqrt(),
        } * lr_scale;
        previous = u.clone();
        u = u.stepped(&grad, alpha);
        let j0 = j0_value(system, &u, target)?;
        rec.record(iter + 1, j0, js, alpha, false, (system, &u, target))?;
    }
    rec.trace.converged = rec.trace.note.is_none();
    rec.finish((system, &u, target))?;
    Ok((u, rec.trace))
}
