//! Monte-Carlo robustness evaluation: tested average error over random clock
//! noise, log-binned error histograms, deterministic latency sweeps and the
//! waveform smoothness metric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::noise::{build_merged_grid, ClockNoiseModel, EdgeConventions, NoiseSample};
use crate::system::{propagate_noisy, ControlSchedule, GateTarget, QuantumSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub sample_count: usize,
    pub seed: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub standard_error: f64,
    pub min: f64,
    pub max: f64,
    /// Standardized third moment of `log10(error)` over positive errors.
    pub log10_skewness: f64,
    #[serde(skip)]
    pub errors: Vec<f64>,
}

impl TestReport {
    pub fn from_errors(errors: Vec<f64>, seed: u64) -> Self {
        let n = errors.len();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let std_dev = var.sqrt();
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            sample_count: n,
            seed,
            mean,
            std_dev,
            standard_error: std_dev / (n as f64).sqrt(),
            min,
            max,
            log10_skewness: log_skewness(&errors),
            errors,
        }
    }
}

fn log_skewness(errors: &[f64]) -> f64 {
    let logs: Vec<f64> = errors.iter().filter(|e| **e > 0.0).map(|e| e.log10()).collect();
    let n = logs.len() as f64;
    if logs.len() < 3 {
        return 0.0;
    }
    let mean = logs.iter().sum::<f64>() / n;
    let m2 = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = logs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Gate error of one noise realization.
pub fn sample_error(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    sample: &NoiseSample,
) -> Result<f64> {
    let grid = build_merged_grid(schedule, sample)?;
    target.error(&propagate_noisy(system, schedule, &grid)?)
}

/// Average gate error over `samples` realizations drawn with `seed`
/// (indices `0..samples`). Parallel, with results reduced in index order.
pub fn test_average_error(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    model: &ClockNoiseModel,
    samples: usize,
    seed: u64,
) -> Result<TestReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let model = model.with_seed(seed);
    let channel_of = system.channel_of();
    let errors = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let sample = model.sample(i, channel_of, schedule.slices());
            sample_error(system, schedule, target, &sample)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TestReport::from_errors(errors, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// `bins` log10-spaced bins spanning the observed error range. Zero errors
/// land in the first bin.
pub fn error_histogram(report: &TestReport, bins: usize) -> Result<Vec<HistogramBin>> {
    if report.errors.is_empty() {
        return Err(Error::InvalidArgument("histogram needs the raw errors".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be >= 1".into()));
    }
    let (min, max) = (report.min, report.max);
    if min == max {
        return Ok(vec![HistogramBin { bin_low: min, bin_high: max, count: report.errors.len() }]);
    }
    let lo = if min > 0.0 {
        min
    } else {
        report.errors.iter().copied().filter(|e| *e > 0.0).fold(f64::INFINITY, f64::min).min(max)
    };
    let (llo, lhi) = (lo.log10(), max.log10());
    if llo == lhi {
        return Ok(vec![HistogramBin { bin_low: min, bin_high: max, count: report.errors.len() }]);
    }
    let width = (lhi - llo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for e in &report.errors {
        let idx = if *e <= lo { 0 } else { (((e.log10() - llo) / width) as usize).min(bins - 1) };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_low: if i == 0 { min } else { 10f64.powf(llo + i as f64 * width) },
            bin_high: if i + 1 == bins { max } else { 10f64.powf(llo + (i + 1) as f64 * width) },
            count,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSurface {
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    /// `errors[(i, j)]` at `(tau1[i], tau2[j])`.
    pub errors: RMatrix,
    pub argmin: (usize, usize),
    pub min_error: f64,
}

impl SweepSurface {
    pub fn argmin_taus(&self) -> (f64, f64) {
        (self.tau1[self.argmin.0], self.tau2[self.argmin.1])
    }

    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let below = self.errors.iter().filter(|e| **e < threshold).count();
        below as f64 / self.errors.len() as f64
    }
}

/// `n` equally spaced points over `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Gate error over a grid of fixed channel latencies, without jitter.
pub fn latency_sweep(
    system: &QuantumSystem,
    schedule: &ControlSchedule,
    target: &GateTarget,
    tau1: &[f64],
    tau2: &[f64],
    conventions: EdgeConventions,
) -> Result<SweepSurface> {
    if system.n_channels() != 2 {
        return Err(Error::InvalidArgument(format!(
            "latency sweep needs exactly 2 channels, system has {}",
            system.n_channels()
        )));
    }
    let ts = schedule.sample_period();
    for (name, grid) in [("tau1", tau1), ("tau2", tau2)] {
        if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!("{name} grid must be nonempty and strictly increasing")));
        }
        if grid.iter().any(|t| !(0.0..ts).contains(t)) {
            return Err(Error::InvalidArgument(format!("{name} values must lie in [0, {ts}) to keep edges ordered")));
        }
    }
    let n2 = tau2.len();
    let values = (0..tau1.len() * n2)
        .into_par_iter()
        .map(|idx| {
            let sample = NoiseSample::deterministic(
                &[tau1[idx / n2], tau2[idx % n2]],
                system.channel_of(),
                schedule.slices(),
                conventions,
            );
            sample_error(system, schedule, target, &sample)
        })
        .collect::<Result<Vec<f64>>>()?;
    let errors = RMatrix::from_row_slice(tau1.len(), n2, &values);
    let (mut argmin, mut min_error) = ((0, 0), f64::INFINITY);
    for i in 0..tau1.len() {
        for j in 0..n2 {
            if errors[(i, j)] < min_error {
                min_error = errors[(i, j)];
                argmin = (i, j);
            }
        }
    }
    Ok(SweepSurface { tau1: tau1.to_vec(), tau2: tau2.to_vec(), errors, argmin, min_error })
}

/// `Σ_j (u_k^j − u_k^{j+1})²` over interior edges, per control.
pub fn smoothness_metric(schedule: &ControlSchedule) -> Vec<f64> {
    let a = schedule.amplitudes();
    (0..a.nrows()).map(|k| (1..a.ncols()).map(|j| (a[(k, j - 1)] - a[(k, j)]).powi(2)).sum()).collect()
}
