//! Clock-noise model: per-channel latency, per-edge jitter, their second
//! moments, and the merged timing grid a noisy realization induces.
//!
//! Edge `j` of control `k` (for `j = 0..M-1`, where `j = 0` is the turn-on
//! edge) fires at `j·T_s + δt_k^j` with `δt_k^j = τ_channel(k) + ξ^j`. The
//! final edge at `T` is not perturbed and anything shifted past `T` is
//! clipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::system::{ControlSchedule, QuantumSystem};

/// Breakpoints closer than this (ns) are merged into one.
const BREAKPOINT_MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

impl UniformRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// Raw second moment `⟨x²⟩ = (a² + ab + b²)/3`.
    pub fn second_moment(&self) -> f64 {
        let (a, b) = (self.min, self.max);
        (a * a + a * b + b * b) / 3.0
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        self.min + (self.max - self.min) * u
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterSharing {
    /// One jitter sequence per channel, shared by all of its controls.
    #[default]
    PerChannel,
    /// Independent jitter for every control.
    PerControl,
}

/// Field seen by a control before its (delayed) turn-on edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnsetField {
    #[default]
    Zero,
    HoldFirst,
}

/// Edge conventions shared by random and deterministic noise samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeConventions {
    pub shift_turn_on: bool,
    pub onset: OnsetField,
}

impl Default for EdgeConventions {
    fn default() -> Self {
        Self { shift_turn_on: true, onset: OnsetField::Zero }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClockNoiseModel {
    channel_latency: Vec<UniformRange>,
    jitter_half_width: f64,
    jitter_sharing: JitterSharing,
    conventions: EdgeConventions,
    seed: u64,
}

impl ClockNoiseModel {
    pub fn new(
        channel_latency: Vec<UniformRange>,
        jitter_half_width: f64,
        jitter_sharing: JitterSharing,
        conventions: EdgeConventions,
        seed: u64,
    ) -> Result<Self> {
        if channel_latency.is_empty() {
            return Err(Error::NoiseModel("at least one channel is required".into()));
        }
        for (c, r) in channel_latency.iter().enumerate() {
            if !(r.min.is_finite() && r.max.is_finite() && 0.0 <= r.min && r.min <= r.max) {
                return Err(Error::NoiseModel(format!(
                    "channel {c} latency support [{}, {}] must satisfy 0 <= min <= max",
                    r.min, r.max
                )));
            }
        }
        if !(jitter_half_width.is_finite() && jitter_half_width >= 0.0) {
            return Err(Error::NoiseModel(format!("jitter half-width must be >= 0, got {jitter_half_width}")));
        }
        Ok(Self { channel_latency, jitter_half_width, jitter_sharing, conventions, seed })
    }

    pub fn noiseless(channels: usize) -> Self {
        Self::new(
            vec![UniformRange::new(0.0, 0.0); channels],
            0.0,
            JitterSharing::PerChannel,
            EdgeConventions::default(),
            0,
        )
        .expect("zero noise is valid")
    }

    pub fn channel_latency(&self) -> &[UniformRange] {
        &self.channel_latency
    }

    pub fn jitter_half_width(&self) -> f64 {
        self.jitter_half_width
    }

    pub fn jitter_sharing(&self) -> JitterSharing {
        self.jitter_sharing
    }

    pub fn conventions(&self) -> EdgeConventions {
        self.conventions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_channels(&self) -> usize {
        self.channel_latency.len()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn without_jitter(&self) -> Self {
        Self { jitter_half_width: 0.0, ..self.clone() }
    }

    /// Multiplies every latency support and the jitter width by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let ranges = self.channel_latency.iter().map(|r| UniformRange::new(r.min * factor, r.max * factor)).collect();
        Self::new(ranges, self.jitter_half_width * factor, self.jitter_sharing, self.conventions, self.seed)
    }

    pub fn is_noiseless(&self) -> bool {
        self.jitter_half_width == 0.0 && self.channel_latency.iter().all(|r| r.max == 0.0)
    }

    /// Monotonicity guard `max b − min a + 2w < T_s`, which keeps every
    /// channel's shifted edges strictly increasing.
    pub fn check_guard(&self, sample_period: f64) -> Result<()> {
        let b_max = self.channel_latency.iter().map(|r| r.max).fold(0.0, f64::max);
        let a_min = self.channel_latency.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
        let spread = b_max - a_min + 2.0 * self.jitter_half_width;
        if spread >= sample_period {
            return Err(Error::NoiseModel(format!(
                "monotonicity guard violated: max latency - min latency + 2*jitter = {spread} ns \
                 must be < sample period {sample_period} ns"
            )));
        }
        Ok(())
    }

    /// Draws realization `index`. The result depends only on
    /// `(seed, index)`: each index owns its own ChaCha stream.
    pub fn sample(&self, index: u64, channel_of: &[usize], slices: usize) -> NoiseSample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let latency: Vec<f64> = self.channel_latency.iter().map(|r| r.draw(&mut rng)).collect();
        let sources = match self.jitter_sharing {
            JitterSharing::PerChannel => self.n_channels(),
            JitterSharing::PerControl => channel_of.len(),
        };
        let w = UniformRange::new(-self.jitter_half_width, self.jitter_half_width);
        let jitter = (0..sources).map(|_| (0..slices).map(|_| w.draw(&mut rng)).collect()).collect();
        NoiseSample {
            latency,
            jitter,
            sharing: self.jitter_sharing,
            channel_of: channel_of.to_vec(),
            slices,
            conventions: self.conventions,
        }
    }
}

/// One realization of every timing offset.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSample {
    /// Per-channel latency `τ_c` (ns).
    pub latency: Vec<f64>,
    /// Jitter `ξ^j` per source (channel or control) and edge `j = 0..M-1`.
    pub jitter: Vec<Vec<f64>>,
    pub sharing: JitterSharing,
    pub channel_of: Vec<usize>,
    pub slices: usize,
    pub conventions: EdgeConventions,
}

impl NoiseSample {
    /// Latency-only realization with default edge conventions.
    pub fn latency_only(latency: &[f64], channel_of: &[usize], slices: usize) -> Self {
        Self::deterministic(latency, channel_of, slices, EdgeConventions::default())
    }

    pub fn deterministic(latency: &[f64], channel_of: &[usize], slices: usize, conventions: EdgeConventions) -> Self {
        let channels = channel_of.iter().max().map_or(0, |c| c + 1);
        Self {
            latency: latency.to_vec(),
            jitter: vec![vec![0.0; slices]; channels],
            sharing: JitterSharing::PerChannel,
            channel_of: channel_of.to_vec(),
            slices,
            conventions,
        }
    }

    /// `δt_k^j` for control `k` and edge `j < M`.
    pub fn offset(&self, control: usize, edge: usize) -> f64 {
        if edge == 0 && !self.conventions.shift_turn_on {
            return 0.0;
        }
        let channel = self.channel_of[control];
        let source = match self.sharing {
            JitterSharing::PerChannel => channel,
            JitterSharing::PerControl => control,
        };
        self.latency[channel] + self.jitter[source][edge]
    }
}

/// Second moments of the timing offsets, expanded to control indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondMomentModel {
    /// `C^τ_{kk'} = ⟨τ_channel(k) τ_channel(k')⟩` (ns²).
    pub ctau: RMatrix,
    /// Jitter variance `μ₀²` (ns²).
    pub mu0sq: f64,
    /// `⟨ξ_k^j ξ_k'^j⟩ / μ₀²`: identity for per-control jitter, channel
    /// blocks for per-channel jitter.
    pub jitter_coupling: RMatrix,
}

impl SecondMomentModel {
    pub fn zero(controls: usize) -> Self {
        Self {
            ctau: RMatrix::zeros(controls, controls),
            mu0sq: 0.0,
            jitter_coupling: RMatrix::identity(controls, controls),
        }
    }

    pub fn n_controls(&self) -> usize {
        self.ctau.nrows()
    }

    /// Multiplies every moment by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ctau: self.ctau.scale(factor),
            mu0sq: self.mu0sq * factor,
            jitter_coupling: self.jitter_coupling.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mu0sq == 0.0 && self.ctau.iter().all(|c| *c == 0.0)
    }
}

pub fn second_moments(model: &ClockNoiseModel, system: &QuantumSystem) -> Result<SecondMomentModel> {
    if model.n_channels() != system.n_channels() {
        return Err(Error::Dimension(format!(
            "noise model has {} channels, system has {}",
            model.n_channels(),
            system.n_channels()
        )));
    }
    let ch = system.channel_of();
    let m = ch.len();
    let ranges = model.channel_latency();
    let ctau = RMatrix::from_fn(m, m, |k, l| {
        let (a, b) = (ranges[ch[k]], ranges[ch[l]]);
        if ch[k] == ch[l] {
            a.second_moment()
        } else {
            a.mean() * b.mean()
        }
    });
    let w = model.jitter_half_width();
    let jitter_coupling = match model.jitter_sharing() {
        JitterSharing::PerControl => RMatrix::identity(m, m),
        JitterSharing::PerChannel => RMatrix::from_fn(m, m, |k, l| if ch[k] == ch[l] { 1.0 } else { 0.0 }),
    };
    Ok(SecondMomentModel { ctau, mu0sq: w * w / 3.0, jitter_coupling })
}

/// Global segmentation of `[0, T]` by the union of all shifted edges. Each
/// segment records, per control, which schedule slice is active (`None`
/// before the control's turn-on edge).
#[derive(Clone, Debug, PartialEq)]
pub struct MergedTimingGrid {
    breakpoints: Vec<f64>,
    active: Vec<Vec<Option<usize>>>,
    slices: usize,
    sample_period: f64,
}

impl MergedTimingGrid {
    /// The noiseless grid `{0, T_s, …, T}`.
    pub fn ideal(schedule: &ControlSchedule) -> Self {
        let m = schedule.slices();
        Self {
            breakpoints: (0..=m).map(|j| schedule.edge_time(j)).collect(),
            active: (0..m).map(|s| vec![Some(s); schedule.n_controls()]).collect(),
            slices: m,
            sample_period: schedule.sample_period(),
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_count(&self) -> usize {
        self.active.len()
    }

    pub fn duration(&self, segment: usize) -> f64 {
        self.breakpoints[segment + 1] - self.breakpoints[segment]
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn active_slice(&self, segment: usize, control: usize) -> Option<usize> {
        self.active[segment][control]
    }

    pub fn fill_amplitudes(&self, schedule: &ControlSchedule, segment: usize, out: &mut [f64]) {
        for (k, a) in out.iter_mut().enumerate() {
            *a = self.active[segment][k].map_or(0.0, |s| schedule.amplitude(k, s));
        }
    }

    /// Active amplitude per segment and control.
    pub fn active_amplitudes(&self, schedule: &ControlSchedule) -> Vec<Vec<f64>> {
        (0..self.segment_count())
            .map(|seg| {
                let mut a = vec![0.0; schedule.n_controls()];
                self.fill_amplitudes(schedule, seg, &mut a);
                a
            })
            .collect()
    }

    pub fn check_compatible(&self, schedule: &ControlSchedule) -> Result<()> {
        if self.slices != schedule.slices()
            || self.sample_period != schedule.sample_period()
            || self.active.first().map_or(0, |a| a.len()) != schedule.n_controls()
        {
            return Err(Error::Grid(format!(
                "grid built for {} slices of {} ns does not match schedule ({} slices of {} ns, {} controls)",
                self.slices,
                self.sample_period,
                schedule.slices(),
                schedule.sample_period(),
                schedule.n_controls()
            )));
        }
        let horizon = schedule.horizon();
        if (self.horizon() - horizon).abs() > 1e-12 || self.breakpoints[0] != 0.0 {
            return Err(Error::Grid(format!(
                "grid spans [{}, {}], schedule horizon is {horizon}",
                self.breakpoints[0],
                self.horizon()
            )));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("breakpoints are not strictly increasing".into()));
        }
        Ok(())
    }
}

pub fn build_merged_grid(schedule: &ControlSchedule, sample: &NoiseSample) -> Result<MergedTimingGrid> {
    let m = schedule.slices();
    let controls = schedule.n_controls();
    if sample.slices != m || sample.channel_of.len() != controls {
        return Err(Error::Grid(format!(
            "noise sample covers {} slices and {} controls, schedule has {m} and {controls}",
            sample.slices,
            sample.channel_of.len()
        )));
    }
    let horizon = schedule.horizon();
    let mut edges: Vec<Vec<f64>> = Vec::with_capacity(controls);
    let mut points = vec![0.0, horizon];
    for k in 0..controls {
        let raw: Vec<f64> = (0..m).map(|j| schedule.edge_time(j) + sample.offset(k, j)).collect();
        if raw.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!("shifted edges of control {k} are not increasing")));
        }
        let clipped: Vec<f64> = raw.iter().map(|t| t.clamp(0.0, horizon)).collect();
        points.extend(clipped.iter().copied().filter(|t| *t > 0.0 && *t < horizon));
        edges.push(clipped);
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut breakpoints: Vec<f64> = Vec::with_capacity(points.len());
    for t in points {
        match breakpoints.last() {
            Some(&last) if t - last <= BREAKPOINT_MERGE_TOL => {}
            _ => breakpoints.push(t),
        }
    }
    // The merge step may have swallowed T into a point just below it.
    *breakpoints.last_mut().unwrap() = horizon;
    if breakpoints.len() < 2 {
        return Err(Error::Grid("degenerate grid".into()));
    }
    let hold_first = sample.conventions.onset == OnsetField::HoldFirst;
    let active = breakpoints
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            edges
                .iter()
                .map(|e| {
                    let passed = e.partition_point(|t| *t <= mid);
                    match passed {
                        0 if hold_first => Some(0),
                        0 => None,
                        n => Some(n - 1),
                    }
                })
                .collect()
        })
        .collect();
    Ok(MergedTimingGrid { breakpoints, active, slices: m, sample_period: schedule.sample_period() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn sched(m: usize, controls: usize) -> ControlSchedule {
        let amps = RMatrix::from_fn(controls, m, |k, j| 1.0 + j as f64 + 10.0 * k as f64);
        ControlSchedule::new(1.0, amps).unwrap()
    }

    #[test]
    fn degenerate_model_gives_zero_offsets() {
        let model = ClockNoiseModel::noiseless(2);
        let s = model.sample(17, &[0, 0, 1, 1], 5);
        for k in 0..4 {
            for j in 0..5 {
                assert_eq!(s.offset(k, j), 0.0);
            }
        }
    }

    #[test]
    fn reference_moments() {
        let sys = presets::cnot_system();
        let m = second_moments(&presets::clock_noise(true, 1), &sys).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                let want = if sys.channel_of()[k] == sys.channel_of()[l] { 0.0533 } else { 0.0400 };
                assert!((m.ctau[(k, l)] - want).abs() < 1e-4, "{k}{l}: {}", m.ctau[(k, l)]);
            }
        }
        assert!((m.mu0sq - 8.33e-4).abs() < 1e-6);
    }

    #[test]
    fn uniform_second_moment_matches_quadrature() {
        let r = UniformRange::new(0.1, 0.3);
        assert!((r.second_moment() - 0.13 / 3.0).abs() < 1e-15);
        // midpoint rule on x² over [0.1, 0.3]
        let n = 20000;
        let h = 0.2 / n as f64;
        let quad: f64 = (0..n).map(|i| (0.1 + (i as f64 + 0.5) * h).powi(2) * h).sum::<f64>() / 0.2;
        assert!((quad - r.second_moment()).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_grid_is_ideal() {
        let s = sched(4, 2);
        let sample = NoiseSample::latency_only(&[0.0, 0.0], &[0, 1], 4);
        let grid = build_merged_grid(&s, &sample).unwrap();
        assert_eq!(grid.breakpoints(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(grid, MergedTimingGrid::ideal(&s));
    }

    #[test]
    fn single_channel_latency_grid() {
        let s = ControlSchedule::new(1.0, RMatrix::from_row_slice(1, 2, &[5.0, 7.0])).unwrap();
        let sample = NoiseSample::latency_only(&[0.2], &[0], 2);
        let grid = build_merged_grid(&s, &sample).unwrap();
        let bp = grid.breakpoints();
        assert_eq!(bp.len(), 4);
        for (a, b) in bp.iter().zip([0.0, 0.2, 1.2, 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let amps = grid.active_amplitudes(&s);
        assert_eq!(amps, vec![vec![0.0], vec![5.0], vec![7.0]]);
    }

    #[test]
    fn two_channel_union() {
        let s = sched(1, 2);
        let sample = NoiseSample::latency_only(&[0.1, 0.3], &[0, 1], 1);
        let grid = build_merged_grid(&s, &sample).unwrap();
        assert_eq!(grid.breakpoints(), &[0.0, 0.1, 0.3, 1.0]);
        assert_eq!(grid.active_slice(0, 0), None);
        assert_eq!(grid.active_slice(1, 0), Some(0));
        assert_eq!(grid.active_slice(0, 1), None);
        assert_eq!(grid.active_slice(1, 1), None);
        assert_eq!(grid.active_slice(2, 1), Some(0));
    }

    #[test]
    fn hold_first_and_unshifted_turn_on() {
        let s = sched(2, 1);
        let conv = EdgeConventions { shift_turn_on: true, onset: OnsetField::HoldFirst };
        let grid = build_merged_grid(&s, &NoiseSample::deterministic(&[0.2], &[0], 2, conv)).unwrap();
        assert_eq!(grid.active_slice(0, 0), Some(0));
        let conv = EdgeConventions { shift_turn_on: false, onset: OnsetField::Zero };
        let grid = build_merged_grid(&s, &NoiseSample::deterministic(&[0.2], &[0], 2, conv)).unwrap();
        assert_eq!(grid.breakpoints(), &[0.0, 1.2, 2.0]);
    }

    #[test]
    fn guard_rejects_wide_noise() {
        let model = ClockNoiseModel::new(
            vec![UniformRange::new(0.0, 0.9)],
            0.06,
            JitterSharing::PerChannel,
            EdgeConventions::default(),
            0,
        )
        .unwrap();
        assert!(matches!(model.check_guard(1.0), Err(Error::NoiseModel(_))));
        assert!(presets::clock_noise(true, 0).check_guard(1.0).is_ok());
    }

    #[test]
    fn invalid_supports_rejected() {
        let bad = ClockNoiseModel::new(
            vec![UniformRange::new(0.3, 0.1)],
            0.0,
            JitterSharing::PerChannel,
            EdgeConventions::default(),
            0,
        );
        assert!(bad.is_err());
        let neg = ClockNoiseModel::new(
            vec![UniformRange::new(-0.1, 0.1)],
            0.0,
            JitterSharing::PerChannel,
            EdgeConventions::default(),
            0,
        );
        assert!(neg.is_err());
    }

    #[test]
    fn non_monotone_sample_is_rejected() {
        let s = sched(3, 1);
        let mut sample = NoiseSample::latency_only(&[0.0], &[0], 3);
        sample.jitter[0][1] = -1.5;
        assert!(matches!(build_merged_grid(&s, &sample), Err(Error::Grid(_))));
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let grid = MergedTimingGrid::ideal(&sched(3, 1));
        assert!(grid.check_compatible(&sched(4, 1)).is_err());
    }
}
