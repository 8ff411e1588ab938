//! Experiment configuration files.
//!
//! A configuration is a TOML document with the sections `system`, `target`,
//! `schedule`, `noise`, `estimator` and `run`; see `configs/cnot_paper.cfg`
//! for a complete example. [`load_config`] fills every default explicitly, so
//! [`ExperimentConfig::to_toml`] of a loaded config is a complete record of
//! the experiment and loads back to an equal value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorOptions;
use crate::linalg::{CMatrix, C64};
use crate::noise::{
    self, ClockNoiseModel, EdgeConventions, JitterSharing, OnsetField, SecondMomentModel, UniformRange,
};
use crate::operators::build_operator;
use crate::optimizers::{OptimizerOptions, Projection};
use crate::system::{ControlSchedule, GateTarget, PhaseMode, QuantumSystem};
use crate::{io, presets};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub target: TargetSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub qubits: usize,
    /// Operator expression, e.g. `"2*pi*0.01 Z⊗Z"`.
    pub drift: String,
    pub controls: Vec<ControlSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub expr: String,
    pub channel: usize,
}

/// Either a named gate or an explicit matrix of `[re, im]` pairs, multiplied
/// by `e^{i·phase}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub phase_mode: PhaseMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub sample_period: f64,
    pub slices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_bound: Option<f64>,
    #[serde(default)]
    pub initial: InitialGuess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialGuess {
    /// I.i.d. uniform in `[-amplitude, amplitude]`.
    RandomUniform {
        amplitude: f64,
        seed: u64,
    },
    Constant {
        value: f64,
    },
    /// A `control,slice,amplitude` file; relative paths are resolved against
    /// the directory of the config file.
    Csv {
        path: PathBuf,
    },
}

impl Default for InitialGuess {
    fn default() -> Self {
        InitialGuess::RandomUniform { amplitude: presets::INITIAL_AMPLITUDE, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// One support per channel. Empty means no latency on any channel.
    pub latency: Vec<UniformRange>,
    pub jitter_half_width: f64,
    pub jitter_sharing: JitterSharing,
    pub shift_turn_on: bool,
    pub onset: OnsetField,
    /// Seed of the training noise (b-GRAPE batches).
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let c = EdgeConventions::default();
        Self {
            latency: Vec::new(),
            jitter_half_width: 0.0,
            jitter_sharing: JitterSharing::PerChannel,
            shift_turn_on: c.shift_turn_on,
            onset: c.onset,
            seed: 0,
        }
    }
}

impl NoiseSection {
    pub fn conventions(&self) -> EdgeConventions {
        EdgeConventions { shift_turn_on: self.shift_turn_on, onset: self.onset }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Grape,
    Homotopic,
    Bgrape,
    Estimate,
    Test,
    Sweep,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Grape => "grape",
            Algorithm::Homotopic => "homotopic",
            Algorithm::Bgrape => "bgrape",
            Algorithm::Estimate => "estimate",
            Algorithm::Test => "test",
            Algorithm::Sweep => "sweep",
        }
    }
}

/// Starting point of b-GRAPE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BgrapeStart {
    /// The GRAPE-optimized control.
    #[default]
    Grape,
    /// The initial guess itself.
    Initial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: Algorithm,
    pub output_dir: PathBuf,
    /// Monte-Carlo test samples `K`.
    pub test_samples: usize,
    pub test_seed: u64,
    /// Monte-Carlo testing of intermediate controls.
    pub test_every: TestEvery,
    /// Samples per intermediate test.
    pub test_every_samples: usize,
    pub histogram_bins: usize,
    pub sweep_points: usize,
    pub sweep_max: f64,
    pub bgrape_start: BgrapeStart,
    pub grape: OptimizerOptions,
    pub homotopic: OptimizerOptions,
    pub bgrape: OptimizerOptions,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Grape,
            output_dir: PathBuf::from("out"),
            test_samples: 10_000,
            test_seed: 2024,
            test_every: TestEvery::default(),
            test_every_samples: 10_000,
            histogram_bins: 40,
            sweep_points: 41,
            sweep_max: 0.4,
            bgrape_start: BgrapeStart::Grape,
            grape: OptimizerOptions::default(),
            homotopic: OptimizerOptions::default(),
            bgrape: OptimizerOptions::default(),
        }
    }
}

/// Iteration interval of intermediate tests per algorithm (0: none).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestEvery {
    pub grape: usize,
    pub homotopic: usize,
    pub bgrape: usize,
}

impl TestEvery {
    pub fn for_algorithm(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::Grape => self.grape,
            Algorithm::Homotopic => self.homotopic,
            Algorithm::Bgrape => self.bgrape,
            _ => 0,
        }
    }
}

/// Validated objects built from a config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub system: QuantumSystem,
    pub target: GateTarget,
    pub initial: ControlSchedule,
    pub noise: ClockNoiseModel,
    pub moments: SecondMomentModel,
}

/// Reads, completes and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let InitialGuess::Csv { path: p } = &mut cfg.schedule.initial {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    cfg.build()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Parses and completes a config without touching the file system.
    /// Relative CSV paths are kept as given.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.complete();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn complete(&mut self) {
        if self.noise.latency.is_empty() {
            let channels = self.system.controls.iter().map(|c| c.channel + 1).max().unwrap_or(0);
            self.noise.latency = vec![UniformRange::new(0.0, 0.0); channels];
        }
    }

    /// Reseeds the initial guess, the training noise and b-GRAPE. The test
    /// seed is left alone so runs with different seeds share a test set.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let InitialGuess::RandomUniform { seed: s, .. } = &mut self.schedule.initial {
            *s = seed;
        }
        self.noise.seed = seed;
        self.run.bgrape.seed = seed;
        self
    }

    /// Checks every invariant and builds the experiment objects.
    pub fn build(&self) -> Result<Experiment> {
        let system = self.build_system()?;
        let target = self.build_target(system.dim())?;
        let s = &self.schedule;
        if !(s.sample_period.is_finite() && s.sample_period > 0.0) {
            return Err(Error::Config(format!("schedule.sample_period must be > 0, got {}", s.sample_period)));
        }
        if s.slices == 0 {
            return Err(Error::Config("schedule.slices must be >= 1".into()));
        }
        let mut initial = match &s.initial {
            InitialGuess::RandomUniform { amplitude, seed } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::Config("schedule.initial.amplitude must be >= 0".into()));
                }
                presets::random_schedule(&system, s.slices, s.sample_period, *amplitude, *seed)
            }
            InitialGuess::Constant { value } => {
                ControlSchedule::constant(s.sample_period, system.n_controls(), s.slices, *value)?
            }
            InitialGuess::Csv { path } => {
                let sched = io::read_schedule_csv(path, s.sample_period)?;
                if sched.n_controls() != system.n_controls() || sched.slices() != s.slices {
                    return Err(Error::Config(format!(
                        "{}: schedule is {}×{}, config expects {}×{}",
                        path.display(),
                        sched.n_controls(),
                        sched.slices(),
                        system.n_controls(),
                        s.slices
                    )));
                }
                sched
            }
        };
        if let Some(bound) = s.amplitude_bound {
            initial = initial.with_bound(bound).map_err(|e| Error::Config(format!("schedule.amplitude_bound: {e}")))?;
        }

        let n = &self.noise;
        if n.latency.len() != system.n_channels() {
            return Err(Error::Config(format!(
                "noise.latency lists {} channels, the system has {}",
                n.latency.len(),
                system.n_channels()
            )));
        }
        let noise =
            ClockNoiseModel::new(n.latency.clone(), n.jitter_half_width, n.jitter_sharing, n.conventions(), n.seed)
                .map_err(|e| Error::Config(format!("noise: {e}")))?;
        noise.check_guard(s.sample_period).map_err(|e| Error::Config(format!("noise: {e}")))?;
        let moments = noise::second_moments(&noise, &system)?;

        let r = &self.run;
        for (name, opts) in [("grape", &r.grape), ("homotopic", &r.homotopic), ("bgrape", &r.bgrape)] {
            opts.validate().map_err(|e| Error::Config(format!("run.{name}: {e}")))?;
        }
        if r.test_samples == 0 || r.test_every_samples == 0 {
            return Err(Error::Config("run.test_samples and run.test_every_samples must be >= 1".into()));
        }
        if r.histogram_bins == 0 {
            return Err(Error::Config("run.histogram_bins must be >= 1".into()));
        }
        if r.sweep_points < 2 {
            return Err(Error::Config("run.sweep_points must be >= 2".into()));
        }
        if !(r.sweep_max > 0.0 && r.sweep_max < s.sample_period) {
            return Err(Error::Config(format!("run.sweep_max must lie in (0, sample_period), got {}", r.sweep_max)));
        }
        Ok(Experiment { system, target, initial, noise, moments })
    }

    fn build_system(&self) -> Result<QuantumSystem> {
        let sys = &self.system;
        if sys.qubits == 0 || sys.qubits > 10 {
            return Err(Error::Config(format!("system.qubits must lie in 1..=10, got {}", sys.qubits)));
        }
        let dim = 1usize << sys.qubits;
        let parse = |what: String, expr: &str| -> Result<CMatrix> {
            let m = build_operator(expr).map_err(|e| Error::Config(format!("{what}: {e}")))?;
            if m.nrows() != dim {
                return Err(Error::Config(format!(
                    "{what}: operator acts on {} qubits, system has {}",
                    m.nrows().trailing_zeros(),
                    sys.qubits
                )));
            }
            Ok(m)
        };
        let drift = parse("system.drift".into(), &sys.drift)?;
        if sys.controls.is_empty() {
            return Err(Error::Config("system.controls must not be empty".into()));
        }
        let controls = sys
            .controls
            .iter()
            .enumerate()
            .map(|(k, c)| parse(format!("system.controls[{k}]"), &c.expr))
            .collect::<Result<Vec<_>>>()?;
        let channels = sys.controls.iter().map(|c| c.channel).collect();
        QuantumSystem::new(drift, controls, channels).map_err(|e| Error::Config(format!("system: {e}")))
    }

    fn build_target(&self, dim: usize) -> Result<GateTarget> {
        let t = &self.target;
        let base = match (&t.gate, &t.matrix) {
            (Some(name), None) => named_gate(name)?,
            (None, Some(rows)) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("target.matrix must be square".into()));
                }
                CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1]))
            }
            _ => return Err(Error::Config("target needs exactly one of `gate` and `matrix`".into())),
        };
        if base.nrows() != dim {
            return Err(Error::Config(format!("target is {}-dimensional, system is {dim}-dimensional", base.nrows())));
        }
        GateTarget::new(base * C64::from_polar(1.0, t.phase), t.phase_mode)
            .map_err(|e| Error::Config(format!("target: {e}")))
    }
}

/// The two-qubit CNOT benchmark with latency `U(0, 0.4)` ns per channel and
/// jitter `U(−0.05, 0.05)` ns; identical to `configs/cnot_paper.cfg`.
pub fn benchmark_config() -> ExperimentConfig {
    let controls = presets::CONTROL_EXPRS
        .iter()
        .map(|(expr, channel)| ControlSpec { expr: expr.to_string(), channel: *channel })
        .collect();
    let homotopic = OptimizerOptions { projection: Projection::UnitaryJacobian, ..Default::default() };
    let bgrape = OptimizerOptions { max_iters: 60_000, learning_rate: 0.05, ..Default::default() };
    ExperimentConfig {
        system: SystemSection { qubits: 2, drift: presets::DRIFT_EXPR.to_string(), controls },
        target: TargetSection {
            gate: Some("cnot".into()),
            matrix: None,
            phase: presets::CNOT_PHASE,
            phase_mode: PhaseMode::Plain,
        },
        schedule: ScheduleSection {
            sample_period: presets::SAMPLE_PERIOD,
            slices: presets::SLICES,
            amplitude_bound: None,
            initial: InitialGuess::default(),
        },
        noise: NoiseSection {
            latency: vec![UniformRange::new(0.0, presets::LATENCY_MAX); 2],
            jitter_half_width: presets::JITTER_HALF_WIDTH,
            ..Default::default()
        },
        estimator: EstimatorOptions { include_turn_on: true },
        run: RunSection {
            algorithm: Algorithm::Homotopic,
            test_every: TestEvery { grape: 0, homotopic: 100, bgrape: 5000 },
            test_every_samples: 2000,
            homotopic,
            bgrape,
            ..Default::default()
        },
    }
}

/// Gates known by name: `cnot`, `cz`, `swap`, `iswap` (two qubits) and
/// `x`, `y`, `z`, `h` (one qubit). Two-qubit gates use qubit 1 as control.
pub fn named_gate(name: &str) -> Result<CMatrix> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let expr = match name.to_ascii_lowercase().as_str() {
        "cnot" => return Ok(presets::cnot_target(0.0)),
        "cz" => "0.5(I⊗I + Z⊗I + I⊗Z - Z⊗Z)",
        "swap" => "0.5(I⊗I + X⊗X + Y⊗Y + Z⊗Z)",
        "iswap" => "0.5(I⊗I + Z⊗Z) + 0.5 i(X⊗X + Y⊗Y)",
        "x" => "X",
        "y" => "Y",
        "z" => "Z",
        "h" => return Ok(build_operator("X + Z").expect("valid") * C64::new(r, 0.0)),
        other => return Err(Error::Config(format!("unknown gate `{other}`"))),
    };
    Ok(build_operator(expr).expect("gate expressions are valid"))
}
