//! Runs a configured experiment and writes its artifacts.
//!
//! Every run directory holds the resolved `config.toml`, the data files of the
//! chosen algorithm, and `manifest.json`, which lists each file with its
//! SHA-256. All files except `timing.csv` (wall-clock seconds, flagged
//! volatile in the manifest) are a pure function of the config.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Algorithm, BgrapeStart, Experiment, ExperimentConfig, InitialGuess};
use crate::error::{Error, Result};
use crate::estimator::{self, RobustnessReport};
use crate::io;
use crate::montecarlo::{self, SweepSurface, TestReport};
use crate::optimizers::{self, OptimizationTrace, PeriodicTest, TraceRecord};
use crate::system::ControlSchedule;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Expression { .. } => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Csv(e) if e.is_io_error() => EXIT_IO,
        Error::NotConverged(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_FAILURE,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub iterations: usize,
    /// First iteration whose (tested, when available) error is within 10% of
    /// the final value.
    pub plateau_iteration: usize,
    pub converged: bool,
    pub note: Option<String>,
    pub final_j0: f64,
    pub jn: f64,
    pub tested_mean: Option<f64>,
    pub tested_standard_error: Option<f64>,
    pub log10_skewness: Option<f64>,
    pub smoothness: Vec<f64>,
    pub smoothness_total: f64,
    pub sweep_fraction_below_1e3: Option<f64>,
    pub sweep_argmin: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub schedule: ControlSchedule,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, bool)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str, volatile: bool) -> PathBuf {
        self.files.push((name.to_string(), volatile));
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name, false);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        io::write_bytes(&path, text.as_bytes())
    }

    fn manifest(&mut self, cfg: &ExperimentConfig, config_text: &str, summary: &RunSummary) -> Result<()> {
        let mut entries = Vec::new();
        for (name, volatile) in &self.files {
            let path = self.dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            entries.push(json!({ "path": name, "sha256": sha256_hex(&bytes), "volatile": volatile }));
        }
        let initial_seed = match &cfg.schedule.initial {
            InitialGuess::RandomUniform { seed, .. } => Some(*seed),
            _ => None,
        };
        let manifest = json!({
            "tool": "clockrobust",
            "version": env!("CARGO_PKG_VERSION"),
            "algorithm": summary.algorithm,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "seeds": {
                "initial": initial_seed,
                "noise": cfg.noise.seed,
                "bgrape": cfg.run.bgrape.seed,
                "test": cfg.run.test_seed,
            },
            "bgrape_start": cfg.run.bgrape_start,
            "status": if summary.converged { "ok" } else { "not_converged" },
            "note": summary.note,
            "files": entries,
        });
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        io::write_bytes(&path, text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `cfg.run.algorithm` and writes its artifacts into `out_dir`.
///
/// Non-convergence is not an error: artifacts are written, the manifest is
/// flagged `not_converged`, and [`RunOutcome::exit_code`] is nonzero.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let exp = cfg.build()?;
    let mut art = Artifacts::new(out_dir)?;
    let config_text = cfg.to_toml()?;
    io::write_bytes(&art.path("config.toml", false), config_text.as_bytes())?;

    let algorithm = cfg.run.algorithm;
    let (schedule, trace) = match algorithm {
        Algorithm::Grape | Algorithm::Homotopic | Algorithm::Bgrape => {
            let (s, t) = optimize(cfg, &exp, algorithm, &mut art)?;
            (s, Some(t))
        }
        Algorithm::Estimate | Algorithm::Test | Algorithm::Sweep => (exp.initial.clone(), None),
    };

    let mut summary = RunSummary {
        algorithm: algorithm.name().to_string(),
        iterations: trace.as_ref().and_then(|t| t.records.last()).map_or(0, |r| r.iteration),
        plateau_iteration: trace.as_ref().map_or(0, |t| plateau_iteration(&t.records)),
        converged: trace.as_ref().is_none_or(|t| t.converged),
        note: trace.as_ref().and_then(|t| t.note.clone()),
        final_j0: optimizers::j0_value(&exp.system, &schedule, &exp.target)?,
        jn: 0.0,
        tested_mean: None,
        tested_standard_error: None,
        log10_skewness: None,
        smoothness: montecarlo::smoothness_metric(&schedule),
        smoothness_total: 0.0,
        sweep_fraction_below_1e3: None,
        sweep_argmin: None,
    };
    summary.smoothness_total = summary.smoothness.iter().sum();
    let report = estimate(cfg, &exp, &schedule)?;
    summary.jn = report.jn_total;

    if algorithm != Algorithm::Sweep {
        io::write_smoothness_csv(&art.path("smoothness.csv", false), &summary.smoothness)?;
    }
    if algorithm == Algorithm::Estimate {
        art.json("estimate.json", &report)?;
    }
    if matches!(algorithm, Algorithm::Grape | Algorithm::Homotopic | Algorithm::Bgrape | Algorithm::Test) {
        let test = test(cfg, &exp, &schedule)?;
        summary.tested_mean = Some(test.mean);
        summary.tested_standard_error = Some(test.standard_error);
        summary.log10_skewness = Some(test.log10_skewness).filter(|s| s.is_finite());
        art.json("test_report.json", &test)?;
        let bins = montecarlo::error_histogram(&test, cfg.run.histogram_bins)?;
        io::write_histogram_csv(&art.path("histogram.csv", false), &bins)?;
    }
    let optimizer_sweep =
        algorithm != Algorithm::Estimate && algorithm != Algorithm::Test && exp.system.n_channels() == 2;
    if algorithm == Algorithm::Sweep || optimizer_sweep {
        let surface = sweep(cfg, &exp, &schedule)?;
        summary.sweep_fraction_below_1e3 = Some(surface.fraction_below(1e-3));
        summary.sweep_argmin = Some(surface.argmin_taus());
        io::write_sweep_csv(&art.path("sweep.csv", false), &surface)?;
    }
    art.json("summary.json", &summary)?;
    art.manifest(cfg, &config_text, &summary)?;
    let files = art.files.iter().map(|(n, _)| n.clone()).collect();
    Ok(RunOutcome { summary, schedule, files })
}

fn optimize(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    algorithm: Algorithm,
    art: &mut Artifacts,
) -> Result<(ControlSchedule, OptimizationTrace)> {
    let run = &cfg.run;
    let tester = PeriodicTest {
        model: exp.noise.clone(),
        samples: run.test_every_samples,
        seed: run.test_seed,
        every: run.test_every.for_algorithm(algorithm),
    };
    let tester = (tester.every > 0).then_some(&tester);
    let (sys, target) = (&exp.system, &exp.target);

    let grape_tester = if algorithm == Algorithm::Grape { tester } else { None };
    let needs_grape = algorithm != Algorithm::Bgrape || run.bgrape_start == BgrapeStart::Grape;
    let grape = if needs_grape {
        let (s, t) = optimizers::grape_minimize(sys, &exp.initial, target, &run.grape, grape_tester)?;
        let name = if algorithm == Algorithm::Grape { "trace.csv" } else { "grape_trace.csv" };
        io::write_trace_csv(&art.path(name, false), &t.records)?;
        Some((s, t))
    } else {
        None
    };

    let (schedule, trace) = match algorithm {
        Algorithm::Grape => grape.expect("GRAPE ran"),
        Algorithm::Homotopic => {
            let (g, gt) = grape.expect("GRAPE ran");
            if !gt.converged {
                let mut t = gt;
                t.note = Some(format!("GRAPE stage: {}", t.note.unwrap_or_default()));
                (g, t)
            } else {
                let mut opts = run.homotopic.clone();
                opts.estimator = cfg.estimator;
                optimizers::homotopic_refine(sys, &g, target, &exp.moments, &opts, tester)?
            }
        }
        Algorithm::Bgrape => {
            let start = match grape {
                Some((g, _)) => g,
                None => exp.initial.clone(),
            };
            optimizers::bgrape_optimize(sys, &start, target, &exp.noise, &run.bgrape, tester)?
        }
        _ => unreachable!("not an optimizer"),
    };
    if algorithm != Algorithm::Grape {
        io::write_trace_csv(&art.path("trace.csv", false), &trace.records)?;
    }
    io::write_timing_csv(&art.path("timing.csv", true), &trace.records)?;
    io::write_schedule_csv(&art.path("schedule.csv", false), &schedule)?;
    Ok((schedule, trace))
}

fn estimate(cfg: &ExperimentConfig, exp: &Experiment, schedule: &ControlSchedule) -> Result<RobustnessReport> {
    let iset = estimator::interaction_set(&exp.system, schedule, cfg.estimator)?;
    estimator::estimate_jn(&iset, &exp.moments)
}

fn test(cfg: &ExperimentConfig, exp: &Experiment, schedule: &ControlSchedule) -> Result<TestReport> {
    montecarlo::test_average_error(
        &exp.system,
        schedule,
        &exp.target,
        &exp.noise,
        cfg.run.test_samples,
        cfg.run.test_seed,
    )
}

fn sweep(cfg: &ExperimentConfig, exp: &Experiment, schedule: &ControlSchedule) -> Result<SweepSurface> {
    if exp.system.n_channels() != 2 {
        return Err(Error::Config(format!(
            "latency sweeps need exactly two channels, the system has {}",
            exp.system.n_channels()
        )));
    }
    let grid = montecarlo::linspace(0.0, cfg.run.sweep_max, cfg.run.sweep_points);
    montecarlo::latency_sweep(&exp.system, schedule, &exp.target, &grid, &grid, cfg.noise.conventions())
}

/// First iteration at which the error is within 10% of its final value. The
/// tested errors are used when at least two records carry one (the batch
/// objective of b-GRAPE is too noisy), the objective otherwise.
pub fn plateau_iteration(records: &[TraceRecord]) -> usize {
    let tested: Vec<(usize, f64)> = records.iter().filter_map(|r| r.tested_error.map(|e| (r.iteration, e))).collect();
    let series: Vec<(usize, f64)> = if tested.len() >= 2 {
        tested
    } else {
        records.iter().filter(|r| r.objective.is_finite()).map(|r| (r.iteration, r.objective)).collect()
    };
    let Some(&(_, last)) = series.last() else { return 0 };
    series.iter().find(|(_, v)| *v <= 1.1 * last).map_or(0, |(i, _)| *i)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicationRow {
    pub setting: String,
    #[serde(flatten)]
    pub summary: RunSummary,
}

/// Runs GRAPE, homotopic refinement and b-GRAPE under the configured noise
/// (`latency_jitter`) and with the jitter removed (`latency_only`), one
/// subdirectory per run, and writes `summary.csv` / `summary.json`.
pub fn replicate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ReplicationRow>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut latency_only = cfg.clone();
    latency_only.noise.jitter_half_width = 0.0;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (setting, base) in [("latency_jitter", cfg), ("latency_only", &latency_only)] {
        for algorithm in [Algorithm::Grape, Algorithm::Homotopic, Algorithm::Bgrape] {
            let mut c = base.clone();
            c.run.algorithm = algorithm;
            let dir = out_dir.join(setting).join(algorithm.name());
            let outcome = run_experiment(&c, &dir)?;
            if !outcome.summary.converged {
                failures.push(format!("{setting}/{}", algorithm.name()));
            }
            rows.push(ReplicationRow { setting: setting.to_string(), summary: outcome.summary });
        }
    }
    write_summary_table(&out_dir.join("summary.csv"), &rows)?;
    let mut text = serde_json::to_string_pretty(&rows)?;
    text.push('\n');
    io::write_bytes(&out_dir.join("summary.json"), text.as_bytes())?;
    if !failures.is_empty() {
        return Err(Error::NotConverged(format!("runs without convergence: {}", failures.join(", "))));
    }
    Ok(rows)
}

fn write_summary_table(path: &Path, rows: &[ReplicationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "setting",
        "algorithm",
        "iterations",
        "plateau_iteration",
        "final_j0",
        "jn",
        "tested_mean",
        "tested_standard_error",
        "log10_skewness",
        "smoothness_total",
        "sweep_fraction_below_1e-3",
        "sweep_argmin_tau1",
        "sweep_argmin_tau2",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.setting.clone(),
            s.algorithm.clone(),
            s.iterations.to_string(),
            s.plateau_iteration.to_string(),
            s.final_j0.to_string(),
            s.jn.to_string(),
            opt(s.tested_mean),
            opt(s.tested_standard_error),
            opt(s.log10_skewness),
            s.smoothness_total.to_string(),
            opt(s.sweep_fraction_below_1e3),
            opt(s.sweep_argmin.map(|a| a.0)),
            opt(s.sweep_argmin.map(|a| a.1)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
