//! CSV data files: schedules, optimizer traces, histograms, latency sweeps and
//! smoothness values. Floats are written in shortest round-trip form so a
//! schedule read back is bit-identical.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::montecarlo::{HistogramBin, SweepSurface};
use crate::optimizers::TraceRecord;
use crate::system::ControlSchedule;

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    control: usize,
    slice: usize,
    amplitude: f64,
}

pub fn write_schedule_csv(path: &Path, schedule: &ControlSchedule) -> Result<()> {
    let mut w = writer(path)?;
    for k in 0..schedule.n_controls() {
        for s in 0..schedule.slices() {
            w.serialize(ScheduleRow { control: k, slice: s, amplitude: schedule.amplitude(k, s) })?;
        }
    }
    flush(w, path)
}

/// Reads a `control,slice,amplitude` file. Every (control, slice) pair of the
/// implied `m × M` grid must appear exactly once.
pub fn read_schedule_csv(path: &Path, sample_period: f64) -> Result<ControlSchedule> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ScheduleRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: schedule file has no rows", path.display())));
    }
    let m = rows.iter().map(|r| r.control).max().unwrap() + 1;
    let slices = rows.iter().map(|r| r.slice).max().unwrap() + 1;
    let mut amps = RMatrix::from_element(m, slices, f64::NAN);
    for row in &rows {
        if !amps[(row.control, row.slice)].is_nan() {
            return Err(Error::Config(format!(
                "{}: duplicate entry for control {} slice {}",
                path.display(),
                row.control,
                row.slice
            )));
        }
        amps[(row.control, row.slice)] = row.amplitude;
    }
    if let Some(idx) = amps.iter().position(|a| a.is_nan()) {
        return Err(Error::Config(format!(
            "{}: missing entry for control {} slice {}",
            path.display(),
            idx % m,
            idx / m
        )));
    }
    ControlSchedule::new(sample_period, amps)
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    j0: f64,
    objective: f64,
    tested_error: Option<f64>,
    step: f64,
}

/// Deterministic part of a trace. Wall-clock times go to a separate file.
pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = writer(path)?;
    for r in records {
        w.serialize(TraceRow {
            iteration: r.iteration,
            j0: r.j0,
            objective: r.objective,
            tested_error: r.tested_error,
            step: r.step,
        })?;
    }
    flush(w, path)
}

pub fn write_timing_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "elapsed_seconds"])?;
    for r in records {
        w.write_record([r.iteration.to_string(), r.elapsed.to_string()])?;
    }
    flush(w, path)
}

pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut w = writer(path)?;
    for b in bins {
        w.serialize(b)?;
    }
    flush(w, path)
}

pub fn write_sweep_csv(path: &Path, surface: &SweepSurface) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["tau1", "tau2", "error"])?;
    for (i, t1) in surface.tau1.iter().enumerate() {
        for (j, t2) in surface.tau2.iter().enumerate() {
            w.write_record([t1.to_string(), t2.to_string(), surface.errors[(i, j)].to_string()])?;
        }
    }
    flush(w, path)
}

pub fn write_smoothness_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["control", "value"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    flush(w, path)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_io(path, e))
}

fn flush(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))?.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Csv(e)
    }
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let sched = crate::presets::random_schedule(&crate::presets::cnot_system(), 7, 1.0, 0.3, 11);
        write_schedule_csv(&path, &sched).unwrap();
        let back = read_schedule_csv(&path, 1.0).unwrap();
        assert_eq!(back, sched);
    }

    #[test]
    fn incomplete_schedule_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "control,slice,amplitude\n0,0,1.0\n1,1,2.0\n").unwrap();
        let err = read_schedule_csv(&path, 1.0).unwrap_err().to_string();
        assert!(err.contains("missing entry"), "{err}");
    }
}
