//! File emission and the trajectory CSV reader.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back yields bit-identical values. Every file is written to a
//! temporary sibling first and renamed into place.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extraction::Trajectory;
use crate::solver::TraceRow;

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::from(e)
    })
}

/// Pretty JSON with a trailing newline.
pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, json_string(value)?.as_bytes())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// `t`, the states, then the controls; one row per node.
pub fn trajectory_csv(
    traj: &Trajectory,
    controls: &[Vec<f64>],
    state_names: &[String],
    control_names: &[String],
) -> Result<Vec<u8>> {
    if controls.len() != traj.len() {
        return Err(Error::config("controls", "need one control row per node"));
    }
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(state_names.iter().cloned())
        .chain(control_names.iter().cloned())
        .collect();
    let rows = (0..traj.len()).map(|i| {
        std::iter::once(traj.times[i])
            .chain(traj.states[i].iter().copied())
            .chain(controls[i].iter().copied())
            .map(num)
            .collect()
    });
    csv_bytes(&header, rows)
}

/// `t` and the controls.
pub fn controls_csv(times: &[f64], controls: &[Vec<f64>], control_names: &[String]) -> Result<Vec<u8>> {
    let header: Vec<String> = std::iter::once("t".to_string()).chain(control_names.iter().cloned()).collect();
    let rows = times
        .iter()
        .zip(controls)
        .map(|(t, u)| std::iter::once(*t).chain(u.iter().copied()).map(num).collect());
    csv_bytes(&header, rows)
}

/// Convergence trace, one row per accepted step, tagged with the penalty
/// the step was taken at.
pub fn trace_csv(stages: &[(f64, &[TraceRow])]) -> Result<Vec<u8>> {
    let header: Vec<String> = ["lambda", "s", "energy", "max_psi", "ds"].map(String::from).to_vec();
    let rows = stages.iter().flat_map(|(lambda, rows)| {
        rows.iter()
            .map(move |r| [*lambda, r.s, r.energy, r.max_psi, r.ds].map(num).to_vec())
    });
    csv_bytes(&header, rows)
}

/// One row of a sweep table. Missing values mark a failed cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub s: f64,
    pub planning_error: Option<f64>,
    pub energy: Option<f64>,
    pub status: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let header: Vec<String> = ["lambda", "s", "planning_error", "energy", "status"].map(String::from).to_vec();
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let body = rows.iter().map(|r| {
        vec![num(r.lambda), num(r.s), opt(r.planning_error), opt(r.energy), r.status.clone()]
    });
    csv_bytes(&header, body)
}

/// Reads a trajectory CSV written by [`trajectory_csv`]. The header must
/// list `t` and exactly the expected state and control names in order.
pub fn read_trajectory_csv(
    path: &Path,
    state_names: &[String],
    control_names: &[String],
) -> Result<(Trajectory, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectory_csv(&text, state_names, control_names)
}

pub fn parse_trajectory_csv(
    text: &str,
    state_names: &[String],
    control_names: &[String],
) -> Result<(Trajectory, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|_| Error::Schema("missing header".into()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("file is empty".into()));
    }
    let expected: Vec<&str> = std::iter::once("t")
        .chain(state_names.iter().map(String::as_str))
        .chain(control_names.iter().map(String::as_str))
        .collect();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Schema(format!(
            "expected columns [{}], found [{}]",
            expected.join(","),
            found.join(",")
        )));
    }
    let n = state_names.len();
    let mut traj = Trajectory {
        times: vec![],
        states: vec![],
    };
    let mut controls = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Schema(format!("row {}: `{f}` is not a finite number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        traj.times.push(vals[0]);
        traj.states.push(vals[1..1 + n].to_vec());
        controls.push(vals[1 + n..].to_vec());
    }
    if traj.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    if traj.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Schema("times must increase".into()));
    }
    Ok((traj, controls))
}
