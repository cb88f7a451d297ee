//! CSV and JSON formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so output
//! depends only on the values and is stable across runs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arx::Dataset;
use crate::error::{config_err, Result};
use crate::experiments::TrialRecord;
use crate::regions::IndicatorGrid;

#[derive(Serialize, Deserialize)]
struct DatasetRow {
    t: usize,
    u: f64,
    y: f64,
}

/// Dataset as CSV with header `t,u,y`, rows `t = 1..n`. Initial conditions are not written.
pub fn dataset_csv(ds: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, (&u, &y)) in ds.u.iter().zip(&ds.y).enumerate() {
        w.serialize(DatasetRow { t: i + 1, u, y })?;
    }
    into_string(w)
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_file(path, dataset_csv(ds)?)
}

/// Reads a `t,u,y` CSV; rows must be numbered `1..n` in order.
pub fn read_dataset_csv(path: &Path, y_init: Vec<f64>, u_init: Vec<f64>) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut u, mut y) = (Vec::new(), Vec::new());
    for (i, row) in r.deserialize::<DatasetRow>().enumerate() {
        let row = row?;
        if row.t != i + 1 {
            return Err(config_err(format!("row {}: expected t = {}, found {}", i + 1, i + 1, row.t)));
        }
        u.push(row.u);
        y.push(row.y);
    }
    Dataset::new(u, y, y_init, u_init)
}

/// Region CSV: one row per node in lattice order, columns `theta_1..theta_d,rank,included`.
pub fn region_csv(grid: &IndicatorGrid) -> Result<String> {
    let d = grid.spec.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=d).map(|k| format!("theta_{k}")).collect();
    header.push("rank".into());
    header.push("included".into());
    w.write_record(&header)?;
    for (i, (&rank, &inc)) in grid.ranks.iter().zip(&grid.verdicts).enumerate() {
        let mut rec: Vec<String> = grid.node(i).iter().map(f64::to_string).collect();
        rec.push(rank.to_string());
        rec.push(u8::from(inc).to_string());
        w.write_record(&rec)?;
    }
    into_string(w)
}

pub fn write_region_csv(grid: &IndicatorGrid, path: &Path) -> Result<()> {
    write_file(path, region_csv(grid)?)
}

/// Per-trial coverage records as CSV.
pub fn trials_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    into_string(w)
}

pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    write_file(path, trials_csv(records)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_file(path, json_string(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, contents: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
