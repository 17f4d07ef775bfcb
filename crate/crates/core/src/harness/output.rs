//! Trajectory CSV files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrate::Trajectory;

pub const CSV_HEADER: &str = "t,residual_norm,error_vs_oracle,min_z,min_w";

/// One row of a trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub residual_norm: f64,
    pub error_vs_oracle: f64,
    pub min_z: f64,
    pub min_w: f64,
}

/// Rows of `traj`, with the error measured against `x_star`.
pub fn csv_rows(traj: &Trajectory, x_star: &DVector<f64>) -> Vec<CsvRow> {
    traj.samples
        .iter()
        .map(|s| CsvRow {
            t: s.t,
            residual_norm: s.residual_norm,
            error_vs_oracle: (&s.x - x_star).norm(),
            min_z: s.z.min(),
            min_w: s.w.min(),
        })
        .collect()
}

/// Write one row per sample. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn export_csv(traj: &Trajectory, x_star: &DVector<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in csv_rows(traj, x_star) {
            writeln!(out, "{},{},{},{},{}", r.t, r.residual_norm, r.error_vs_oracle, r.min_z, r.min_w)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let invalid = |line: usize, what: String| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {line}: {what}")),
        )
    };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line != CSV_HEADER {
                return Err(invalid(1, format!("unexpected header `{line}`")));
            }
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(i + 1, format!("{e}")))?;
        let [t, residual_norm, error_vs_oracle, min_z, min_w] = fields[..] else {
            return Err(invalid(i + 1, format!("expected 5 fields, got {}", fields.len())));
        };
        rows.push(CsvRow {
            t,
            residual_norm,
            error_vs_oracle,
            min_z,
            min_w,
        });
    }
    Ok(rows)
}
