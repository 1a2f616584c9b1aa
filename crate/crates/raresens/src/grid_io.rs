//! Plain-text grid files.
//!
//! A mean-field file holds the side length `n` followed by `n * n`
//! whitespace-separated values in row-major order, row `j` being the cells
//! at height `(j + 1/2) / n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use raresens_core::darcy::{Grid, VelocityField};

use crate::error::{AppError, AppResult};

pub fn read_mean_field(path: &Path) -> AppResult<(usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_mean_field(&text).map_err(|d| AppError::format(path, d))
}

pub fn parse_mean_field(text: &str) -> Result<(usize, Vec<f64>), String> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or("empty grid file")?
        .parse()
        .map_err(|e| format!("bad grid size: {e}"))?;
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad value {t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != n * n {
        return Err(format!("expected {} values for n = {n}, found {}", n * n, values.len()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(format!("non-finite value {v}"));
    }
    Ok((n, values))
}

pub fn write_mean_field(path: &Path, n: usize, values: &[f64]) -> AppResult<()> {
    let mut out = format!("{n}\n");
    for row in values.chunks(n) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| AppError::io(path, e))
}

/// Cell values as `x,y,value` rows.
pub fn write_cell_csv(path: &Path, grid: Grid, name: &str, values: &[f64]) -> AppResult<()> {
    let mut out = format!("x,y,{name}\n");
    for j in 0..grid.n() {
        for i in 0..grid.n() {
            let _ = writeln!(
                out,
                "{},{},{}",
                grid.center(i),
                grid.center(j),
                values[grid.index(i, j)]
            );
        }
    }
    fs::write(path, out).map_err(|e| AppError::io(path, e))
}

/// Velocity averaged to cell centres as `x,y,vx,vy` rows.
pub fn write_velocity_csv(path: &Path, v: &VelocityField) -> AppResult<()> {
    let g = v.grid;
    let mut out = String::from("x,y,vx,vy\n");
    for j in 0..g.n() {
        for i in 0..g.n() {
            let vx = 0.5 * (v.vx_at(i, j) + v.vx_at(i + 1, j));
            let vy = 0.5 * (v.vy_at(i, j) + v.vy_at(i, j + 1));
            let _ = writeln!(out, "{},{},{vx},{vy}", g.center(i), g.center(j));
        }
    }
    fs::write(path, out).map_err(|e| AppError::io(path, e))
}
