//! Cell-centred finite-volume pressure solve and face velocities.
//!
//! Interior faces use the harmonic mean of the two cell permeabilities;
//! a Dirichlet face sits half a cell from the centre, which doubles its
//! transmissibility.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Grid;
use crate::linalg::BandedSpd;
use crate::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-10;

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn check_perm(grid: Grid, perm: &[f64]) -> Result<()> {
    if perm.len() != grid.cells() {
        return Err(Error::invalid(format!(
            "{} permeabilities for {} cells",
            perm.len(),
            grid.cells()
        )));
    }
    if let Some(k) = perm.iter().position(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(Error::domain(
            "solve_pressure",
            format!("permeability {} in cell {k}", perm[k]),
        ));
    }
    Ok(())
}

/// Pressure at the cell centres for `-div(kappa grad p) = 0`.
pub fn solve_pressure(grid: Grid, perm: &[f64]) -> Result<Vec<f64>> {
    check_perm(grid, perm)?;
    let n = grid.n();
    let mut a = BandedSpd::zeros(grid.cells(), n);
    let mut rhs = vec![0.0; grid.cells()];
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            if i + 1 < n {
                let t = harmonic(perm[k], perm[k + 1]);
                a.add(k, k, t);
                a.add(k + 1, k + 1, t);
                a.add(k + 1, k, -t);
            }
            if j + 1 < n {
                let up = grid.index(i, j + 1);
                let t = harmonic(perm[k], perm[up]);
                a.add(k, k, t);
                a.add(up, up, t);
                a.add(up, k, -t);
            }
        }
        let left = grid.index(0, j);
        let t = 2.0 * perm[left];
        a.add(left, left, t);
        rhs[left] += t;
        let right = grid.index(n - 1, j);
        a.add(right, right, 2.0 * perm[right]);
    }
    let p = a.clone().cholesky()?.solve(&rhs);
    let ap = a.mul_vec(&p);
    let r = ap.iter().zip(&rhs).map(|(x, b)| (x - b) * (x - b)).sum::<f64>();
    let b = rhs.iter().map(|x| x * x).sum::<f64>();
    let rel = libm::sqrt(r / b);
    if !(rel <= RESIDUAL_TOL) {
        return Err(Error::Solver { residual: rel });
    }
    Ok(p)
}

/// Normal velocities on the cell faces.
///
/// `vx` holds `n` rows of `n + 1` vertical-face values (face `i` at
/// `x = i h`), `vy` holds `n + 1` rows of `n` horizontal-face values.
#[derive(Clone, Debug)]
pub struct VelocityField {
    pub grid: Grid,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VelocityField {
    pub fn vx_at(&self, face: usize, row: usize) -> f64 {
        self.vx[row * (self.grid.n() + 1) + face]
    }

    pub fn vy_at(&self, col: usize, face: usize) -> f64 {
        self.vy[face * self.grid.n() + col]
    }

    /// Net outward flux of every cell.
    pub fn divergence(&self) -> Vec<f64> {
        let n = self.grid.n();
        let h = self.grid.h();
        let mut out = vec![0.0; self.grid.cells()];
        for j in 0..n {
            for i in 0..n {
                out[self.grid.index(i, j)] =
                    h * (self.vx_at(i + 1, j) - self.vx_at(i, j) + self.vy_at(i, j + 1) - self.vy_at(i, j));
            }
        }
        out
    }

    /// Total flux through `x = 0`.
    pub fn inflow(&self) -> f64 {
        (0..self.grid.n()).map(|j| self.vx_at(0, j)).sum::<f64>() * self.grid.h()
    }

    /// Total flux through `x = 1`.
    pub fn outflow(&self) -> f64 {
        let n = self.grid.n();
        (0..n).map(|j| self.vx_at(n, j)).sum::<f64>() * self.grid.h()
    }

    /// Velocity at an arbitrary point: each component is bilinear between
    /// its face values and cell-centre rows, held constant beyond the
    /// outermost centres.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let n = self.grid.n();
        let inv_h = n as f64;
        let (i, tx) = face_coord(x * inv_h, n);
        let (j, ty) = center_coord(y * inv_h - 0.5, n);
        let u = lerp2(
            self.vx_at(i, j),
            self.vx_at(i + 1, j),
            self.vx_at(i, j + 1),
            self.vx_at(i + 1, j + 1),
            tx,
            ty,
        );
        let (jf, sy) = face_coord(y * inv_h, n);
        let (ic, sx) = center_coord(x * inv_h - 0.5, n);
        let v = lerp2(
            self.vy_at(ic, jf),
            self.vy_at(ic + 1, jf),
            self.vy_at(ic, jf + 1),
            self.vy_at(ic + 1, jf + 1),
            sx,
            sy,
        );
        [u, v]
    }
}

// lower face index and offset within the cell
fn face_coord(s: f64, n: usize) -> (usize, f64) {
    let s = s.clamp(0.0, n as f64);
    let i = (libm::floor(s) as usize).min(n - 1);
    (i, s - i as f64)
}

// lower centre index and offset between two centres
fn center_coord(s: f64, n: usize) -> (usize, f64) {
    let s = s.clamp(0.0, (n - 1) as f64);
    let i = (libm::floor(s) as usize).min(n - 2);
    (i, s - i as f64)
}

fn lerp2(a00: f64, a10: f64, a01: f64, a11: f64, tx: f64, ty: f64) -> f64 {
    let bottom = a00 + (a10 - a00) * tx;
    let top = a01 + (a11 - a01) * tx;
    bottom + (top - bottom) * ty
}

/// Face velocities `-kappa grad p` built from the same transmissibilities as
/// the pressure system, so each cell balances to solver accuracy.
pub fn darcy_velocity(grid: Grid, perm: &[f64], pressure: &[f64]) -> Result<VelocityField> {
    check_perm(grid, perm)?;
    if pressure.len() != grid.cells() {
        return Err(Error::invalid(format!(
            "{} pressures for {} cells",
            pressure.len(),
            grid.cells()
        )));
    }
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let mut vx = vec![0.0; n * (n + 1)];
    let mut vy = vec![0.0; (n + 1) * n];
    for j in 0..n {
        let row = &mut vx[j * (n + 1)..(j + 1) * (n + 1)];
        let first = grid.index(0, j);
        row[0] = 2.0 * perm[first] * (1.0 - pressure[first]) * inv_h;
        for i in 1..n {
            let (l, r) = (grid.index(i - 1, j), grid.index(i, j));
            row[i] = harmonic(perm[l], perm[r]) * (pressure[l] - pressure[r]) * inv_h;
        }
        let last = grid.index(n - 1, j);
        row[n] = 2.0 * perm[last] * pressure[last] * inv_h;
    }
    for j in 1..n {
        for i in 0..n {
            let (b, t) = (grid.index(i, j - 1), grid.index(i, j));
            vy[j * n + i] = harmonic(perm[b], perm[t]) * (pressure[b] - pressure[t]) * inv_h;
        }
    }
    Ok(VelocityField { grid, vx, vy })
}
