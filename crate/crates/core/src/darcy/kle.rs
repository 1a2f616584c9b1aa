//! Karhunen-Loeve expansion of the separable exponential covariance
//! `exp(-|x1 - y1|/lx - |x2 - y2|/ly)` on the cell centres.
//!
//! The kernel factors, so the 2-D eigenpairs are products of two 1-D
//! eigenpairs. Each 1-D operator is discretised with midpoint weights `h`;
//! modes are scaled to unit `L^2` norm, i.e. `sum_k e(x_k)^2 h^2 = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;

use super::Grid;
use crate::{Error, Result};

/// How many modes to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KleTarget {
    /// Smallest count whose eigenvalues reach this share of the trace.
    Energy(f64),
    Count(usize),
}

/// Leading eigenpairs of the discretised covariance operator.
#[derive(Clone, Debug)]
pub struct KleBasis {
    grid: Grid,
    eigenvalues: Vec<f64>,
    // mode k occupies modes[k * cells .. (k + 1) * cells]
    modes: Vec<f64>,
    trace: f64,
}

struct Eigen1d {
    values: Vec<f64>,
    // column-major n x n, column c is the eigenvector of values[c]
    vectors: DMatrix<f64>,
}

fn eigen_1d(grid: Grid, ell: f64) -> Result<Eigen1d> {
    let n = grid.n();
    let h = grid.h();
    let c = DMatrix::from_fn(n, n, |i, j| {
        libm::exp(-libm::fabs(grid.center(i) - grid.center(j)) / ell) * h
    });
    let eig = c.symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    if let Some(bad) = values.iter().find(|&&v| v < -1e-10 * max) {
        return Err(Error::Decomposition(format!(
            "negative eigenvalue {bad:e} for length {ell}"
        )));
    }
    for v in &mut values {
        *v = v.max(0.0);
    }
    let mut vectors = eig.eigenvectors;
    for col in 0..n {
        // fix the sign by the first entry of appreciable size
        let scale = vectors.column(col).amax();
        let first = vectors
            .column(col)
            .iter()
            .copied()
            .find(|v| libm::fabs(*v) > 1e-6 * scale)
            .unwrap_or(1.0);
        if first < 0.0 {
            vectors.column_mut(col).neg_mut();
        }
    }
    Ok(Eigen1d { values, vectors })
}

fn sorted_products(x: &Eigen1d, y: &Eigen1d) -> Vec<(f64, usize, usize)> {
    let mut pairs = Vec::with_capacity(x.values.len() * y.values.len());
    for (ix, lx) in x.values.iter().enumerate() {
        for (iy, ly) in y.values.iter().enumerate() {
            pairs.push((lx * ly, ix, iy));
        }
    }
    pairs.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => (a.1 + a.2, a.1).cmp(&(b.1 + b.2, b.1)),
        other => other,
    });
    pairs
}

fn count_for_energy(pairs: &[(f64, usize, usize)], trace: f64, target: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in pairs.iter().enumerate() {
        acc += p.0;
        if acc >= target * trace * (1.0 - 1e-12) {
            return k + 1;
        }
    }
    pairs.len()
}

fn check_target(target: KleTarget, cells: usize) -> Result<()> {
    match target {
        KleTarget::Energy(e) if !(e > 0.0 && e <= 1.0) => {
            Err(Error::invalid(format!("energy fraction {e} not in (0, 1]")))
        }
        KleTarget::Count(k) if k == 0 || k > cells => Err(Error::invalid(format!("mode count {k} not in 1..={cells}"))),
        _ => Ok(()),
    }
}

/// Number of modes needed to retain `energy` of the trace.
pub fn n_kl_for_energy(grid: Grid, lx: f64, ly: f64, energy: f64) -> Result<usize> {
    check_target(KleTarget::Energy(energy), grid.cells())?;
    let x = eigen_1d(grid, lx)?;
    let y = eigen_1d(grid, ly)?;
    let pairs = sorted_products(&x, &y);
    let trace: f64 = pairs.iter().map(|p| p.0).sum();
    Ok(count_for_energy(&pairs, trace, energy))
}

impl KleBasis {
    pub fn decompose(grid: Grid, lx: f64, ly: f64, target: KleTarget) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::invalid(format!(
                "correlation lengths ({lx}, {ly}) must be positive"
            )));
        }
        check_target(target, grid.cells())?;
        let ex = eigen_1d(grid, lx)?;
        let ey = eigen_1d(grid, ly)?;
        let pairs = sorted_products(&ex, &ey);
        let trace: f64 = pairs.iter().map(|p| p.0).sum();
        let keep = match target {
            KleTarget::Energy(e) => count_for_energy(&pairs, trace, e),
            KleTarget::Count(k) => k,
        };
        if !(pairs[keep - 1].0 > 0.0) {
            return Err(Error::Decomposition(format!("mode {keep} has zero eigenvalue")));
        }
        let n = grid.n();
        let inv_h = 1.0 / grid.h();
        let mut modes = vec![0.0; keep * grid.cells()];
        for (k, &(_, ix, iy)) in pairs[..keep].iter().enumerate() {
            let out = &mut modes[k * grid.cells()..(k + 1) * grid.cells()];
            for j in 0..n {
                let vy = ey.vectors[(j, iy)] * inv_h;
                for i in 0..n {
                    out[grid.index(i, j)] = ex.vectors[(i, ix)] * vy;
                }
            }
        }
        Ok(Self {
            grid,
            eigenvalues: pairs[..keep].iter().map(|p| p.0).collect(),
            modes,
            trace,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n_kl(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        let c = self.grid.cells();
        &self.modes[k * c..(k + 1) * c]
    }

    /// Sum of every eigenvalue, retained or not.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn energy_fraction(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.trace
    }
}

/// A log-permeability field and its exponential.
#[derive(Clone, Debug)]
pub struct FieldRealization {
    pub log_perm: Vec<f64>,
    pub perm: Vec<f64>,
}

/// `a = mean + sigma_a sum_k sqrt(lambda_k) theta_k e_k`, `kappa = exp(a)`.
pub fn realize_log_perm(basis: &KleBasis, theta: &[f64], mean_field: &[f64], sigma_a: f64) -> Result<FieldRealization> {
    if theta.len() != basis.n_kl() {
        return Err(Error::invalid(format!(
            "{} inputs for {} modes",
            theta.len(),
            basis.n_kl()
        )));
    }
    let cells = basis.grid.cells();
    if mean_field.len() != cells {
        return Err(Error::invalid(format!(
            "mean field has {} values for {cells} cells",
            mean_field.len()
        )));
    }
    let mut log_perm = mean_field.to_vec();
    for (k, (t, lam)) in theta.iter().zip(&basis.eigenvalues).enumerate() {
        let w = sigma_a * libm::sqrt(*lam) * t;
        if w == 0.0 {
            continue;
        }
        for (a, e) in log_perm.iter_mut().zip(basis.mode(k)) {
            *a += w * e;
        }
    }
    let perm = log_perm.iter().map(|a| libm::exp(*a)).collect();
    Ok(FieldRealization { log_perm, perm })
}
