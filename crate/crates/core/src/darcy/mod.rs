//! Single-phase Darcy flow through a log-normal permeability field on the
//! unit square, with the hitting time of a tracked particle as the quantity
//! of interest.
//!
//! Cells are indexed `k = j * n + i` with `i` along `x` and `j` along `y`;
//! the centre of cell `(i, j)` is `((i + 1/2) h, (j + 1/2) h)`. Pressure is
//! held at 1 on `x = 0` and 0 on `x = 1`; the horizontal walls are sealed.

mod flow;
mod kle;
mod tracking;

pub use flow::{darcy_velocity, solve_pressure, VelocityField};
pub use kle::{n_kl_for_energy, realize_log_perm, FieldRealization, KleBasis, KleTarget};
pub use tracking::{hitting_time, Hitting, TrackingOptions};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Uniform `n x n` cell grid on the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid(format!("grid needs at least 4 cells per side, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    /// Cell-centre coordinate of index `i` along either axis.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }
}

/// Correlation lengths and amplitude of the log-permeability field.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DarcyHyper {
    pub lx: f64,
    pub ly: f64,
    pub sigma_a: f64,
}

impl DarcyHyper {
    pub fn new(lx: f64, ly: f64, sigma_a: f64) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::invalid(format!(
                "correlation lengths ({lx}, {ly}) must be positive"
            )));
        }
        if !(sigma_a >= 0.0 && sigma_a.is_finite()) {
            return Err(Error::invalid(format!(
                "field amplitude {sigma_a} must be non-negative"
            )));
        }
        Ok(Self { lx, ly, sigma_a })
    }

    pub fn nominal() -> Self {
        Self {
            lx: 0.4,
            ly: 0.4,
            sigma_a: 0.8,
        }
    }

    pub fn from_xi(xi: &[f64]) -> Result<Self> {
        match xi {
            [lx, ly, s] => Self::new(*lx, *ly, *s),
            _ => Err(Error::invalid(format!("expected 3 hyper-parameters, got {}", xi.len()))),
        }
    }

    pub fn to_xi(&self) -> Vec<f64> {
        vec![self.lx, self.ly, self.sigma_a]
    }
}

/// Everything needed to map a standard normal vector to a hitting time
/// for one hyper-parameter setting.
#[derive(Clone, Debug)]
pub struct DarcyContext {
    pub grid: Grid,
    pub hyper: DarcyHyper,
    pub basis: KleBasis,
    pub mean_field: Vec<f64>,
    pub start: [f64; 2],
    pub tracking: TrackingOptions,
}

/// Intermediate fields of one forward solve.
#[derive(Clone, Debug)]
pub struct DarcySolution {
    pub field: FieldRealization,
    pub pressure: Vec<f64>,
    pub velocity: VelocityField,
    pub hitting: Hitting,
}

impl DarcyContext {
    /// Decomposes the covariance for `hyper` and keeps `n_kl` modes. A
    /// missing mean field means `a = 0` on average.
    pub fn new(grid: Grid, hyper: DarcyHyper, n_kl: usize, mean_field: Option<Vec<f64>>) -> Result<Self> {
        let mean_field = match mean_field {
            Some(m) if m.len() != grid.cells() => {
                return Err(Error::invalid(format!(
                    "mean field has {} values for {} cells",
                    m.len(),
                    grid.cells()
                )))
            }
            Some(m) => m,
            None => vec![0.0; grid.cells()],
        };
        let basis = KleBasis::decompose(grid, hyper.lx, hyper.ly, KleTarget::Count(n_kl))?;
        Ok(Self {
            grid,
            hyper,
            basis,
            mean_field,
            start: [0.0, 0.5],
            tracking: TrackingOptions::default(),
        })
    }

    /// Number of standard normal inputs.
    pub fn dim(&self) -> usize {
        self.basis.n_kl()
    }

    pub fn solve(&self, theta: &[f64]) -> Result<DarcySolution> {
        let field = realize_log_perm(&self.basis, theta, &self.mean_field, self.hyper.sigma_a)?;
        let pressure = solve_pressure(self.grid, &field.perm)?;
        let velocity = darcy_velocity(self.grid, &field.perm, &pressure)?;
        let hitting = hitting_time(&velocity, self.start, &self.tracking)?;
        Ok(DarcySolution {
            field,
            pressure,
            velocity,
            hitting,
        })
    }

    /// Hitting time of the particle released at `start`; censored runs
    /// report the time cap.
    pub fn qoi(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.solve(theta)?.hitting.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RandomStream;

    #[test]
    fn grid_geometry() {
        let g = Grid::new(4).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.center(0), 0.125);
        assert_eq!(g.index(1, 2), 9);
        assert!(Grid::new(3).is_err());
    }

    #[test]
    fn hyper_validation() {
        assert!(DarcyHyper::new(0.0, 1.0, 1.0).is_err());
        assert!(DarcyHyper::new(1.0, 1.0, -1.0).is_err());
        assert!(DarcyHyper::new(1.0, 1.0, 0.0).is_ok());
        let h = DarcyHyper::nominal();
        assert_eq!(DarcyHyper::from_xi(&h.to_xi()).unwrap(), h);
    }

    #[test]
    fn zero_input_gives_unit_time() {
        let ctx = DarcyContext::new(Grid::new(16).unwrap(), DarcyHyper::nominal(), 20, None).unwrap();
        let q = ctx.qoi(&vec![0.0; ctx.dim()]).unwrap();
        assert!((q - 1.0).abs() < 1e-3);
    }

    #[test]
    fn hitting_times_are_positive_and_right_skewed() {
        let ctx = DarcyContext::new(Grid::new(16).unwrap(), DarcyHyper::nominal(), 30, None).unwrap();
        let mut s = RandomStream::new(8, 0);
        let mut theta = vec![0.0; ctx.dim()];
        let q: Vec<f64> = (0..1500)
            .map(|_| {
                s.fill_standard_normal(&mut theta);
                ctx.qoi(&theta).unwrap()
            })
            .collect();
        assert!(q.iter().all(|&v| v > 0.0));
        let n = q.len() as f64;
        let m = q.iter().sum::<f64>() / n;
        let m2 = q.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let m3 = q.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
        assert!(m3 / libm::pow(m2, 1.5) > 0.0);
    }

    #[test]
    fn mean_field_length_is_checked() {
        let g = Grid::new(8).unwrap();
        assert!(DarcyContext::new(g, DarcyHyper::nominal(), 4, Some(vec![0.0; 10])).is_err());
    }
}
