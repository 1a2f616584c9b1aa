//! Maps one hyper-parameter sample to an estimate of `P(q > tau | xi)`.

use std::cell::Cell;
use std::path::Path;

use raresens_core::analytic::AnalyticHyper;
use raresens_core::darcy::{n_kl_for_energy, DarcyContext, DarcyHyper, Grid, TrackingOptions};
use raresens_core::subset::{run_subset_simulation, SSConfig};
use raresens_core::{Error, RandomStream};

use crate::config::{Estimator, ExperimentConfig, ModelKind};
use crate::error::{AppError, AppResult};
use crate::grid_io::read_mean_field;

/// Outcome of one inner estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub p_hat: f64,
    /// Subset-simulation levels; 0 for the closed form.
    pub levels: usize,
    /// Model calls made for this estimate.
    pub n_evals: u64,
    pub terminated_early: bool,
}

/// A failed estimate and the model calls spent before it failed.
#[derive(Clone, Debug, PartialEq)]
pub struct Failed {
    pub error: Error,
    pub n_evals: u64,
}

impl From<Error> for Failed {
    fn from(error: Error) -> Self {
        Failed { error, n_evals: 0 }
    }
}

impl From<Failed> for crate::error::AppError {
    fn from(f: Failed) -> Self {
        f.error.into()
    }
}

#[derive(Clone, Debug)]
pub struct DarcySetup {
    pub grid: Grid,
    pub n_kl: usize,
    pub mean_field: Option<Vec<f64>>,
    pub tracking: TrackingOptions,
}

impl DarcySetup {
    pub fn context(&self, xi: &[f64]) -> raresens_core::Result<DarcyContext> {
        let hyper = DarcyHyper::from_xi(xi)?;
        let mut ctx = DarcyContext::new(self.grid, hyper, self.n_kl, self.mean_field.clone())?;
        ctx.tracking = self.tracking;
        Ok(ctx)
    }
}

/// Everything fixed across the outer loop.
#[derive(Clone, Debug)]
pub struct ModelSetup {
    pub kind: ModelKind,
    pub estimator: Estimator,
    pub ss: SSConfig,
    pub darcy: Option<DarcySetup>,
}

impl ModelSetup {
    /// For Darcy, the mode count is fixed by the shortest correlation
    /// lengths in the box so every sample has the same input dimension.
    pub fn from_config(cfg: &ExperimentConfig) -> AppResult<Self> {
        cfg.validate()?;
        let darcy = match cfg.model {
            ModelKind::Analytic => None,
            ModelKind::Darcy => {
                let grid = Grid::new(cfg.darcy.grid).map_err(|e| AppError::Config(e.to_string()))?;
                let bounds = cfg.hyper_box()?;
                let n_kl = match cfg.darcy.n_kl {
                    Some(k) => k,
                    None => n_kl_for_energy(grid, bounds.lower()[0], bounds.lower()[1], cfg.darcy.energy)?,
                };
                if n_kl > grid.cells() {
                    return Err(AppError::Config(format!(
                        "darcy.n_kl {n_kl} exceeds {} cells",
                        grid.cells()
                    )));
                }
                let mean_field = match &cfg.darcy.mean_field {
                    Some(path) => Some(load_mean_field(path, grid)?),
                    None => None,
                };
                Some(DarcySetup {
                    grid,
                    n_kl,
                    mean_field,
                    tracking: TrackingOptions {
                        t_cap: cfg.darcy.t_cap,
                        ..TrackingOptions::default()
                    },
                })
            }
        };
        Ok(Self {
            kind: cfg.model,
            estimator: cfg.estimator,
            ss: cfg.ss_config(),
            darcy,
        })
    }

    /// Same setup with a different number of samples per level.
    pub fn with_n_ss(&self, n: usize) -> Self {
        let mut s = self.clone();
        s.ss.n_per_level = n;
        s
    }

    pub fn estimate(&self, xi: &[f64], stream: &RandomStream) -> Result<Estimate, Failed> {
        match (self.kind, self.estimator) {
            (ModelKind::Analytic, Estimator::Exact) => {
                let h = AnalyticHyper::from_xi(xi)?;
                Ok(Estimate {
                    p_hat: h.exact_probability(self.ss.tau),
                    levels: 0,
                    n_evals: 0,
                    terminated_early: false,
                })
            }
            (ModelKind::Analytic, Estimator::Ss) => {
                let h = AnalyticHyper::from_xi(xi)?;
                self.subset(h.dim(), |z| h.standardized_qoi(z), stream)
            }
            (ModelKind::Darcy, Estimator::Ss) => {
                let setup = self.darcy.as_ref().expect("darcy setup present for the darcy model");
                let ctx = setup.context(xi)?;
                self.subset(ctx.dim(), |theta| ctx.qoi(theta), stream)
            }
            (ModelKind::Darcy, Estimator::Exact) => {
                Err(Error::InvalidArgument("no closed form for the darcy model".into()).into())
            }
        }
    }

    fn subset<Q>(&self, dim: usize, mut qoi: Q, stream: &RandomStream) -> Result<Estimate, Failed>
    where
        Q: FnMut(&[f64]) -> raresens_core::Result<f64>,
    {
        let calls = Cell::new(0u64);
        let counted = |x: &[f64]| {
            calls.set(calls.get() + 1);
            qoi(x)
        };
        let r = run_subset_simulation(counted, dim, &self.ss, stream).map_err(|error| Failed {
            error,
            n_evals: calls.get(),
        })?;
        debug_assert_eq!(r.n_evals as u64, calls.get());
        Ok(Estimate {
            p_hat: r.p_hat,
            levels: r.n_levels,
            n_evals: calls.get(),
            terminated_early: r.terminated_early,
        })
    }
}

fn load_mean_field(path: &Path, grid: Grid) -> AppResult<Vec<f64>> {
    let (n, values) = read_mean_field(path)?;
    if n != grid.n() {
        return Err(AppError::Config(format!(
            "{}: mean field is {n}x{n} but the grid is {}x{}",
            path.display(),
            grid.n(),
            grid.n()
        )));
    }
    Ok(values)
}
