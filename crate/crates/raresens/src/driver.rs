//! The double loop: Latin hypercube samples of the hyper-parameters, an
//! inner rare-event estimate for each, a sparse polynomial chaos fit of the
//! estimates and its Sobol' indices. Also the two studies built on it.
//!
//! Every random draw is derived from `cfg.seed`. The root stream
//! `RandomStream::new(seed, 0)` is split as follows:
//!
//! | child | use |
//! |-------|-----|
//! | 0 | outer design |
//! | 1 | inner estimate `j` from `split(1).split(j)` |
//! | 2 | variability repetitions |
//! | 3 | budget-sweep repetitions |
//! | 4 | `ss-estimate` runs |
//! | 5 | `darcy-demo` draws |
//!
//! so results do not depend on thread count or scheduling.

use raresens_core::mc::{saltelli_indices, BaseDesign, SaltelliDesign};
use raresens_core::pce::{cross_validate_radius, design_matrix, total_order_basis, Family, PCESurrogate};
use raresens_core::sampling::lhs_sample;
use raresens_core::sobol::{sobol_report, SobolReport};
use raresens_core::{Error, RandomStream, UniformBox};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PceSection};
use crate::error::{AppError, AppResult};
use crate::model::{Estimate, Failed, ModelSetup};

/// Why a sample was left out of the fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleStatus {
    Used,
    /// Subset simulation could not separate a level (tied values).
    Degenerate,
    /// The estimate was exactly zero.
    Zero,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Used => "used",
            SampleStatus::Degenerate => "degenerate",
            SampleStatus::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "used" => Some(SampleStatus::Used),
            "degenerate" => Some(SampleStatus::Degenerate),
            "zero" => Some(SampleStatus::Zero),
            _ => None,
        }
    }
}

/// Inner-loop outcome of one hyper-parameter sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub status: SampleStatus,
    pub levels: usize,
    pub n_evals: u64,
    pub p_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    /// Every outer sample, used or not.
    pub xi_samples: Vec<Vec<f64>>,
    /// Sample indices and estimates that entered the fit.
    pub p_hats: Vec<(usize, f64)>,
    pub diagnostics: Vec<SampleRecord>,
    pub surrogate: PCESurrogate,
    /// l1 radius the surrogate was fitted with.
    pub radius: f64,
    pub sobol: SobolReport,
    pub total_evals: u64,
}

impl RunArtifacts {
    pub fn excluded(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.status != SampleStatus::Used)
            .count()
    }
}

pub(crate) fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool starts")
}

/// Latin hypercube design over the hyper-parameter box.
pub fn outer_design(bounds: &UniformBox, n: usize, stream: &RandomStream) -> AppResult<Vec<Vec<f64>>> {
    Ok(lhs_sample(bounds, n, &mut stream.split(0))?)
}

/// Inner estimates of every point, point `j` drawing from
/// `base.split(j)`.
pub fn estimate_all(setup: &ModelSetup, points: &[Vec<f64>], base: &RandomStream) -> Vec<Result<Estimate, Failed>> {
    points
        .par_iter()
        .enumerate()
        .map(|(j, xi)| setup.estimate(xi, &base.split(j as u64)))
        .collect()
}

/// Sorts estimates into used and excluded samples, enforcing the 10%
/// ceiling on exclusions.
pub fn screen(estimates: &[Result<Estimate, Failed>]) -> AppResult<Vec<SampleRecord>> {
    let mut records = Vec::with_capacity(estimates.len());
    for (index, e) in estimates.iter().enumerate() {
        let record = match e {
            Ok(est) => SampleRecord {
                index,
                status: if est.p_hat > 0.0 {
                    SampleStatus::Used
                } else {
                    SampleStatus::Zero
                },
                levels: est.levels,
                n_evals: est.n_evals,
                p_hat: Some(est.p_hat),
            },
            Err(Failed {
                error: Error::DegenerateLevel { level },
                n_evals,
            }) => SampleRecord {
                index,
                status: SampleStatus::Degenerate,
                levels: *level,
                n_evals: *n_evals,
                p_hat: None,
            },
            Err(other) => return Err(other.error.clone().into()),
        };
        records.push(record);
    }
    let excluded = records.iter().filter(|r| r.status != SampleStatus::Used).count();
    if excluded * 10 > records.len() {
        return Err(AppError::TooManyExclusions {
            excluded,
            total: records.len(),
        });
    }
    Ok(records)
}

/// Fits the surrogate, choosing the radius by cross-validation when none
/// is configured.
pub fn fit_surrogate(
    pce: &PceSection,
    bounds: &UniformBox,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> AppResult<(PCESurrogate, f64)> {
    let radius = match pce.fixed_radius() {
        Some(l) => l,
        None => {
            if xs.len() <= bounds.dim() {
                return Err(Error::Underdetermined {
                    rows: xs.len(),
                    dim: bounds.dim(),
                }
                .into());
            }
            let basis = total_order_basis(bounds.dim(), pce.order)?;
            let families = vec![Family::Legendre; bounds.dim()];
            let a = design_matrix(xs, &basis, bounds, &families)?;
            cross_validate_radius(&a, ys, pce.cv_folds.min(xs.len()), pce.cv_grid)?.best
        }
    };
    let (s, _) = PCESurrogate::fit(bounds, pce.order, xs, ys, radius)?;
    Ok((s, radius))
}

fn used_rows(xis: &[Vec<f64>], records: &[SampleRecord]) -> (Vec<Vec<f64>>, Vec<f64>) {
    records
        .iter()
        .filter(|r| r.status == SampleStatus::Used)
        .map(|r| (xis[r.index].clone(), r.p_hat.expect("used samples carry an estimate")))
        .unzip()
}

/// Runs the full double loop described by `cfg`.
pub fn run_double_loop(cfg: &ExperimentConfig) -> AppResult<RunArtifacts> {
    let setup = ModelSetup::from_config(cfg)?;
    let bounds = cfg.hyper_box()?;
    let root = RandomStream::new(cfg.seed, 0);
    let xi_samples = outer_design(&bounds, cfg.n_samp, &root)?;
    let estimates = pool(cfg.threads).install(|| estimate_all(&setup, &xi_samples, &root.split(1)));
    let diagnostics = screen(&estimates)?;
    let (xs, ys) = used_rows(&xi_samples, &diagnostics);
    let (surrogate, radius) = fit_surrogate(&cfg.pce, &bounds, &xs, &ys)?;
    let sobol = sobol_report(&surrogate)?;
    let p_hats = diagnostics
        .iter()
        .filter(|r| r.status == SampleStatus::Used)
        .map(|r| (r.index, r.p_hat.unwrap()))
        .collect();
    let total_evals = diagnostics.iter().map(|r| r.n_evals).sum();
    Ok(RunArtifacts {
        config: cfg.clone(),
        xi_samples,
        p_hats,
        diagnostics,
        surrogate,
        radius,
        sobol,
        total_evals,
    })
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..m).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let std = (0..m)
        .map(|i| {
            if rows.len() < 2 {
                return 0.0;
            }
            let ss: f64 = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    (mean, std)
}

/// Total indices from repeated PCE and pick-and-freeze runs at the same
/// number of probability estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct VariabilityTable {
    /// Probability estimates each pipeline may spend per repetition.
    pub budget: usize,
    /// Base-design size of the pick-and-freeze runs, `budget / (M + 2)`.
    pub n_base: usize,
    pub pce_totals: Vec<Vec<f64>>,
    pub saltelli_totals: Vec<Vec<f64>>,
}

impl VariabilityTable {
    pub fn pce_mean(&self) -> Vec<f64> {
        column_stats(&self.pce_totals).0
    }

    pub fn pce_std(&self) -> Vec<f64> {
        column_stats(&self.pce_totals).1
    }

    pub fn saltelli_mean(&self) -> Vec<f64> {
        column_stats(&self.saltelli_totals).0
    }

    pub fn saltelli_std(&self) -> Vec<f64> {
        column_stats(&self.saltelli_totals).1
    }
}

/// Repeats both pipelines `n_reps` times with `cfg.n_samp` probability
/// estimates each. Repetition `r` draws from `root.split(2).split(r)`.
pub fn variability_study(cfg: &ExperimentConfig, n_reps: usize) -> AppResult<VariabilityTable> {
    if n_reps < 2 {
        return Err(AppError::Config(format!(
            "variability needs at least 2 repetitions, got {n_reps}"
        )));
    }
    let setup = ModelSetup::from_config(cfg)?;
    let bounds = cfg.hyper_box()?;
    let m = bounds.dim();
    let n_base = cfg.n_samp / (m + 2);
    if n_base < 2 {
        return Err(AppError::Config(format!(
            "budget {} leaves fewer than 2 base samples for {m} parameters",
            cfg.n_samp
        )));
    }
    let reps = RandomStream::new(cfg.seed, 0).split(2);
    let rows: Vec<AppResult<(Vec<f64>, Vec<f64>)>> = pool(cfg.threads).install(|| {
        (0..n_reps)
            .into_par_iter()
            .map(|r| {
                let rep = reps.split(r as u64);
                let xis = outer_design(&bounds, cfg.n_samp, &rep)?;
                let ys = estimate_serial(&setup, &xis, &rep.split(1))?;
                let (s, _) = fit_surrogate(&cfg.pce, &bounds, &xis, &ys)?;
                let pce_total = sobol_report(&s)?.total;

                let design = SaltelliDesign::draw(&bounds, n_base, BaseDesign::LatinHypercube, &mut rep.split(2))?;
                let values = estimate_serial(&setup, &design.points(), &rep.split(3))?;
                let saltelli_total = saltelli_indices(&values, n_base, m)?.total;
                Ok((pce_total, saltelli_total))
            })
            .collect()
    });
    let mut pce_totals = Vec::with_capacity(n_reps);
    let mut saltelli_totals = Vec::with_capacity(n_reps);
    for row in rows {
        let (p, s) = row?;
        pce_totals.push(p);
        saltelli_totals.push(s);
    }
    Ok(VariabilityTable {
        budget: cfg.n_samp,
        n_base,
        pce_totals,
        saltelli_totals,
    })
}

fn estimate_serial(setup: &ModelSetup, points: &[Vec<f64>], base: &RandomStream) -> AppResult<Vec<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(j, xi)| Ok(setup.estimate(xi, &base.split(j as u64))?.p_hat))
        .collect()
}

/// Mean and spread of the total indices for one `(N_SS, N_samp)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub n_ss: usize,
    pub n_samp: usize,
    /// Over the repetitions with defined indices; NaN when there are none.
    pub mean_total: Vec<f64>,
    pub std_total: Vec<f64>,
    pub reps: usize,
    /// Repetitions whose surrogate had zero variance, leaving the indices
    /// undefined.
    pub undefined: usize,
}

/// Total indices over a grid of inner and outer sample sizes.
///
/// Each repetition draws one design of the largest outer size; smaller
/// sizes use its leading rows, so the sets are nested. Estimates for a
/// given `N_SS` are shared across outer sizes. Repetition `r` draws from
/// `root.split(3).split(r)`. A repetition whose surrogate is constant is
/// counted in [`SweepCell::undefined`] and left out of the statistics.
pub fn budget_sweep(
    cfg: &ExperimentConfig,
    n_ss_grid: &[usize],
    n_samp_grid: &[usize],
    n_reps: usize,
) -> AppResult<Vec<SweepCell>> {
    if n_ss_grid.is_empty() || n_samp_grid.is_empty() || n_reps == 0 {
        return Err(AppError::Config(
            "budget sweep needs non-empty grids and at least one repetition".into(),
        ));
    }
    let setup = ModelSetup::from_config(cfg)?;
    for &n in n_ss_grid {
        setup
            .with_n_ss(n)
            .ss
            .validate()
            .map_err(|e| AppError::Config(format!("N_SS = {n}: {e}")))?;
    }
    let bounds = cfg.hyper_box()?;
    let n_max = *n_samp_grid.iter().max().unwrap();
    let reps = RandomStream::new(cfg.seed, 0).split(3);
    let pool = pool(cfg.threads);
    // totals[s][k][r]
    let mut totals = vec![vec![Vec::with_capacity(n_reps); n_samp_grid.len()]; n_ss_grid.len()];
    for r in 0..n_reps {
        let rep = reps.split(r as u64);
        let xis = outer_design(&bounds, n_max, &rep)?;
        for (s, &n_ss) in n_ss_grid.iter().enumerate() {
            let inner = setup.with_n_ss(n_ss);
            let estimates = pool.install(|| estimate_all(&inner, &xis, &rep.split(1)));
            for (k, &n_samp) in n_samp_grid.iter().enumerate() {
                let records = screen(&estimates[..n_samp])?;
                let (xs, ys) = used_rows(&xis, &records);
                let (sur, _) = fit_surrogate(&cfg.pce, &bounds, &xs, &ys)?;
                match sobol_report(&sur) {
                    Ok(r) => totals[s][k].push(Some(r.total)),
                    Err(Error::ZeroVariance) => totals[s][k].push(None),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    let mut cells = Vec::new();
    for (s, &n_ss) in n_ss_grid.iter().enumerate() {
        for (k, &n_samp) in n_samp_grid.iter().enumerate() {
            let defined: Vec<Vec<f64>> = totals[s][k].iter().flatten().cloned().collect();
            let (mean_total, std_total) = if defined.is_empty() {
                (vec![f64::NAN; bounds.dim()], vec![f64::NAN; bounds.dim()])
            } else {
                column_stats(&defined)
            };
            cells.push(SweepCell {
                n_ss,
                n_samp,
                mean_total,
                std_total,
                reps: n_reps,
                undefined: n_reps - defined.len(),
            });
        }
    }
    Ok(cells)
}
