//! Subset simulation with the modified Metropolis algorithm.
//!
//! The input law is always the standard normal distribution on `R^d`;
//! models absorb their hyper-parameters into the quantity of interest
//! (an affine map, or scaled field coefficients) so the conditional samplers
//! keep a fixed stationary density.
//!
//! A run starts with a crude Monte Carlo level. While the `p0`-tail
//! threshold of the current level stays below the target `tau`, the
//! `floor(n p0)` samples above it seed as many Markov chains of length
//! `floor(1/p0)`, which populate the next, rarer level. The estimate is the
//! product of the conditional fractions of all intermediate levels times the
//! fraction of final-level samples exceeding `tau`.

use alloc::format;
use alloc::vec::Vec;

use crate::sampling::RandomStream;
use crate::{Error, Result};

/// Parameters of one subset-simulation run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SSConfig {
    pub n_per_level: usize,
    pub p0: f64,
    pub tau: f64,
    pub max_levels: usize,
    pub proposal_spread: f64,
}

impl Default for SSConfig {
    fn default() -> Self {
        Self {
            n_per_level: 1000,
            p0: 0.1,
            tau: 0.0,
            max_levels: 20,
            proposal_spread: 1.0,
        }
    }
}

impl SSConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::invalid(format!("p0 = {} must lie in (0, 1)", self.p0)));
        }
        if self.seeds_per_level() < 1 {
            return Err(Error::invalid(format!(
                "n_per_level * p0 = {} leaves no seeds",
                self.n_per_level as f64 * self.p0
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::invalid("max_levels must be at least 1"));
        }
        if !(self.proposal_spread >= 0.0 && self.proposal_spread.is_finite()) {
            return Err(Error::invalid(format!(
                "proposal spread {} must be finite and non-negative",
                self.proposal_spread
            )));
        }
        if self.tau.is_nan() {
            return Err(Error::invalid("threshold is NaN"));
        }
        Ok(())
    }

    pub fn seeds_per_level(&self) -> usize {
        floor_count(self.n_per_level as f64 * self.p0)
    }

    pub fn chain_len(&self) -> usize {
        floor_count(1.0 / self.p0)
    }
}

/// `floor(x)` for counts such as `n * p0`, tolerant of products like
/// `0.29 * 100 = 28.999999999999996`.
fn floor_count(x: f64) -> usize {
    libm::floor(x * (1.0 + 1e-12)) as usize
}

/// Outcome of [`run_subset_simulation`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SSResult {
    pub p_hat: f64,
    /// Intermediate thresholds followed by the target threshold; strictly
    /// increasing, one entry per level.
    pub thresholds: Vec<f64>,
    /// Conditional probability realised at each level; all but the last
    /// equal `p0` unless ties or rounding forced a smaller seed set.
    pub conditional: Vec<f64>,
    pub n_levels: usize,
    pub n_evals: usize,
    /// Set when `max_levels` ran out before the target was reached.
    pub terminated_early: bool,
}

/// `floor(log p / log p0)`, the number of intermediate levels expected for
/// probability `p`.
pub fn expected_levels(p: f64, p0: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("expected_levels", format!("p = {p} not in (0, 1)")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::domain("expected_levels", format!("p0 = {p0} not in (0, 1)")));
    }
    let ratio = libm::log(p) / libm::log(p0);
    // exact powers of p0 must not lose a level to rounding
    Ok(libm::floor(ratio + 1e-9) as usize)
}

/// Threshold leaving exactly `floor(len * p0)` samples strictly above it.
///
/// The threshold is the midpoint of the `m`-th and `(m+1)`-th largest
/// values. When they tie, the cut moves to the largest `m' < m` with a
/// strict gap. Returns the threshold and the indices of the samples above
/// it, largest first.
pub fn quantile_threshold(samples: &[f64], p0: f64) -> Result<(f64, Vec<usize>)> {
    quantile_threshold_at(samples, p0, 0)
}

fn quantile_threshold_at(samples: &[f64], p0: f64, level: usize) -> Result<(f64, Vec<usize>)> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::domain("quantile_threshold", format!("p0 = {p0}")));
    }
    let needed = libm::ceil(1.0 / p0 * (1.0 - 1e-12)) as usize;
    if samples.len() < needed {
        return Err(Error::domain(
            "quantile_threshold",
            format!("{} samples, need at least {needed}", samples.len()),
        ));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("quantity of interest returned NaN"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].total_cmp(&samples[a]));

    let m = floor_count(samples.len() as f64 * p0);
    let cut = (1..=m)
        .rev()
        .find(|&k| samples[order[k - 1]] > samples[order[k]])
        .ok_or(Error::DegenerateLevel { level })?;
    let tau = 0.5 * (samples[order[cut - 1]] + samples[order[cut]]);
    // the midpoint of adjacent floats can round onto the lower one
    let tau = if tau > samples[order[cut]] {
        tau
    } else {
        samples[order[cut - 1]]
    };
    order.truncate(cut);
    Ok((tau, order))
}

/// A Markov chain produced by [`mma_chain`].
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub n_evals: usize,
}

/// Modified Metropolis chain conditioned on `qoi > level_tau`.
///
/// Each step perturbs every coordinate by `proposal_spread * N(0,1)` and
/// keeps the move with probability `min(1, phi(new)/phi(old))` (`phi` the
/// standard normal density). The assembled candidate replaces the state
/// only if it stays above the level, otherwise the state repeats. The seed
/// is the first point of the chain; a candidate identical to the state is
/// not re-evaluated.
pub fn mma_chain<Q>(
    seed_point: &[f64],
    seed_value: f64,
    chain_len: usize,
    level_tau: f64,
    qoi: &mut Q,
    proposal_spread: f64,
    stream: &mut RandomStream,
) -> Result<Chain>
where
    Q: FnMut(&[f64]) -> Result<f64>,
{
    if !(seed_value > level_tau) {
        return Err(Error::invalid(format!(
            "chain seed value {seed_value} does not exceed level threshold {level_tau}"
        )));
    }
    let d = seed_point.len();
    let mut state = seed_point.to_vec();
    let mut value = seed_value;
    let mut points = Vec::with_capacity(chain_len);
    let mut values = Vec::with_capacity(chain_len);
    let mut n_evals = 0;
    if chain_len == 0 {
        return Ok(Chain {
            points,
            values,
            n_evals,
        });
    }
    points.push(state.clone());
    values.push(value);

    let mut candidate = alloc::vec![0.0; d];
    for _ in 1..chain_len {
        let mut moved = false;
        for k in 0..d {
            let proposal = state[k] + proposal_spread * stream.standard_normal();
            let log_ratio = 0.5 * (state[k] * state[k] - proposal * proposal);
            let u = stream.uniform_open();
            if log_ratio >= 0.0 || libm::log(u) < log_ratio {
                candidate[k] = proposal;
                moved |= proposal != state[k];
            } else {
                candidate[k] = state[k];
            }
        }
        if moved {
            let candidate_value = qoi(&candidate)?;
            n_evals += 1;
            if candidate_value.is_nan() {
                return Err(Error::invalid("quantity of interest returned NaN"));
            }
            if candidate_value > level_tau {
                state.copy_from_slice(&candidate);
                value = candidate_value;
            }
        }
        points.push(state.clone());
        values.push(value);
    }
    Ok(Chain {
        points,
        values,
        n_evals,
    })
}

/// Estimates `P(qoi(theta) > cfg.tau)` for `theta ~ N(0, I_dim)`.
///
/// Level `l` (0-based) draws from `stream.split(l)`; chain `c` of a level
/// uses `stream.split(l).split(c)`, so results do not depend on the order in
/// which chains are run.
pub fn run_subset_simulation<Q>(mut qoi: Q, dim: usize, cfg: &SSConfig, stream: &RandomStream) -> Result<SSResult>
where
    Q: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::invalid("input dimension must be at least 1"));
    }
    let n = cfg.n_per_level;
    let chain_len = cfg.chain_len();

    let mut level_stream = stream.split(0);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut values: Vec<f64> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut theta = alloc::vec![0.0; dim];
        level_stream.fill_standard_normal(&mut theta);
        values.push(qoi(&theta)?);
        points.push(theta);
    }
    let mut n_evals = n;
    let mut thresholds = Vec::new();
    let mut conditional = Vec::new();
    let mut level = 1;
    let mut terminated_early = false;

    loop {
        let exceed_target = values.iter().filter(|&&v| v > cfg.tau).count();
        let (tau_level, seeds) = match quantile_threshold_at(&values, cfg.p0, level) {
            Ok(cut) => cut,
            // ties are harmless once the target is already reached
            Err(Error::DegenerateLevel { .. }) if exceed_target as f64 >= cfg.p0 * values.len() as f64 => {
                break;
            }
            Err(e) => return Err(e),
        };
        if tau_level >= cfg.tau {
            break;
        }
        if level == cfg.max_levels {
            terminated_early = true;
            break;
        }

        thresholds.push(tau_level);
        conditional.push(seeds.len() as f64 / values.len() as f64);

        let base = stream.split(level as u64);
        let mut next_points = Vec::with_capacity(seeds.len() * chain_len);
        let mut next_values = Vec::with_capacity(seeds.len() * chain_len);
        for (c, &idx) in seeds.iter().enumerate() {
            let chain = mma_chain(
                &points[idx],
                values[idx],
                chain_len,
                tau_level,
                &mut qoi,
                cfg.proposal_spread,
                &mut base.split(c as u64),
            )?;
            n_evals += chain.n_evals;
            next_points.extend(chain.points);
            next_values.extend(chain.values);
        }
        points = next_points;
        values = next_values;
        level += 1;
    }

    let final_fraction = values.iter().filter(|&&v| v > cfg.tau).count() as f64 / values.len() as f64;
    conditional.push(final_fraction);
    thresholds.push(cfg.tau);
    let p_hat = conditional.iter().product();
    Ok(SSResult {
        p_hat,
        thresholds,
        conditional,
        n_levels: level,
        n_evals,
        terminated_early,
    })
}
