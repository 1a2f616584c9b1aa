//! Linear-Gaussian limit state with a closed-form exceedance probability.
//!
//! `q(theta) = -(1/sqrt d) sum theta_i` with independent
//! `theta_i ~ N(mu_i, sigma_i^2)` is itself normal, so `P(q > tau)` is known
//! exactly. The hyper-parameter vector is `xi = (mu_1..mu_d, sigma_1^2..sigma_d^2)`;
//! the variances, not the standard deviations, are the perturbed quantities.

use alloc::format;
use alloc::vec::Vec;

use crate::mc::cov_bound;
use crate::sampling::{uniform_box_sample, RandomStream, UniformBox};
use crate::special::normal_sf;
use crate::{Error, Result};

/// Means and variances of the `d` independent normal inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticHyper {
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl AnalyticHyper {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != variances.len() {
            return Err(Error::invalid(format!(
                "{} means and {} variances",
                means.len(),
                variances.len()
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("variance {v} must be positive")));
        }
        Ok(Self { means, variances })
    }

    /// Splits `xi = (means, variances)`.
    pub fn from_xi(xi: &[f64]) -> Result<Self> {
        if xi.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "hyper-parameter vector of odd length {}",
                xi.len()
            )));
        }
        let d = xi.len() / 2;
        Self::new(xi[..d].to_vec(), xi[d..].to_vec())
    }

    /// Five-dimensional reference setting `(1,2,3,4,5; 10,8,6,4,2)`.
    pub fn nominal() -> Self {
        Self {
            means: alloc::vec![1.0, 2.0, 3.0, 4.0, 5.0],
            variances: alloc::vec![10.0, 8.0, 6.0, 4.0, 2.0],
        }
    }

    pub fn to_xi(&self) -> Vec<f64> {
        self.means.iter().chain(&self.variances).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Mean and variance of `q(theta)`.
    pub fn pushforward(&self) -> (f64, f64) {
        let d = self.dim() as f64;
        let mean = -self.means.iter().sum::<f64>() / libm::sqrt(d);
        let var = self.variances.iter().sum::<f64>() / d;
        (mean, var)
    }

    /// `P(q > tau) = 1/2 erfc((tau - mu_q) / (sqrt 2 sigma_q))`.
    pub fn exact_probability(&self, tau: f64) -> f64 {
        let (mean, var) = self.pushforward();
        normal_sf((tau - mean) / libm::sqrt(var)).clamp(0.0, 1.0)
    }

    pub fn sample_theta(&self, stream: &mut RandomStream) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.variances)
            .map(|(m, v)| m + libm::sqrt(*v) * stream.standard_normal())
            .collect()
    }

    /// The quantity of interest seen from standard normal inputs `z`,
    /// `q(mu + sigma z)`.
    pub fn standardized_qoi(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::invalid(format!(
                "{} inputs for dimension {}",
                z.len(),
                self.dim()
            )));
        }
        let sum: f64 = z
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(zi, (m, v))| m + libm::sqrt(*v) * zi)
            .sum();
        Ok(-sum / libm::sqrt(self.dim() as f64))
    }
}

/// `q(theta) = -(1/sqrt d) sum theta_i`.
pub fn qoi(theta: &[f64]) -> Result<f64> {
    if theta.is_empty() {
        return Err(Error::domain("qoi", "empty input vector"));
    }
    Ok(-theta.iter().sum::<f64>() / libm::sqrt(theta.len() as f64))
}

/// One row of [`cov_vs_threshold_curve`].
#[derive(Clone, Debug, PartialEq)]
pub struct CovPoint {
    pub tau: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// Coefficient of variation of `P_tau(xi)`; `None` when the ensemble mean
    /// is zero.
    pub cov: Option<f64>,
    /// `sqrt((1 - m)/m)` for the ensemble mean `m`, when `m` is in `(0, 1)`.
    pub bound: Option<f64>,
}

/// Coefficient of variation of `P_tau(xi)` over `n_outer` hyper-parameter
/// draws, uniform within `+-perturbation` of `nominal`, at each threshold.
/// The same draws serve every threshold.
pub fn cov_vs_threshold_curve(
    nominal: &AnalyticHyper,
    taus: &[f64],
    perturbation: f64,
    n_outer: usize,
    stream: &mut RandomStream,
) -> Result<Vec<CovPoint>> {
    let bounds = UniformBox::around(&nominal.to_xi(), perturbation)?;
    let hypers = uniform_box_sample(&bounds, n_outer, stream)?
        .iter()
        .map(|xi| AnalyticHyper::from_xi(xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(taus
        .iter()
        .map(|&tau| {
            let p: Vec<f64> = hypers.iter().map(|h| h.exact_probability(tau)).collect();
            ensemble_point(tau, &p)
        })
        .collect())
}

fn ensemble_point(tau: f64, p: &[f64]) -> CovPoint {
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let var = if p.len() > 1 {
        p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_dev = libm::sqrt(var);
    CovPoint {
        tau,
        mean,
        std_dev,
        cov: (mean > 0.0).then(|| std_dev / mean),
        bound: cov_bound(mean).ok(),
    }
}
