//! Plain Monte Carlo baselines: exceedance probabilities, their coefficient
//! of variation, and pick-and-freeze Sobol' indices.

use alloc::format;
use alloc::vec::Vec;

use crate::sampling::{lhs_sample, uniform_box_sample, RandomStream, UniformBox};
use crate::{Error, Result};

/// Crude Monte Carlo estimate of `P(q > tau)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MCEstimate {
    pub p_hat: f64,
    pub n_samples: usize,
    /// `sqrt((1 - p) / (n p))`; `None` when no sample exceeded the threshold.
    pub cov_hat: Option<f64>,
    pub n_evals: usize,
}

/// Coefficient of variation of the crude estimator with `n` samples at
/// probability `p`.
pub fn mc_cov(p: f64, n: usize) -> Option<f64> {
    if p > 0.0 && n > 0 {
        Some(libm::sqrt((1.0 - p) / (n as f64 * p)))
    } else {
        None
    }
}

/// Rule-of-thumb sample size `1 / (delta^2 p)` for a crude estimate of a
/// small probability `p` with coefficient of variation `delta`.
pub fn mc_required_samples(p: f64, delta: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) || !(delta > 0.0) {
        return Err(Error::domain(
            "mc_required_samples",
            format!("p = {p}, delta = {delta}"),
        ));
    }
    let n = 1.0 / (delta * delta * p);
    // absorb the rounding of delta^2 p so exact powers of ten stay exact
    Ok(libm::ceil(n * (1.0 - 1e-12)) as u64)
}

/// Estimates `P(qoi(theta) > tau)` from `n` draws of `draw_input`.
pub fn mc_probability<Q, D>(
    mut qoi: Q,
    mut draw_input: D,
    n: usize,
    tau: f64,
    stream: &mut RandomStream,
) -> Result<MCEstimate>
where
    Q: FnMut(&[f64]) -> Result<f64>,
    D: FnMut(&mut RandomStream) -> Vec<f64>,
{
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    let mut hits = 0usize;
    for _ in 0..n {
        let theta = draw_input(stream);
        if qoi(&theta)? > tau {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n as f64;
    Ok(MCEstimate {
        p_hat,
        n_samples: n,
        cov_hat: mc_cov(p_hat, n),
        n_evals: n,
    })
}

/// Upper bound `sqrt((1 - m) / m)` on the coefficient of variation of any
/// `[0, 1]`-valued random variable with mean `m`.
pub fn cov_bound(mean: f64) -> Result<f64> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::domain("cov_bound", format!("mean {mean} not in (0, 1)")));
    }
    Ok(libm::sqrt((1.0 - mean) / mean))
}

/// How the base matrices of a pick-and-freeze design are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseDesign {
    Uniform,
    LatinHypercube,
}

/// Two independent base designs `A` and `B`; the hybrid `A_B^(i)` takes
/// column `i` from `B` and the rest from `A`.
#[derive(Clone, Debug)]
pub struct SaltelliDesign {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl SaltelliDesign {
    pub fn draw(bounds: &UniformBox, n_base: usize, kind: BaseDesign, stream: &mut RandomStream) -> Result<Self> {
        if n_base < 2 {
            return Err(Error::invalid(format!(
                "pick-and-freeze needs n_base >= 2, got {n_base}"
            )));
        }
        let draw = |s: &mut RandomStream| match kind {
            BaseDesign::Uniform => uniform_box_sample(bounds, n_base, s),
            BaseDesign::LatinHypercube => lhs_sample(bounds, n_base, s),
        };
        let a = draw(&mut stream.split(0))?;
        let b = draw(&mut stream.split(1))?;
        Ok(Self { a, b })
    }

    pub fn n_base(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    /// Row `row` of `A_B^(i)`.
    pub fn hybrid_row(&self, i: usize, row: usize) -> Vec<f64> {
        let mut x = self.a[row].clone();
        x[i] = self.b[row][i];
        x
    }

    /// Every point of the design in evaluation order: `A`, `B`, then
    /// `A_B^(1)`, ..., `A_B^(M)`.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_base() * (self.dim() + 2));
        out.extend(self.a.iter().cloned());
        out.extend(self.b.iter().cloned());
        for i in 0..self.dim() {
            out.extend((0..self.n_base()).map(|r| self.hybrid_row(i, r)));
        }
        out
    }
}

/// Pick-and-freeze Sobol' indices.
///
/// Raw estimates are kept unclipped; sampling noise can push them slightly
/// outside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaltelliReport {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub n_evals: usize,
}

impl SaltelliReport {
    pub fn first_order_clipped(&self) -> Vec<f64> {
        self.first_order.iter().map(|s| s.clamp(0.0, 1.0)).collect()
    }

    pub fn total_clipped(&self) -> Vec<f64> {
        self.total.iter().map(|s| s.clamp(0.0, 1.0)).collect()
    }
}

/// Jansen estimators from the function values of a [`SaltelliDesign`], in
/// the order produced by [`SaltelliDesign::points`].
pub fn saltelli_indices(values: &[f64], n_base: usize, dim: usize) -> Result<SaltelliReport> {
    if values.len() != n_base * (dim + 2) {
        return Err(Error::invalid(format!(
            "expected {} values, got {}",
            n_base * (dim + 2),
            values.len()
        )));
    }
    let (fa, rest) = values.split_at(n_base);
    let (fb, hybrid) = rest.split_at(n_base);

    let pooled = &values[..2 * n_base];
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let var = pooled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (pooled.len() - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }

    let n = n_base as f64;
    let mut first_order = Vec::with_capacity(dim);
    let mut total = Vec::with_capacity(dim);
    for fab in hybrid.chunks_exact(n_base) {
        let mut sq_b = 0.0;
        let mut sq_a = 0.0;
        for k in 0..n_base {
            sq_b += (fb[k] - fab[k]) * (fb[k] - fab[k]);
            sq_a += (fa[k] - fab[k]) * (fa[k] - fab[k]);
        }
        first_order.push(1.0 - sq_b / (2.0 * n * var));
        total.push(sq_a / (2.0 * n * var));
    }
    Ok(SaltelliReport {
        first_order,
        total,
        n_evals: values.len(),
    })
}

/// Pick-and-freeze first-order and total indices of `f` over `bounds`,
/// costing `n_base * (M + 2)` evaluations.
pub fn saltelli_sobol<F>(
    mut f: F,
    bounds: &UniformBox,
    n_base: usize,
    kind: BaseDesign,
    stream: &mut RandomStream,
) -> Result<SaltelliReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let design = SaltelliDesign::draw(bounds, n_base, kind, stream)?;
    let values: Vec<f64> = design.points().iter().map(|x| f(x)).collect();
    saltelli_indices(&values, n_base, bounds.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(m: usize) -> UniformBox {
        UniformBox::new(vec![0.0; m], vec![1.0; m]).unwrap()
    }

    #[test]
    fn symmetric_case_is_one_half() {
        let mut s = RandomStream::new(1, 0);
        let est = mc_probability(|t| Ok(t[0]), |s| vec![s.standard_normal()], 1_000_000, 0.0, &mut s).unwrap();
        assert!((est.p_hat - 0.5).abs() < 0.0015);
        assert_eq!(est.n_evals, est.n_samples);
        let cov = est.cov_hat.unwrap();
        assert_eq!(cov, libm::sqrt((1.0 - est.p_hat) / (1e6 * est.p_hat)));
    }

    #[test]
    fn no_hits_leaves_cov_undefined() {
        let mut s = RandomStream::new(1, 0);
        let est = mc_probability(|t| Ok(t[0]), |s| vec![s.standard_normal()], 100, 50.0, &mut s).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert_eq!(est.cov_hat, None);
    }

    #[test]
    fn required_samples_for_rare_event() {
        assert_eq!(mc_required_samples(1e-6, 0.1).unwrap(), 100_000_000);
        assert!(mc_required_samples(0.0, 0.1).is_err());
    }

    #[test]
    fn cov_bound_values() {
        assert_eq!(cov_bound(0.5).unwrap(), 1.0);
        assert!((cov_bound(1e-4).unwrap() - 99.994_999_874_993_75).abs() < 1e-9);
        assert!(cov_bound(0.0).is_err());
        assert!(cov_bound(1.0).is_err());
    }

    #[test]
    fn single_variable_function() {
        let mut s = RandomStream::new(4, 0);
        let r = saltelli_sobol(|x| x[0], &unit(3), 10_000, BaseDesign::Uniform, &mut s).unwrap();
        assert_eq!(r.n_evals, 50_000);
        assert!((r.first_order[0] - 1.0).abs() < 0.02);
        assert!((r.total[0] - 1.0).abs() < 0.02);
        for i in 1..3 {
            assert!(r.first_order[i].abs() < 0.02);
            assert!(r.total[i].abs() < 0.02);
        }
    }

    #[test]
    fn additive_function() {
        // V = 1/12 + 4/12, so S = (1/5, 4/5)
        let mut s = RandomStream::new(5, 0);
        let r = saltelli_sobol(
            |x| x[0] + 2.0 * x[1],
            &unit(2),
            10_000,
            BaseDesign::LatinHypercube,
            &mut s,
        )
        .unwrap();
        assert!((r.first_order[0] - 0.2).abs() < 0.02);
        assert!((r.first_order[1] - 0.8).abs() < 0.02);
        assert!((r.total[0] - 0.2).abs() < 0.02);
        assert!((r.total[1] - 0.8).abs() < 0.02);
    }

    #[test]
    fn constant_function_is_rejected() {
        let mut s = RandomStream::new(5, 0);
        let r = saltelli_sobol(|_| 3.0, &unit(2), 100, BaseDesign::Uniform, &mut s);
        assert_eq!(r, Err(Error::ZeroVariance));
        assert!(saltelli_sobol(|x| x[0], &unit(2), 1, BaseDesign::Uniform, &mut s).is_err());
    }
}
