//! Total-order polynomial chaos surrogates fitted by l1-constrained least
//! squares.
//!
//! Univariate polynomials are orthonormal under the law of each
//! hyper-parameter: Legendre for a uniform variable on a box side (mapped
//! affinely onto `[-1, 1]`), probabilists' Hermite for a standard normal
//! variable. With an orthonormal basis the surrogate mean is the constant
//! coefficient and the variance is the sum of the other squared
//! coefficients.
//!
//! The basis is ordered graded-lexicographically: by total degree, then,
//! within a degree, in decreasing lexicographic order of the multi-index
//! (`(2,0), (1,1), (0,2)`). Coefficient vectors are only portable between
//! runs that share this ordering.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::sampling::UniformBox;
use crate::{Error, Result};

/// Exponents of one multivariate basis polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn total_order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Dimensions with a non-zero exponent.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&o| o == 0)
    }
}

/// Univariate orthonormal polynomial family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    /// Uniform variable on a box side.
    Legendre,
    /// Standard normal variable.
    Hermite,
}

impl Family {
    /// Values of the orthonormal polynomials of degrees `0..=max_order` at
    /// the standardized point `x`.
    pub fn evaluate_all(self, max_order: usize, x: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        if max_order == 0 {
            return;
        }
        out.push(x);
        for n in 1..max_order {
            let nf = n as f64;
            let next = match self {
                Family::Legendre => ((2.0 * nf + 1.0) * x * out[n] - nf * out[n - 1]) / (nf + 1.0),
                Family::Hermite => x * out[n] - nf * out[n - 1],
            };
            out.push(next);
        }
        let mut factorial = 1.0;
        for (n, v) in out.iter_mut().enumerate() {
            match self {
                Family::Legendre => *v *= libm::sqrt(2.0 * n as f64 + 1.0),
                Family::Hermite => {
                    if n > 0 {
                        factorial *= n as f64;
                    }
                    *v /= libm::sqrt(factorial);
                }
            }
        }
    }
}

/// Number of multi-indices of total order at most `order` in `dim`
/// dimensions, `(dim + order)! / (dim! order!)`.
pub fn basis_size(dim: usize, order: usize) -> Result<usize> {
    let mut count: usize = 1;
    for k in 1..=order {
        // C(dim + k, k) = C(dim + k - 1, k - 1) * (dim + k) / k, exact at every step
        count = count
            .checked_mul(dim + k)
            .map(|c| c / k)
            .ok_or(Error::BasisSize { dim, order })?;
    }
    Ok(count)
}

/// All multi-indices of total order `<= order`, graded-lexicographic.
pub fn total_order_basis(dim: usize, order: usize) -> Result<Vec<MultiIndex>> {
    if dim == 0 {
        return Err(Error::invalid("a basis needs at least one dimension"));
    }
    let size = basis_size(dim, order)?;
    let mut out = Vec::with_capacity(size);
    let mut current = vec![0u32; dim];
    for degree in 0..=order as u32 {
        push_degree(&mut out, &mut current, 0, degree);
    }
    debug_assert_eq!(out.len(), size);
    Ok(out)
}

fn push_degree(out: &mut Vec<MultiIndex>, current: &mut [u32], slot: usize, remaining: u32) {
    if slot + 1 == current.len() {
        current[slot] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for o in (0..=remaining).rev() {
        current[slot] = o;
        push_degree(out, current, slot + 1, remaining - o);
    }
    current[slot] = 0;
}

fn standardize(x: f64, i: usize, bounds: &UniformBox, family: Family) -> Result<f64> {
    match family {
        Family::Hermite => Ok(x),
        Family::Legendre => {
            let (lo, hi) = (bounds.lower()[i], bounds.upper()[i]);
            // tolerate rounding at the box faces
            let slack = 1e-12 * (hi - lo);
            if !(x >= lo - slack && x <= hi + slack) {
                return Err(Error::domain(
                    "eval_basis",
                    format!("coordinate {i} = {x} outside [{lo}, {hi}]"),
                ));
            }
            Ok((2.0 * bounds.to_unit(i, x) - 1.0).clamp(-1.0, 1.0))
        }
    }
}

/// Univariate tables for one point, `tables[i][o]` = degree-`o` polynomial
/// in dimension `i`.
fn univariate_tables(xi: &[f64], bounds: &UniformBox, families: &[Family], max_order: usize) -> Result<Vec<Vec<f64>>> {
    if xi.len() != families.len() || xi.len() != bounds.dim() {
        return Err(Error::invalid(format!(
            "point of dimension {} against {} families and a {}-dimensional box",
            xi.len(),
            families.len(),
            bounds.dim()
        )));
    }
    xi.iter()
        .zip(families)
        .enumerate()
        .map(|(i, (&x, &fam))| {
            let z = standardize(x, i, bounds, fam)?;
            let mut vals = Vec::with_capacity(max_order + 1);
            fam.evaluate_all(max_order, z, &mut vals);
            Ok(vals)
        })
        .collect()
}

/// Value of one orthonormal basis polynomial at `xi`.
pub fn eval_basis(index: &MultiIndex, xi: &[f64], bounds: &UniformBox, families: &[Family]) -> Result<f64> {
    let max_order = index.0.iter().copied().max().unwrap_or(0) as usize;
    let tables = univariate_tables(xi, bounds, families, max_order)?;
    Ok(index.0.iter().zip(&tables).map(|(&o, t)| t[o as usize]).product())
}

/// `N x P` matrix of basis values, entry `(j, k) = Psi_k(xi_j)`.
pub fn design_matrix(
    samples: &[Vec<f64>],
    basis: &[MultiIndex],
    bounds: &UniformBox,
    families: &[Family],
) -> Result<DMatrix<f64>> {
    if basis.is_empty() {
        return Err(Error::invalid("empty basis"));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let max_order = basis.iter().map(|b| b.total_order()).max().unwrap_or(0) as usize;
    let mut a = DMatrix::zeros(samples.len(), basis.len());
    for (j, xi) in samples.iter().enumerate() {
        let tables = univariate_tables(xi, bounds, families, max_order)?;
        for (k, index) in basis.iter().enumerate() {
            a[(j, k)] = index.0.iter().zip(&tables).map(|(&o, t)| t[o as usize]).product();
        }
    }
    Ok(a)
}

/// Euclidean projection onto `{ x : ||x||_1 <= radius }` by sorting the
/// magnitudes and soft-thresholding.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumulative += m;
        let t = (cumulative - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Solver settings for [`fit_sparse_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Stop once the duality gap is at most `tolerance * ||y||^2`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Keep the objective value of every iterate.
    pub record_objective: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200_000,
            record_objective: false,
        }
    }
}

/// Solution of the constrained least-squares problem with diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFit {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    /// Frank-Wolfe duality gap of the returned point, an upper bound on its
    /// suboptimality.
    pub gap: f64,
    pub objective: f64,
    /// Objective values of successive iterates (empty unless requested).
    pub trace: Vec<f64>,
}

struct Quadratic {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    yy: f64,
}

impl Quadratic {
    fn value_with(&self, beta: &DVector<f64>, g_beta: &DVector<f64>) -> f64 {
        (self.yy - 2.0 * self.rhs.dot(beta) + beta.dot(g_beta)).max(0.0)
    }

    fn gradient_with(&self, g_beta: &DVector<f64>) -> DVector<f64> {
        2.0 * (g_beta - &self.rhs)
    }

    fn gap(&self, beta: &DVector<f64>, g_beta: &DVector<f64>, radius: f64) -> f64 {
        let grad = self.gradient_with(g_beta);
        let inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        (grad.dot(beta) + radius * inf).max(0.0)
    }
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Coefficients minimizing `||y - A beta||^2` subject to `||beta||_1 <= radius`.
pub fn fit_sparse(design: &DMatrix<f64>, y: &[f64], radius: f64) -> Result<Vec<f64>> {
    fit_sparse_with(design, y, radius, &FitOptions::default()).map(|f| f.coeffs)
}

/// [`fit_sparse`] with explicit settings and diagnostics.
///
/// If the unconstrained least-squares solution exists and lies inside the
/// ball it is returned directly. Otherwise a monotone FISTA iteration with
/// backtracking runs on the normal equations, starting from the projection
/// of that solution (or zero), until the duality gap
/// `grad^T beta + radius ||grad||_inf` meets the tolerance.
pub fn fit_sparse_with(design: &DMatrix<f64>, y: &[f64], radius: f64, opts: &FitOptions) -> Result<SparseFit> {
    let (n, p) = design.shape();
    if n == 0 || p == 0 {
        return Err(Error::EmptyDesign);
    }
    if y.len() != n {
        return Err(Error::invalid(format!("{} responses for {n} design rows", y.len())));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::domain(
            "fit_sparse",
            format!("l1 radius {radius} must be positive and finite"),
        ));
    }
    let yv = DVector::from_column_slice(y);
    let quad = Quadratic {
        gram: design.tr_mul(design),
        rhs: design.tr_mul(&yv),
        yy: yv.dot(&yv),
    };
    let tolerance = opts.tolerance * quad.yy.max(f64::MIN_POSITIVE);

    let direct = if n >= p {
        quad.gram.clone().cholesky().map(|c| c.solve(&quad.rhs))
    } else {
        None
    };

    let mut x = DVector::zeros(p);
    if let Some(ls) = direct.filter(|b| b.iter().all(|v| v.is_finite())) {
        if l1_norm(ls.as_slice()) <= radius {
            let g = &quad.gram * &ls;
            let gap = quad.gap(&ls, &g, radius);
            if gap <= tolerance {
                let objective = quad.value_with(&ls, &g);
                return Ok(SparseFit {
                    coeffs: ls.as_slice().to_vec(),
                    iterations: 0,
                    gap,
                    objective,
                    trace: if opts.record_objective {
                        vec![objective]
                    } else {
                        Vec::new()
                    },
                });
            }
        }
        x = DVector::from_vec(project_l1_ball(ls.as_slice(), radius));
    }

    let project = |v: &DVector<f64>| DVector::from_vec(project_l1_ball(v.as_slice(), radius));

    let mut gx = &quad.gram * &x;
    let mut fx = quad.value_with(&x, &gx);
    let mut trace = Vec::new();
    if opts.record_objective {
        trace.push(fx);
    }
    let mut lipschitz = 2.0 * power_iteration(&quad.gram, 30);
    if !(lipschitz > 0.0) {
        lipschitz = 1.0;
    }
    let mut y_k = x.clone();
    let mut x_prev = x.clone();
    let mut t = 1.0f64;
    let mut gap = quad.gap(&x, &gx, radius);

    for iteration in 1..=opts.max_iterations {
        if gap <= tolerance {
            return Ok(SparseFit {
                coeffs: x.as_slice().to_vec(),
                iterations: iteration - 1,
                gap,
                objective: fx,
                trace,
            });
        }
        let gy = &quad.gram * &y_k;
        let fy = quad.value_with(&y_k, &gy);
        let grad_y = quad.gradient_with(&gy);
        let (z, gz, fz) = loop {
            let z = project(&(&y_k - &grad_y / lipschitz));
            let gz = &quad.gram * &z;
            let fz = quad.value_with(&z, &gz);
            let step = &z - &y_k;
            let model = fy + grad_y.dot(&step) + 0.5 * lipschitz * step.dot(&step);
            if fz <= model + 1e-14 * quad.yy || lipschitz > 1e300 {
                break (z, gz, fz);
            }
            lipschitz *= 2.0;
        };

        x_prev.copy_from(&x);
        if fz <= fx {
            x = z.clone();
            gx = gz;
            fx = fz;
        }
        if opts.record_objective {
            trace.push(fx);
        }
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        y_k = &x + (t / t_next) * (&z - &x) + ((t - 1.0) / t_next) * (&x - &x_prev);
        t = t_next;
        gap = quad.gap(&x, &gx, radius);
    }

    if gap <= tolerance {
        return Ok(SparseFit {
            coeffs: x.as_slice().to_vec(),
            iterations: opts.max_iterations,
            gap,
            objective: fx,
            trace,
        });
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        gap,
        best: x.as_slice().to_vec(),
    })
}

fn power_iteration(m: &DMatrix<f64>, iterations: usize) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / libm::sqrt(n as f64));
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = norm;
        v = w / norm;
    }
    estimate
}

/// A fitted polynomial chaos expansion over a hyper-parameter box.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PCESurrogate {
    pub bounds: UniformBox,
    pub families: Vec<Family>,
    pub order: usize,
    pub basis: Vec<MultiIndex>,
    pub coeffs: Vec<f64>,
}

impl PCESurrogate {
    /// Builds a surrogate from explicit coefficients on the total-order
    /// basis.
    pub fn new(bounds: UniformBox, families: Vec<Family>, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let basis = total_order_basis(bounds.dim(), order)?;
        if families.len() != bounds.dim() {
            return Err(Error::invalid(format!(
                "{} families for a {}-dimensional box",
                families.len(),
                bounds.dim()
            )));
        }
        if coeffs.len() != basis.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for a basis of {}",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self {
            bounds,
            families,
            order,
            basis,
            coeffs,
        })
    }

    /// Fits a Legendre surrogate of total order `order` to `(samples, y)`
    /// with l1 radius `radius`. At least `dim + 1` samples are required.
    pub fn fit(
        bounds: &UniformBox,
        order: usize,
        samples: &[Vec<f64>],
        y: &[f64],
        radius: f64,
    ) -> Result<(Self, SparseFit)> {
        if samples.len() <= bounds.dim() {
            return Err(Error::Underdetermined {
                rows: samples.len(),
                dim: bounds.dim(),
            });
        }
        let families = vec![Family::Legendre; bounds.dim()];
        let basis = total_order_basis(bounds.dim(), order)?;
        let a = design_matrix(samples, &basis, bounds, &families)?;
        let fit = fit_sparse_with(&a, y, radius, &FitOptions::default())?;
        let surrogate = Self {
            bounds: bounds.clone(),
            families,
            order,
            basis,
            coeffs: fit.coeffs.clone(),
        };
        Ok((surrogate, fit))
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn evaluate(&self, xi: &[f64]) -> Result<f64> {
        let tables = univariate_tables(xi, &self.bounds, &self.families, self.order)?;
        Ok(self
            .basis
            .iter()
            .zip(&self.coeffs)
            .map(|(index, c)| {
                c * index
                    .0
                    .iter()
                    .zip(&tables)
                    .map(|(&o, t)| t[o as usize])
                    .product::<f64>()
            })
            .sum())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn variance(&self) -> f64 {
        self.coeffs[1..].iter().map(|c| c * c).sum()
    }
}

/// Cross-validation errors over a grid of l1 radii.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidation {
    pub radii: Vec<f64>,
    pub errors: Vec<f64>,
    pub best: f64,
}

/// `k`-fold cross-validation of the l1 radius on a logarithmic grid of
/// `n_grid` values spanning three decades below the l1 norm of the
/// minimum-norm least-squares fit. Row `j` belongs to fold `j mod k`.
pub fn cross_validate_radius(design: &DMatrix<f64>, y: &[f64], k: usize, n_grid: usize) -> Result<CrossValidation> {
    let n = design.nrows();
    if k < 2 || n < k {
        return Err(Error::invalid(format!("{k}-fold cross-validation over {n} rows")));
    }
    if n_grid == 0 {
        return Err(Error::invalid("empty radius grid"));
    }
    let opts = FitOptions {
        max_iterations: 20_000,
        ..FitOptions::default()
    };
    let full = design
        .clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-12)
        .map_err(|e| Error::invalid(format!("least-squares solve failed: {e}")))?;
    let top = l1_norm(full.as_slice());
    if !(top > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let radii: Vec<f64> = (0..n_grid)
        .map(|i| {
            let frac = if n_grid == 1 {
                1.0
            } else {
                i as f64 / (n_grid - 1) as f64
            };
            top * libm::pow(10.0, -3.0 * (1.0 - frac))
        })
        .collect();

    let mut errors = Vec::with_capacity(n_grid);
    for &radius in &radii {
        let mut sse = 0.0;
        for fold in 0..k {
            let train: Vec<usize> = (0..n).filter(|j| j % k != fold).collect();
            let test: Vec<usize> = (0..n).filter(|j| j % k == fold).collect();
            let a_train = design.select_rows(train.iter());
            let y_train: Vec<f64> = train.iter().map(|&j| y[j]).collect();
            let beta = match fit_sparse_with(&a_train, &y_train, radius, &opts) {
                Ok(f) => f.coeffs,
                Err(Error::NonConvergence { best, .. }) => best,
                Err(e) => return Err(e),
            };
            let beta = DVector::from_vec(beta);
            for &j in &test {
                let pred = design.row(j).transpose().dot(&beta);
                sse += (y[j] - pred) * (y[j] - pred);
            }
        }
        errors.push(sse / n as f64);
    }
    let best_idx = errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(CrossValidation {
        best: radii[best_idx],
        radii,
        errors,
    })
}
