//! Acceptance gate. Each test checks one numbered criterion and writes a
//! single `PASS criterion N` or `FAIL criterion N` line to stderr (written
//! directly, so it shows even when output is captured).
//!
//! Criteria 4, 5 and 8 take minutes in release-level optimisation.

use std::io::Write as _;

use raresens::config::{DarcySection, PceSection, SsSection};
use raresens::driver::{
    budget_sweep, estimate_all, fit_surrogate, outer_design, run_double_loop, screen, variability_study,
};
use raresens::model::ModelSetup;
use raresens::{Estimator, ExperimentConfig, ModelKind};
use raresens_core::analytic::{cov_vs_threshold_curve, AnalyticHyper};
use raresens_core::darcy::{
    darcy_velocity, hitting_time, n_kl_for_energy, realize_log_perm, solve_pressure, DarcyContext, DarcyHyper, Grid,
    KleBasis, KleTarget, TrackingOptions,
};
use raresens_core::mc::mc_cov;
use raresens_core::pce::{design_matrix, fit_sparse_with, total_order_basis, Family, FitOptions, PCESurrogate};
use raresens_core::sampling::lhs_sample;
use raresens_core::sobol::sobol_report;
use raresens_core::subset::{expected_levels, mma_chain};
use raresens_core::{RandomStream, UniformBox};

const P_NOMINAL_TARGET: f64 = 3.69e-5;

fn verdict(n: u32, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {n}: {detail}");
    assert!(ok, "criterion {n}: {detail}");
}

fn analytic_config() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelKind::Analytic,
        tau: Some(3.0),
        perturbation: 0.1,
        seed: 0,
        pce: PceSection {
            order: 3,
            lambda: Some(0.05),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Jansen total indices of the closed-form probability over the box, from
/// `n` independent base pairs, accumulated without storing the design.
fn reference_totals(n: usize) -> Vec<f64> {
    let cfg = analytic_config();
    let bounds = cfg.hyper_box().unwrap();
    let m = bounds.dim();
    let f = |x: &[f64]| AnalyticHyper::from_xi(x).unwrap().exact_probability(3.0);
    let mut s = RandomStream::new(20_240_601, 0);
    let draw = |s: &mut RandomStream| -> Vec<f64> { (0..m).map(|i| bounds.from_unit(i, s.uniform())).collect() };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut jansen = vec![0.0; m];
    for _ in 0..n {
        let a = draw(&mut s);
        let b = draw(&mut s);
        let (fa, fb) = (f(&a), f(&b));
        sum += fa + fb;
        sum_sq += fa * fa + fb * fb;
        let mut ab = a.clone();
        for (i, jn) in jansen.iter_mut().enumerate() {
            ab[i] = b[i];
            let d = fa - f(&ab);
            *jn += d * d;
            ab[i] = a[i];
        }
    }
    let k = 2.0 * n as f64;
    let var = (sum_sq - sum * sum / k) / (k - 1.0);
    jansen.iter().map(|j| j / (2.0 * n as f64 * var)).collect()
}

fn argsort_desc(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    idx
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_1_exact_probability() {
    let p = AnalyticHyper::nominal().exact_probability(3.0);
    let e = p.log10().floor();
    let truncated = (p / 10f64.powf(e - 2.0)).floor() * 10f64.powf(e - 2.0);
    let ok = (truncated - P_NOMINAL_TARGET).abs() < 1e-12 * P_NOMINAL_TARGET.max(1.0)
        && ((p - P_NOMINAL_TARGET) / P_NOMINAL_TARGET).abs() < 5e-3;
    verdict(
        1,
        ok,
        &format!("P_3(xi_nom) = {p:.6e}, 3 significant figures {truncated:.2e}"),
    );
}

#[test]
fn criterion_2_level_count() {
    let l = expected_levels(1e-6, 0.1).unwrap();
    verdict(2, l == 6, &format!("expected_levels(1e-6, 0.1) = {l}, L = {}", l + 1));
}

#[test]
fn criterion_3_subset_simulation_accuracy() {
    let mut cfg = analytic_config();
    cfg.ss = SsSection {
        n_per_level: 1000,
        p0: 0.1,
        ..Default::default()
    };
    let setup = ModelSetup::from_config(&cfg).unwrap();
    let xi = cfg.nominal();
    let root = RandomStream::new(0, 0).split(4);
    let runs: Vec<_> = (0..100).map(|r| setup.estimate(&xi, &root.split(r)).unwrap()).collect();
    let n = runs.len() as f64;
    let mean = runs.iter().map(|e| e.p_hat).sum::<f64>() / n;
    let sd = (runs.iter().map(|e| (e.p_hat - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let cov = sd / mean;
    let evals = runs.iter().map(|e| e.n_evals as f64).sum::<f64>() / n;
    let exact = AnalyticHyper::nominal().exact_probability(3.0);
    let mc = mc_cov(exact, evals.round() as usize).unwrap();
    let rel = (mean - P_NOMINAL_TARGET).abs() / P_NOMINAL_TARGET;
    let ok = rel <= 0.2 && mc / cov >= 5.0;
    verdict(
        3,
        ok,
        &format!(
            "mean {mean:.4e} ({:.1}% off), cov {cov:.3}, crude MC cov {mc:.3} at {evals:.0} evaluations, ratio {:.2}",
            100.0 * rel,
            mc / cov
        ),
    );
}

#[test]
fn criterion_4_surrogate_indices_and_spread() {
    let reference = reference_totals(1_000_000);
    let cfg = ExperimentConfig {
        estimator: Estimator::Exact,
        n_samp: 1000,
        ..analytic_config()
    };
    let table = variability_study(&cfg, 1000).unwrap();

    // single run at the stated settings
    let single = run_double_loop(&cfg).unwrap().sobol.total;
    let err = max_abs_diff(&single, &reference);
    let largest = argsort_desc(&reference)[0];
    let (ps, ss) = (table.pce_std()[largest], table.saltelli_std()[largest]);
    let ok = err <= 0.05 && ss >= 2.0 * ps;
    verdict(
        4,
        ok,
        &format!(
            "reference {}, surrogate {}, max error {err:.4}; spread of index {} over 1000 repetitions: surrogate {ps:.2e}, pick-and-freeze {ss:.2e} (ratio {:.1})",
            fmt(&reference),
            fmt(&single),
            largest + 1,
            ss / ps
        ),
    );
}

#[test]
fn criterion_5_budget_robustness() {
    let reference = reference_totals(1_000_000);
    // a fixed radius of 0.05 never binds at probabilities near 4e-5, so the
    // radius is chosen by cross-validation on each set of noisy estimates
    let cfg = ExperimentConfig {
        ss: SsSection {
            n_per_level: 1000,
            ..Default::default()
        },
        pce: PceSection {
            order: 3,
            lambda: None,
            cross_validate: true,
            ..Default::default()
        },
        ..analytic_config()
    };
    let cells = budget_sweep(&cfg, &[100, 500, 1000], &[100, 1000], 10).unwrap();
    let cell = |n_ss, n_samp| cells.iter().find(|c| c.n_ss == n_ss && c.n_samp == n_samp).unwrap();

    let big = cell(500, 1000);
    let ordering = argsort_desc(&big.mean_total) == argsort_desc(&reference);
    let err = max_abs_diff(&big.mean_total, &reference);
    let large: Vec<usize> = (0..reference.len()).filter(|&i| reference[i] >= 0.1).collect();
    let small_errs: Vec<f64> = [100, 500, 1000]
        .iter()
        .map(|&n_ss| {
            let c = cell(n_ss, 100);
            // undefined indices count as not recovered
            large
                .iter()
                .map(|&i| (c.mean_total[i] - reference[i]).abs())
                .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) })
        })
        .collect();
    let small_fails = small_errs.iter().all(|&e| e > 0.05);
    let ok = ordering && err <= 0.05 && small_fails;
    verdict(
        5,
        ok,
        &format!(
            "cross-validated radius; N_samp=1000, N_SS=500 mean of 10 runs {} vs reference {}: ordering {}, max error {err:.3}; N_samp=100 worst large-index error per N_SS {{100,500,1000}} {} (constant surrogates {:?})",
            fmt(&big.mean_total),
            fmt(&reference),
            if ordering { "matches" } else { "differs" },
            fmt(&small_errs),
            [100, 500, 1000].map(|n_ss| cell(n_ss, 100).undefined)
        ),
    );
}

#[test]
fn criterion_6_cov_grows_with_rarity() {
    let taus: Vec<f64> = (0..7).map(|k| 2.0 + 0.5 * k as f64).collect();
    let curve = cov_vs_threshold_curve(
        &AnalyticHyper::nominal(),
        &taus,
        0.1,
        10_000,
        &mut RandomStream::new(0, 0),
    )
    .unwrap();
    let covs: Vec<f64> = curve.iter().map(|p| p.cov.unwrap()).collect();
    let monotone = covs.windows(2).all(|w| w[1] >= w[0]);
    let bounded = curve.iter().all(|p| p.cov.unwrap() <= p.bound.unwrap());
    verdict(
        6,
        monotone && bounded,
        &format!(
            "cov over tau 2.0..5.0: {}, monotone {monotone}, within bound {bounded}",
            fmt(&covs)
        ),
    );
}

#[test]
fn criterion_7_darcy_model() {
    let mut parts = Vec::new();

    // (a)
    let n_kl = n_kl_for_energy(Grid::new(50).unwrap(), 0.4, 0.4, 0.9).unwrap();
    let a = n_kl == 126;
    parts.push(format!("(a) n_kl at n=50 is {n_kl} (target 126)"));

    // (b)
    let g = Grid::new(25).unwrap();
    let ones = vec![1.0; g.cells()];
    let p = solve_pressure(g, &ones).unwrap();
    let p_err = (0..g.cells())
        .map(|k| (p[k] - (1.0 - g.center(k % g.n()))).abs())
        .fold(0.0, f64::max);
    let v = darcy_velocity(g, &ones, &p).unwrap();
    let t = hitting_time(&v, [0.0, 0.5], &TrackingOptions::default()).unwrap().time;
    let b = p_err <= 1e-8 && (t - 1.0).abs() <= 1e-3;
    parts.push(format!("(b) |p - (1-x)| {p_err:.1e}, hitting time {t:.6}"));

    // (c)
    let basis = KleBasis::decompose(g, 0.4, 0.4, KleTarget::Energy(0.9)).unwrap();
    let h2 = g.h() * g.h();
    let mut gram_err: f64 = 0.0;
    for i in 0..basis.n_kl() {
        for j in 0..=i {
            let dot: f64 = basis.mode(i).iter().zip(basis.mode(j)).map(|(x, y)| x * y).sum::<f64>() * h2;
            gram_err = gram_err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let zero = vec![0.0; g.cells()];
    let mut s = RandomStream::new(7, 0);
    let mut theta = vec![0.0; basis.n_kl()];
    let (mut max_principle, mut balance): (bool, f64) = (true, 0.0);
    for _ in 0..100 {
        s.fill_standard_normal(&mut theta);
        let f = realize_log_perm(&basis, &theta, &zero, 0.8).unwrap();
        let p = solve_pressure(g, &f.perm).unwrap();
        max_principle &= p.iter().all(|&x| (0.0..=1.0).contains(&x));
        let v = darcy_velocity(g, &f.perm, &p).unwrap();
        let scale = v.inflow();
        let div = v.divergence().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        balance = balance.max(div / scale).max((v.inflow() - v.outflow()).abs() / scale);
    }
    let c = max_principle && balance <= 1e-8 && gram_err <= 1e-8;
    parts.push(format!(
        "(c) max principle {max_principle}, relative mass imbalance {balance:.1e}, Gram error {gram_err:.1e}"
    ));

    // (d)
    let n_kl = n_kl_for_energy(g, 0.4, 0.4, 0.9).unwrap();
    let ctx = DarcyContext::new(g, DarcyHyper::nominal(), n_kl, None).unwrap();
    let mut s = RandomStream::new(11, 0);
    let mut theta = vec![0.0; ctx.dim()];
    let q: Vec<f64> = (0..2000)
        .map(|_| {
            s.fill_standard_normal(&mut theta);
            ctx.qoi(&theta).unwrap()
        })
        .collect();
    let m = q.iter().sum::<f64>() / q.len() as f64;
    let m2 = q.iter().map(|x| (x - m).powi(2)).sum::<f64>() / q.len() as f64;
    let m3 = q.iter().map(|x| (x - m).powi(3)).sum::<f64>() / q.len() as f64;
    let skew = m3 / m2.powf(1.5);
    let d = skew > 0.0;
    parts.push(format!("(d) skewness of 2000 hitting times {skew:.2}"));

    verdict(7, a && b && c && d, &parts.join("; "));
}

#[test]
fn criterion_8_darcy_ordering_stability() {
    let cfg = ExperimentConfig {
        model: ModelKind::Darcy,
        n_samp: 100,
        seed: 0,
        ss: SsSection {
            n_per_level: 500,
            ..Default::default()
        },
        darcy: DarcySection {
            grid: 25,
            ..Default::default()
        },
        ..Default::default()
    };
    let setup = ModelSetup::from_config(&cfg).unwrap();
    let bounds = cfg.hyper_box().unwrap();
    let root = RandomStream::new(cfg.seed, 0);
    let xis = outer_design(&bounds, cfg.n_samp, &root).unwrap();
    let estimates = estimate_all(&setup, &xis, &root.split(1));
    let records = screen(&estimates).unwrap();
    let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = records
        .iter()
        .filter_map(|r| r.p_hat.filter(|&p| p > 0.0).map(|p| (xis[r.index].clone(), p)))
        .unzip();

    let totals = |lambda: f64| {
        let pce = PceSection {
            order: 3,
            lambda: Some(lambda),
            ..Default::default()
        };
        let (s, _) = fit_surrogate(&pce, &bounds, &xs, &ys).unwrap();
        sobol_report(&s).unwrap().total
    };
    let (t1, t2) = (totals(1.0), totals(0.05));
    let ok = argsort_desc(&t1) == argsort_desc(&t2);
    verdict(
        8,
        ok,
        &format!(
            "{} usable estimates, mean {:.3e}; totals (lx, ly, sigma_a) at radius 1: {}, at 0.05: {}",
            ys.len(),
            ys.iter().sum::<f64>() / ys.len() as f64,
            fmt(&t1),
            fmt(&t2)
        ),
    );
}

#[test]
fn criterion_9_property_suites() {
    let mut parts = Vec::new();

    let b = UniformBox::around(&[1.0, 2.0, 3.0, 4.0], 0.2).unwrap();
    let mut lhs_ok = true;
    for seed in 0..50u64 {
        let n = 1 + (seed as usize * 7) % 97;
        let rows = lhs_sample(&b, n, &mut RandomStream::new(seed, 0)).unwrap();
        for j in 0..b.dim() {
            let mut strata: Vec<usize> = rows
                .iter()
                .map(|r| (b.to_unit(j, r[j]) * n as f64).floor() as usize)
                .collect();
            strata.sort_unstable();
            lhs_ok &= strata == (0..n).collect::<Vec<_>>();
        }
    }
    parts.push(format!("LHS strata {lhs_ok}"));

    let q = |t: &[f64]| Ok(t.iter().sum::<f64>());
    let mut mma_ok = true;
    for seed in 0..50u64 {
        let mut qq = q;
        let c = mma_chain(
            &[2.0, 2.0, 2.0],
            6.0,
            40,
            3.0,
            &mut qq,
            1.0,
            &mut RandomStream::new(seed, 0),
        )
        .unwrap();
        mma_ok &= c
            .points
            .iter()
            .zip(&c.values)
            .all(|(p, &v)| v > 3.0 && p.iter().sum::<f64>() == v);
    }
    parts.push(format!("MMA level condition {mma_ok}"));

    let mut fit_ok = true;
    for seed in 0..20u64 {
        let mut s = RandomStream::new(seed, 0);
        let a = nalgebra::DMatrix::from_fn(30, 12, |_, _| s.standard_normal());
        let y: Vec<f64> = (0..30).map(|_| s.standard_normal()).collect();
        let radius = 0.05 + 0.1 * seed as f64;
        let opts = FitOptions {
            record_objective: true,
            ..Default::default()
        };
        let f = fit_sparse_with(&a, &y, radius, &opts).unwrap();
        fit_ok &= f.coeffs.iter().map(|c| c.abs()).sum::<f64>() <= radius * (1.0 + 1e-9);
        fit_ok &= f.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    }
    parts.push(format!("fit feasibility and monotone objective {fit_ok}"));

    let mut sobol_ok = true;
    for seed in 0..20u64 {
        let mut s = RandomStream::new(seed, 0);
        let basis = total_order_basis(4, 3).unwrap();
        let c: Vec<f64> = (0..basis.len()).map(|_| s.standard_normal()).collect();
        let additive: Vec<f64> = basis
            .iter()
            .zip(&c)
            .map(|(k, &v)| if k.support().len() == 1 { v } else { 0.0 })
            .collect();
        let ub = UniformBox::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        let full = sobol_report(&PCESurrogate::new(ub.clone(), vec![Family::Legendre; 4], 3, c).unwrap()).unwrap();
        let add = sobol_report(&PCESurrogate::new(ub, vec![Family::Legendre; 4], 3, additive).unwrap()).unwrap();
        sobol_ok &= full.first_order.iter().zip(&full.total).all(|(f, t)| f <= t);
        sobol_ok &= (add.first_order.iter().sum::<f64>() - 1.0).abs() < 1e-12;
    }
    parts.push(format!("Sobol identities {sobol_ok}"));

    let cfg = ExperimentConfig {
        n_samp: 60,
        tau: Some(2.0),
        seed: 9,
        threads: 1,
        ss: SsSection {
            n_per_level: 200,
            ..Default::default()
        },
        pce: PceSection {
            order: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let first = run_double_loop(&cfg).unwrap();
    let again = run_double_loop(&cfg).unwrap();
    let parallel = run_double_loop(&ExperimentConfig {
        threads: 4,
        ..cfg.clone()
    })
    .unwrap();
    let x = lhs_sample(&b, 20, &mut RandomStream::new(1, 0)).unwrap();
    let basis = total_order_basis(4, 2).unwrap();
    let d = design_matrix(&x, &basis, &b, &[Family::Legendre; 4]).unwrap();
    let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
    let determinism = first == again
        && fit_sparse_with(&d, &y, 0.3, &FitOptions::default()) == fit_sparse_with(&d, &y, 0.3, &FitOptions::default());
    let same = {
        let mut p = parallel.clone();
        p.config.threads = 1;
        p == first
    };
    parts.push(format!("determinism {determinism}, serial equals parallel {same}"));

    verdict(
        9,
        lhs_ok && mma_ok && fit_ok && sobol_ok && determinism && same,
        &parts.join("; "),
    );
}
