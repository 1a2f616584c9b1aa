//! One function per CLI subcommand. Each writes its CSV output under the
//! configured output directory and returns a short text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use raresens_core::analytic::{cov_vs_threshold_curve, AnalyticHyper};
use raresens_core::mc::mc_cov;
use raresens_core::sobol::sobol_report;
use raresens_core::RandomStream;

use crate::artifacts::{read_surrogate, to_json, write_artifacts};
use crate::config::{ExperimentConfig, ModelKind};
use crate::driver::{budget_sweep, run_double_loop, variability_study};
use crate::error::{AppError, AppResult};
use crate::grid_io::{write_cell_csv, write_velocity_csv};
use crate::model::ModelSetup;

/// Display names of the hyper-parameters.
pub fn param_names(cfg: &ExperimentConfig) -> Vec<String> {
    let m = cfg.nominal().len();
    match cfg.model {
        ModelKind::Analytic => {
            let d = m / 2;
            (1..=d)
                .map(|i| format!("mu_{i}"))
                .chain((1..=d).map(|i| format!("var_{i}")))
                .collect()
        }
        ModelKind::Darcy => vec!["lx".into(), "ly".into(), "sigma_a".into()],
    }
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> AppResult<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Closed-form probabilities at the nominal point and the coefficient of
/// variation of `P_tau(xi)` over the box, per threshold.
pub fn exact(cfg: &ExperimentConfig, taus: &[f64], n_outer: usize) -> AppResult<String> {
    if cfg.model != ModelKind::Analytic {
        return Err(AppError::Config(
            "`exact` is only defined for the analytic model".into(),
        ));
    }
    cfg.validate()?;
    let h = AnalyticHyper::from_xi(&cfg.nominal())?;
    let mut stream = RandomStream::new(cfg.seed, 0);
    let curve = cov_vs_threshold_curve(&h, taus, cfg.perturbation, n_outer, &mut stream)?;
    let mut rows = Vec::new();
    let mut out = format!("{:>6} {:>14} {:>10} {:>10}\n", "tau", "P(xi_nom)", "cov", "bound");
    for pt in &curve {
        let p = h.exact_probability(pt.tau);
        rows.push(format!(
            "{},{},{},{},{},{}",
            pt.tau,
            p,
            pt.mean,
            pt.std_dev,
            fmt_opt(pt.cov),
            fmt_opt(pt.bound)
        ));
        let _ = writeln!(
            out,
            "{:>6} {:>14.6e} {:>10.4} {:>10.4}",
            pt.tau,
            p,
            pt.cov.unwrap_or(f64::NAN),
            pt.bound.unwrap_or(f64::NAN)
        );
    }
    ensure_dir(&cfg.output_dir)?;
    write_csv(
        &cfg.output_dir.join("exact.csv"),
        "tau,p_nominal,mean,std,cov,cov_bound",
        &rows,
    )?;
    let _ = writeln!(out, "P_{}(xi_nom) = {:.6e}", cfg.tau(), h.exact_probability(cfg.tau()));
    Ok(out)
}

/// Repeated inner estimates at one hyper-parameter point.
pub fn ss_estimate(cfg: &ExperimentConfig, xi: Option<&[f64]>, runs: usize) -> AppResult<String> {
    if runs == 0 {
        return Err(AppError::Config("--runs must be at least 1".into()));
    }
    let setup = ModelSetup::from_config(cfg)?;
    let xi = xi.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.nominal());
    let root = RandomStream::new(cfg.seed, 0).split(4);
    let mut rows = Vec::with_capacity(runs);
    let mut p = Vec::with_capacity(runs);
    let mut evals = 0u64;
    for r in 0..runs {
        let e = setup.estimate(&xi, &root.split(r as u64))?;
        rows.push(format!("{r},{},{},{}", e.p_hat, e.levels, e.n_evals));
        p.push(e.p_hat);
        evals += e.n_evals;
    }
    ensure_dir(&cfg.output_dir)?;
    write_csv(
        &cfg.output_dir.join("ss_estimate.csv"),
        "run,p_hat,levels,n_evals",
        &rows,
    )?;

    let n = runs as f64;
    let mean = p.iter().sum::<f64>() / n;
    let mut out = format!(
        "runs {runs}, mean p_hat {mean:.6e}, mean evaluations {:.1}\n",
        evals as f64 / n
    );
    if runs > 1 && mean > 0.0 {
        let sd = (p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let _ = writeln!(out, "empirical cov {:.4}", sd / mean);
        if let Some(mc) = mc_cov(mean, (evals as f64 / n).round() as usize) {
            let _ = writeln!(out, "crude Monte Carlo cov at the same cost {mc:.4}");
        }
    }
    if cfg.model == ModelKind::Analytic {
        let exact = AnalyticHyper::from_xi(&xi)?.exact_probability(cfg.tau());
        let _ = writeln!(out, "closed form {exact:.6e}");
    }
    Ok(out)
}

/// Full double loop; artifacts go to the output directory.
pub fn double_loop(cfg: &ExperimentConfig) -> AppResult<String> {
    let a = run_double_loop(cfg)?;
    write_artifacts(&a, &cfg.output_dir)?;
    let names = param_names(cfg);
    let mut out = format!(
        "{} samples ({} excluded), {} model evaluations, l1 radius {}\n",
        a.xi_samples.len(),
        a.excluded(),
        a.total_evals,
        a.radius
    );
    out.push_str(&index_table(&names, &a.sobol.first_order, &a.sobol.total));
    let _ = writeln!(out, "artifacts written to {}", cfg.output_dir.display());
    Ok(out)
}

fn index_table(names: &[String], first: &[f64], total: &[f64]) -> String {
    let mut out = format!("{:>10} {:>10} {:>10}\n", "parameter", "first", "total");
    for ((n, s), t) in names.iter().zip(first).zip(total) {
        let _ = writeln!(out, "{n:>10} {s:>10.4} {t:>10.4}");
    }
    out
}

/// Spread of total indices for the PCE and pick-and-freeze pipelines.
pub fn variability(cfg: &ExperimentConfig, reps: usize) -> AppResult<String> {
    let t = variability_study(cfg, reps)?;
    let names = param_names(cfg);
    let (pm, ps, sm, ss) = (t.pce_mean(), t.pce_std(), t.saltelli_mean(), t.saltelli_std());
    let mut rows = Vec::new();
    let mut out = format!(
        "budget {}, pick-and-freeze base size {}, {reps} repetitions\n{:>10} {:>10} {:>10} {:>10} {:>10}\n",
        t.budget, t.n_base, "parameter", "pce_mean", "pce_std", "sal_mean", "sal_std"
    );
    for i in 0..names.len() {
        rows.push(format!("{},{},{},{},{}", names[i], pm[i], ps[i], sm[i], ss[i]));
        let _ = writeln!(
            out,
            "{:>10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            names[i], pm[i], ps[i], sm[i], ss[i]
        );
    }
    ensure_dir(&cfg.output_dir)?;
    write_csv(
        &cfg.output_dir.join("variability.csv"),
        "parameter,pce_mean,pce_std,saltelli_mean,saltelli_std",
        &rows,
    )?;
    Ok(out)
}

/// Mean total indices over a grid of inner and outer sample sizes.
pub fn sweep(cfg: &ExperimentConfig, n_ss: &[usize], n_samp: &[usize], reps: usize) -> AppResult<String> {
    let cells = budget_sweep(cfg, n_ss, n_samp, reps)?;
    let names = param_names(cfg);
    let mut rows = Vec::new();
    let mut out = String::new();
    for c in &cells {
        let _ = write!(out, "N_SS {:>6}  N_samp {:>6}", c.n_ss, c.n_samp);
        if c.undefined > 0 {
            let _ = write!(
                out,
                "  ({} of {} repetitions gave a constant surrogate)",
                c.undefined, c.reps
            );
        }
        out.push('\n');
        for (i, n) in names.iter().enumerate() {
            rows.push(format!(
                "{},{},{n},{},{},{}",
                c.n_ss,
                c.n_samp,
                c.mean_total[i],
                c.std_total[i],
                c.reps - c.undefined
            ));
            let _ = writeln!(out, "  {n:>10} {:>8.4} +- {:.4}", c.mean_total[i], c.std_total[i]);
        }
    }
    ensure_dir(&cfg.output_dir)?;
    write_csv(
        &cfg.output_dir.join("budget_sweep.csv"),
        "n_ss,n_samp,parameter,mean_total,std_total,defined_reps",
        &rows,
    )?;
    Ok(out)
}

/// Field, pressure and velocity of a few random draws at one point.
pub fn darcy_demo(cfg: &ExperimentConfig, xi: Option<&[f64]>, draws: usize) -> AppResult<String> {
    let mut cfg = cfg.clone();
    if cfg.model != ModelKind::Darcy {
        cfg.model = ModelKind::Darcy;
        cfg.nominal = None;
        cfg.tau = None;
    }
    let setup = ModelSetup::from_config(&cfg)?;
    let darcy = setup.darcy.as_ref().expect("darcy setup present");
    let xi = xi.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.nominal());
    let ctx = darcy.context(&xi)?;
    ensure_dir(&cfg.output_dir)?;
    let mut stream = RandomStream::new(cfg.seed, 0).split(5);
    let mut theta = vec![0.0; ctx.dim()];
    let mut out = format!(
        "grid {}x{}, {} modes retaining {:.1}% of the variance\n",
        ctx.grid.n(),
        ctx.grid.n(),
        ctx.dim(),
        100.0 * ctx.basis.energy_fraction()
    );
    for k in 0..draws {
        stream.fill_standard_normal(&mut theta);
        let sol = ctx.solve(&theta)?;
        let dir = &cfg.output_dir;
        write_cell_csv(
            &dir.join(format!("log_perm_{k}.csv")),
            ctx.grid,
            "log_perm",
            &sol.field.log_perm,
        )?;
        write_cell_csv(
            &dir.join(format!("pressure_{k}.csv")),
            ctx.grid,
            "pressure",
            &sol.pressure,
        )?;
        write_velocity_csv(&dir.join(format!("velocity_{k}.csv")), &sol.velocity)?;
        let _ = writeln!(
            out,
            "draw {k}: hitting time {:.4}{}",
            sol.hitting.time,
            if sol.hitting.censored { " (censored)" } else { "" }
        );
    }
    Ok(out)
}

/// Sobol' indices of a saved surrogate.
pub fn sobol_from_file(cfg: &ExperimentConfig, surrogate: Option<&Path>) -> AppResult<String> {
    let path: PathBuf = surrogate
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("surrogate.json"));
    let s = read_surrogate(&path)?;
    let r = sobol_report(&s)?;
    let names: Vec<String> = if s.dim() == param_names(cfg).len() {
        param_names(cfg)
    } else {
        (1..=s.dim()).map(|i| format!("xi_{i}")).collect()
    };
    let mut out = format!("mean {:.6e}, variance {:.6e}\n", r.mean, r.variance);
    out.push_str(&index_table(&names, &r.first_order, &r.total));
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::write(dir.join("sobol_report.json"), to_json(&r))
        .map_err(|e| AppError::io(dir.join("sobol_report.json"), e))?;
    Ok(out)
}
