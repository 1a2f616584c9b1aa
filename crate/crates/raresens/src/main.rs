use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raresens::commands;
use raresens::{AppError, AppResult, Estimator, ExperimentConfig, ModelKind, Overrides};

#[derive(Parser)]
#[command(
    name = "raresens",
    version,
    about = "Sensitivity of rare-event probabilities to hyper-parameters"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelKind>,
    /// Inner estimator of P(xi).
    #[arg(long, global = true, value_enum)]
    estimator: Option<Estimator>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    n_samp: Option<usize>,
    /// Subset-simulation samples per level.
    #[arg(long, global = true)]
    n_ss: Option<usize>,
    #[arg(long, global = true)]
    p0: Option<f64>,
    #[arg(long, global = true)]
    pce_order: Option<usize>,
    /// l1 radius of the sparse fit.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form probabilities and their spread over the box (analytic model).
    Exact {
        #[arg(long, value_delimiter = ',', default_value = "2,2.5,3,3.5,4,4.5,5")]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        n_outer: usize,
    },
    /// Repeated inner estimates at one hyper-parameter point.
    SsEstimate {
        /// Hyper-parameters, comma separated; the nominal point by default.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        xi: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Outer design, inner estimates, sparse surrogate and Sobol' indices.
    DoubleLoop,
    /// Spread of total indices, surrogate versus pick-and-freeze.
    Variability {
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
    /// Mean total indices over inner and outer sample sizes.
    BudgetSweep {
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000")]
        n_ss_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "100,1000")]
        n_samp_grid: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
    },
    /// Permeability, pressure and velocity dumps of random draws.
    DarcyDemo {
        #[arg(long, value_delimiter = ',')]
        xi: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2)]
        draws: usize,
    },
    /// Sobol' indices of a saved surrogate.
    SobolReport {
        /// Surrogate file; `<out>/surrogate.json` by default.
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
}

fn build_config(g: &Global) -> AppResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: g.seed,
        model: g.model,
        tau: g.tau,
        n_samp: g.n_samp,
        n_ss: g.n_ss,
        p0: g.p0,
        pce_order: g.pce_order,
        lambda: g.lambda,
        out: g.out.clone(),
        threads: g.threads,
    });
    if let Some(e) = g.estimator {
        cfg.estimator = e;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> AppResult<String> {
    let cfg = build_config(&cli.global)?;
    match cli.command {
        Command::Exact { taus, n_outer } => commands::exact(&cfg, &taus, n_outer),
        Command::SsEstimate { xi, runs } => commands::ss_estimate(&cfg, xi.as_deref(), runs),
        Command::DoubleLoop => commands::double_loop(&cfg),
        Command::Variability { reps } => commands::variability(&cfg, reps),
        Command::BudgetSweep {
            n_ss_grid,
            n_samp_grid,
            reps,
        } => commands::sweep(&cfg, &n_ss_grid, &n_samp_grid, reps),
        Command::DarcyDemo { xi, draws } => commands::darcy_demo(&cfg, xi.as_deref(), draws),
        Command::SobolReport { surrogate } => commands::sobol_from_file(&cfg, surrogate.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &AppError) -> u8 {
    e.exit_code() as u8
}
