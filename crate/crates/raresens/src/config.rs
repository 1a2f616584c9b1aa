//! Experiment configuration: a TOML file with flat dotted keys, overridden
//! by command-line flags.
//!
//! ```toml
//! model = "analytic"
//! tau = 3.0
//! n_samp = 1000
//! seed = 7
//! ss.n_per_level = 1000
//! ss.p0 = 0.1
//! pce.order = 3
//! pce.lambda = 0.05
//! ```

use std::path::{Path, PathBuf};

use raresens_core::analytic::AnalyticHyper;
use raresens_core::darcy::DarcyHyper;
use raresens_core::subset::SSConfig;
use raresens_core::UniformBox;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Analytic,
    Darcy,
}

/// How `P(xi)` is obtained for each hyper-parameter sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Subset simulation.
    Ss,
    /// Closed form; analytic model only.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsSection {
    pub n_per_level: usize,
    pub p0: f64,
    pub max_levels: usize,
    pub proposal_spread: f64,
}

impl Default for SsSection {
    fn default() -> Self {
        let d = SSConfig::default();
        Self {
            n_per_level: d.n_per_level,
            p0: d.p0,
            max_levels: d.max_levels,
            proposal_spread: d.proposal_spread,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceSection {
    pub order: usize,
    /// Radius of the l1 ball.
    pub lambda: Option<f64>,
    /// Choose the radius by k-fold cross-validation instead; also implied
    /// when `lambda` is absent.
    pub cross_validate: bool,
    pub cv_folds: usize,
    pub cv_grid: usize,
}

impl Default for PceSection {
    fn default() -> Self {
        Self {
            order: 3,
            lambda: Some(5e-2),
            cross_validate: false,
            cv_folds: 5,
            cv_grid: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarcySection {
    /// Cells per side.
    pub grid: usize,
    /// Share of the covariance trace kept by the expansion at the shortest
    /// correlation lengths of the box.
    pub energy: f64,
    /// Fixes the mode count instead of deriving it from `energy`.
    pub n_kl: Option<usize>,
    /// Plain-text mean log-permeability grid; zero when absent.
    pub mean_field: Option<PathBuf>,
    pub t_cap: f64,
}

impl Default for DarcySection {
    fn default() -> Self {
        Self {
            grid: 25,
            energy: 0.9,
            n_kl: None,
            mean_field: None,
            t_cap: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub estimator: Estimator,
    /// Centre of the hyper-parameter box; the model's reference values when
    /// absent.
    pub nominal: Option<Vec<f64>>,
    /// Half-width of the box as a fraction of `nominal`.
    pub perturbation: f64,
    /// Rare-event threshold; 3 for the analytic model and 4.5 for Darcy when
    /// absent.
    pub tau: Option<f64>,
    pub n_samp: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub ss: SsSection,
    pub pce: PceSection,
    pub darcy: DarcySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Analytic,
            estimator: Estimator::Ss,
            nominal: None,
            perturbation: 0.1,
            tau: None,
            n_samp: 1000,
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("out"),
            ss: SsSection::default(),
            pce: PceSection::default(),
            darcy: DarcySection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub tau: Option<f64>,
    pub n_samp: Option<usize>,
    pub n_ss: Option<usize>,
    pub p0: Option<f64>,
    pub pce_order: Option<usize>,
    pub lambda: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl PceSection {
    /// The fixed radius, or `None` when cross-validation picks it.
    pub fn fixed_radius(&self) -> Option<f64> {
        if self.cross_validate {
            None
        } else {
            self.lambda
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> AppResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.model {
            if v != self.model {
                // the box centre belongs to the previous model
                self.nominal = None;
            }
            self.model = v;
        }
        if let Some(v) = o.tau {
            self.tau = Some(v);
        }
        if let Some(v) = o.n_samp {
            self.n_samp = v;
        }
        if let Some(v) = o.n_ss {
            self.ss.n_per_level = v;
        }
        if let Some(v) = o.p0 {
            self.ss.p0 = v;
        }
        if let Some(v) = o.pce_order {
            self.pce.order = v;
        }
        if let Some(v) = o.lambda {
            self.pce.lambda = Some(v);
            self.pce.cross_validate = false;
        }
        if let Some(v) = &o.out {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
    }

    pub fn nominal(&self) -> Vec<f64> {
        match (&self.nominal, self.model) {
            (Some(v), _) => v.clone(),
            (None, ModelKind::Analytic) => AnalyticHyper::nominal().to_xi(),
            (None, ModelKind::Darcy) => DarcyHyper::nominal().to_xi(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(match self.model {
            ModelKind::Analytic => 3.0,
            ModelKind::Darcy => 4.5,
        })
    }

    pub fn hyper_box(&self) -> AppResult<UniformBox> {
        UniformBox::around(&self.nominal(), self.perturbation).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn ss_config(&self) -> SSConfig {
        SSConfig {
            n_per_level: self.ss.n_per_level,
            p0: self.ss.p0,
            tau: self.tau(),
            max_levels: self.ss.max_levels,
            proposal_spread: self.ss.proposal_spread,
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::Config(m));
        if self.n_samp < 1 {
            return bad("n_samp must be at least 1".into());
        }
        if !(self.perturbation > 0.0 && self.perturbation < 1.0) {
            return bad(format!("perturbation {} not in (0, 1)", self.perturbation));
        }
        if !self.tau().is_finite() {
            return bad("tau must be finite".into());
        }
        self.ss_config()
            .validate()
            .map_err(|e| AppError::Config(e.to_string()))?;
        if let Some(l) = self.pce.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("pce.lambda {l} must be positive"));
            }
        }
        if self.pce.fixed_radius().is_none() && (self.pce.cv_folds < 2 || self.pce.cv_grid < 2) {
            return bad("cross-validation needs pce.cv_folds >= 2 and pce.cv_grid >= 2".into());
        }
        let nominal = self.nominal();
        match self.model {
            ModelKind::Analytic => {
                AnalyticHyper::from_xi(&nominal).map_err(|e| AppError::Config(e.to_string()))?;
            }
            ModelKind::Darcy => {
                DarcyHyper::from_xi(&nominal).map_err(|e| AppError::Config(e.to_string()))?;
                if self.estimator == Estimator::Exact {
                    return bad("the exact estimator is only available for the analytic model".into());
                }
                if self.darcy.grid < 4 {
                    return bad(format!("darcy.grid {} below 4", self.darcy.grid));
                }
                if !(self.darcy.energy > 0.0 && self.darcy.energy <= 1.0) {
                    return bad(format!("darcy.energy {} not in (0, 1]", self.darcy.energy));
                }
                if self.darcy.t_cap.is_nan() || self.darcy.t_cap <= 0.0 {
                    return bad(format!("darcy.t_cap {} must be positive", self.darcy.t_cap));
                }
                if self.darcy.n_kl == Some(0) {
                    return bad("darcy.n_kl must be at least 1".into());
                }
            }
        }
        self.hyper_box()?;
        Ok(())
    }
}
