//! JSON experiment configuration.
//!
//! One file drives one experiment. Unknown keys are rejected so that typos
//! surface as config errors rather than silently falling back to defaults.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use pflm_core::grid::{make_uniform_grid, Grid};
use pflm_core::risk::{fit_effective_dimension_constant, theta_from_decay, BoundConfig};
use pflm_core::synthetic::{ModelSpec, PopulationOperators};

use crate::error::{CliError, CliResult};

/// Version of every CSV and JSON layout written by the runners.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rate,
    Concentration,
    Bounds,
    Minimax,
    Fit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Rate => "rate",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::Minimax => "minimax",
            ExperimentKind::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    pub points: usize,
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            points: 201,
        }
    }
}

/// Confidence levels and penalty schedule. `theta` defaults to `1/(2r)` for
/// power-law models and `c_eff` to the fitted effective-dimension constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSettings {
    #[serde(default = "tenth")]
    pub delta1: f64,
    #[serde(default = "tenth")]
    pub delta2: f64,
    #[serde(default = "tenth")]
    pub delta3: f64,
    #[serde(default = "tenth")]
    pub delta4: f64,
    #[serde(default = "tenth")]
    pub delta5: f64,
    #[serde(default = "tenth")]
    pub omega: f64,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub c_eff: Option<f64>,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            delta1: 0.1,
            delta2: 0.1,
            delta3: 0.1,
            delta4: 0.1,
            delta5: 0.1,
            omega: 0.1,
            theta: None,
            c_eff: None,
        }
    }
}

impl BoundSettings {
    /// Fill in `theta` and `c_eff` from the model where they were left out.
    pub fn resolve(&self, spec: &ModelSpec, pop: &PopulationOperators) -> CliResult<BoundConfig> {
        let theta = match self.theta {
            Some(t) => t,
            None => {
                let r = spec.decay_exponent().ok_or_else(|| {
                    CliError::Config(
                        "bounds.theta is required when the model is not a power law".into(),
                    )
                })?;
                theta_from_decay(r).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        let c_eff = match self.c_eff {
            Some(c) => c,
            None => fit_effective_dimension_constant(&pop.t, theta)?,
        };
        let cfg = BoundConfig {
            delta1: self.delta1,
            delta2: self.delta2,
            delta3: self.delta3,
            delta4: self.delta4,
            delta5: self.delta5,
            omega: self.omega,
            theta,
            c_eff,
        };
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Parameters of the lower-bound certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxConfig {
    pub r: f64,
    pub b1: f64,
    pub b2: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Required by every kind except `minimax`, where it only feeds the
    /// optional slope-family check.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub bounds: BoundSettings,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "one_rep")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Penalty used instead of the schedule, e.g. `0` for unpenalized fits.
    #[serde(default)]
    pub fixed_lambda: Option<f64>,
    /// Grow the covariate count as `max(1, ⌊n^g⌋)`; coefficients repeat the
    /// model's `alpha0` cyclically.
    #[serde(default)]
    pub covariate_growth: Option<f64>,
    #[serde(default)]
    pub minimax: Option<MinimaxConfig>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn one_rep() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "n_grid must be strictly increasing, got {:?}",
                self.n_grid
            ));
        }
        if self.n_grid.first() == Some(&0) {
            return bad("n_grid entries must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if let Some(l) = self.fixed_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("fixed_lambda must be nonnegative, got {l}"));
            }
        }
        if let Some(g) = self.covariate_growth {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("covariate_growth must lie in (0, 1), got {g}"));
            }
        }
        if let Some(model) = &self.model {
            model
                .validate()
                .map_err(|e| CliError::Config(format!("model: {e}")))?;
        }
        let needs_model = self.kind != ExperimentKind::Minimax;
        if needs_model && self.model.is_none() {
            return bad(format!("kind `{}` needs a model", self.kind.name()));
        }
        if needs_model && self.n_grid.is_empty() {
            return bad(format!(
                "kind `{}` needs a nonempty n_grid",
                self.kind.name()
            ));
        }
        if self.kind == ExperimentKind::Minimax && self.minimax.is_none() {
            return bad("kind `minimax` needs a `minimax` section".into());
        }
        if self.covariate_growth.is_some()
            && self.model.as_ref().is_some_and(|m| m.alpha0.is_empty())
        {
            return bad("covariate_growth needs a nonempty alpha0 to repeat".into());
        }
        make_uniform_grid(self.grid.a, self.grid.b, self.grid.points)
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        Ok(())
    }

    pub fn make_grid(&self) -> CliResult<Arc<Grid>> {
        make_uniform_grid(self.grid.a, self.grid.b, self.grid.points)
            .map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    /// Model used at sample size `n`, after any covariate growth.
    pub fn model_at(&self, n: usize) -> Option<ModelSpec> {
        let model = self.model.as_ref()?;
        Some(match self.covariate_growth {
            Some(g) => {
                let p = ((n as f64).powf(g).floor() as usize).max(1);
                let alpha = (0..p)
                    .map(|j| model.alpha0[j % model.alpha0.len()])
                    .collect();
                model.with_alpha0(alpha)
            }
            None => model.clone(),
        })
    }
}
