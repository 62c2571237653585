//! Config-driven experiment runner around `pflm-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plotdata;

use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Load `path`, check it is a `kind` experiment, apply overrides and run it.
pub fn run_config_file(
    kind: ExperimentKind,
    path: &Path,
    overrides: &Overrides,
) -> CliResult<Vec<PathBuf>> {
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.kind != kind {
        return Err(CliError::Config(format!(
            "{} describes a `{}` experiment, not `{}`",
            path.display(),
            cfg.kind.name(),
            kind.name()
        )));
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if overrides.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let workers = overrides.workers.or(cfg.workers).unwrap_or(1);
    experiments::run(&cfg, &out, workers)
}
