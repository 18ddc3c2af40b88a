//! Experiment files.
//!
//! ```toml
//! [experiment]
//! model_id = "GAUSSMIX"          # GAUSSMIX | SPN1D | SPN4D | SSM
//! theta_star = [0.5, 0.0, 4.0]
//! n = 50
//! replications = 1000
//! master_seed = 42               # optional, default 42
//! alpha = 0.05                   # optional, default 0.05
//!
//! [solver]                       # optional; every key falls back to the model default
//! max_iterations = 100
//! gradient_tolerance = 1e-8
//! step_halving_limit = 40
//! initializer = "true_perturbed" # true_perturbed | moment | user
//! perturbation_scale = 0.1
//! user_start = [0.5, 0.0, 4.0]
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use fimci::estimation::Initializer;
use fimci::montecarlo::{ExperimentConfig, ModelId};
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: ExperimentSection,
    #[serde(default)]
    solver: SolverSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    model_id: ModelId,
    theta_star: Vec<f64>,
    n: usize,
    replications: usize,
    #[serde(default = "default_seed")]
    master_seed: u64,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
    step_halving_limit: Option<usize>,
    initializer: Option<Initializer>,
    perturbation_scale: Option<f64>,
    user_start: Option<Vec<f64>>,
}

/// 1-based line and column of a byte offset.
pub(crate) fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub(crate) fn toml_error(origin: &str, text: &str, err: toml::de::Error) -> CliError {
    let (line, column) = err.span().map_or((1, 1), |s| line_column(text, s.start));
    CliError::Parse { origin: origin.to_string(), line, column, message: err.message().trim().to_string() }
}

/// Parses and validates an experiment file held in memory. `origin` names
/// the source in error messages.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| toml_error(origin, text, e))?;
    let e = file.experiment;
    let mut config = ExperimentConfig::new(e.model_id, e.theta_star, e.n, e.replications, e.master_seed, e.alpha);
    let s = file.solver;
    let solver = &mut config.solver;
    if let Some(v) = s.max_iterations {
        solver.max_iterations = v;
    }
    if let Some(v) = s.gradient_tolerance {
        solver.gradient_tolerance = v;
    }
    if let Some(v) = s.step_halving_limit {
        solver.step_halving_limit = v;
    }
    if let Some(v) = s.initializer {
        solver.initializer = v;
    }
    if let Some(v) = s.perturbation_scale {
        solver.perturbation_scale = v;
    }
    if s.user_start.is_some() {
        solver.user_start = s.user_start;
    }
    validate(&config)?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text, &path.display().to_string())
}

/// Core validation plus the limits of the file format.
pub fn validate(config: &ExperimentConfig) -> Result<()> {
    // TOML integers are signed 64-bit.
    if config.master_seed > i64::MAX as u64 {
        return Err(CliError::Validation {
            field: "master_seed".into(),
            message: format!("must not exceed {}", i64::MAX),
        });
    }
    config.validate().map_err(CliError::from_validation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_column_counts_from_one() {
        let text = "a\nbc\ndef";
        assert_eq!(line_column(text, 0), (1, 1));
        assert_eq!(line_column(text, 3), (2, 2));
        assert_eq!(line_column(text, 5), (3, 1));
    }

    #[test]
    fn defaults_fill_seed_alpha_and_solver() {
        let c = parse_config_str(
            "[experiment]\nmodel_id = \"SSM\"\ntheta_star = [1.0, 1.0, 1.0]\nn = 20\nreplications = 5\n",
            "inline",
        )
        .unwrap();
        assert_eq!(c.master_seed, DEFAULT_SEED);
        assert_eq!(c.alpha, DEFAULT_ALPHA);
        assert_eq!(c.solver, ModelId::Ssm.default_solver());
    }

    #[test]
    fn solver_overrides_apply() {
        let c = parse_config_str(
            "[experiment]\nmodel_id = \"SPN1D\"\ntheta_star = [10.0, 10.0]\nn = 20\nreplications = 5\n\
             [solver]\nmax_iterations = 7\ninitializer = \"moment\"\n",
            "inline",
        )
        .unwrap();
        assert_eq!(c.solver.max_iterations, 7);
        assert_eq!(c.solver.initializer, Initializer::Moment);
        assert_eq!(c.solver.gradient_tolerance, 1e-8);
    }

    #[test]
    fn oversized_seed_is_rejected() {
        let mut c = ExperimentConfig::new(ModelId::GaussMix, vec![0.5, 0.0, 4.0], 50, 10, 0, 0.05);
        c.master_seed = u64::MAX;
        match validate(&c) {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "master_seed"),
            other => panic!("{other:?}"),
        }
    }
}
