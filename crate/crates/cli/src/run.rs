use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use fimci::montecarlo::{Experiment, ExperimentConfig, ExperimentReport, ReplicationRecord};

use crate::config::{parse_config, validate};
use crate::error::{CliError, Result};
use crate::presets;
use crate::report::{artifact_version, read_manifest, write_report, RunManifest};

/// Exclusion rate above which a run is a soft failure.
pub const MAX_EXCLUSION_RATE: f64 = 0.2;

pub const EXIT_OK: i32 = 0;
pub const EXIT_HARD: i32 = 1;
pub const EXIT_SOFT: i32 = 2;

/// Command-line overrides applied on top of a preset or file.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub threads: Option<usize>,
    pub reliability: Option<usize>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub records: Vec<ReplicationRecord>,
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
}

/// A preset name, or else a path to an experiment file.
pub fn resolve_experiment(spec: &str) -> Result<ExperimentConfig> {
    if presets::canonical(spec).is_some() {
        return presets::load(spec);
    }
    let path = Path::new(spec);
    if path.exists() {
        return parse_config(path);
    }
    Err(CliError::UnknownPreset(spec.to_string()))
}

pub fn apply_overrides(mut config: ExperimentConfig, flags: &RunFlags) -> Result<ExperimentConfig> {
    if let Some(r) = flags.reps {
        config.replications = r;
    }
    if let Some(s) = flags.seed {
        config.master_seed = s;
    }
    if let Some(a) = flags.alpha {
        config.alpha = a;
    }
    if let Some(n) = flags.n {
        config.n = n;
    }
    validate(&config)?;
    Ok(config)
}

pub fn exit_code(report: &ExperimentReport) -> i32 {
    if report.exclusion_rate() > MAX_EXCLUSION_RATE {
        EXIT_SOFT
    } else {
        EXIT_OK
    }
}

fn worker_count(threads: Option<usize>) -> usize {
    threads
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the replications (and the reliability study if requested) and
/// writes all output files into `out_dir`.
pub fn run_experiment(config: ExperimentConfig, flags: &RunFlags, out_dir: &Path) -> Result<RunOutcome> {
    validate(&config)?;
    let workers = worker_count(flags.threads);
    let started_at = Utc::now();
    let clock = Instant::now();

    let experiment = Experiment::new(config.clone())?;
    let records = experiment.run(Some(workers))?;
    let mut report = experiment.report(&records)?;
    if let Some(outer) = flags.reliability {
        report.reliability = Some(experiment.covariance_reliability(outer, Some(workers))?);
    }

    let manifest = RunManifest {
        artifact_version: artifact_version(),
        started_at,
        finished_at: Utc::now(),
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        worker_count: workers,
        reliability_repeats: flags.reliability,
        config,
    };
    let files = write_report(&report, &records, &manifest, out_dir)?;
    let exit_code = exit_code(&report);
    Ok(RunOutcome { report, records, manifest, files, exit_code })
}

/// Re-runs the experiment recorded in a manifest.
pub fn replay(manifest_path: &Path, threads: Option<usize>, out_dir: &Path) -> Result<RunOutcome> {
    let m = read_manifest(manifest_path)?;
    let flags = RunFlags {
        threads: threads.or(Some(m.worker_count)),
        reliability: m.reliability_repeats,
        ..RunFlags::default()
    };
    run_experiment(m.config, &flags, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_validated() {
        let c = presets::load("table1").unwrap();
        let flags = RunFlags { reps: Some(1), ..RunFlags::default() };
        match apply_overrides(c, &flags) {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "replications"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_replace_fields() {
        let c = presets::load("table5").unwrap();
        let flags = RunFlags { reps: Some(20), seed: Some(7), alpha: Some(0.1), n: Some(100), ..RunFlags::default() };
        let c = apply_overrides(c, &flags).unwrap();
        assert_eq!((c.replications, c.master_seed, c.alpha, c.n), (20, 7, 0.1, 100));
    }

    #[test]
    fn zero_threads_means_all_cores() {
        assert!(worker_count(Some(0)) >= 1);
        assert_eq!(worker_count(Some(3)), 3);
    }
}
