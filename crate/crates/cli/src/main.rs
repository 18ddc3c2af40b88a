use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};
use fimci_cli::report::TABLE_FILE;
use fimci_cli::run::{apply_overrides, replay, resolve_experiment, EXIT_HARD, EXIT_SOFT, MAX_EXCLUSION_RATE};
use fimci_cli::{presets, run_experiment, RunFlags, RunOutcome};

/// Monte Carlo comparison of observed and expected Fisher information as
/// variance estimates for MLE confidence intervals.
#[derive(Debug, Parser)]
#[command(name = "fimci", version)]
#[command(group(ArgGroup::new("source").required(true).args(["experiment", "replay", "list"])))]
struct Args {
    /// Preset name (e.g. table1_case1, table5) or path to an experiment file.
    #[arg(long, value_name = "PRESET|PATH")]
    experiment: Option<String>,

    /// Re-run the experiment recorded in a manifest.struct.
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = ["reps", "seed", "alpha", "n", "reliability"])]
    replay: Option<PathBuf>,

    /// List the presets and exit.
    #[arg(long)]
    list: bool,

    /// Number of Monte Carlo replications.
    #[arg(long, value_name = "N")]
    reps: Option<usize>,

    /// Master seed.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,

    /// Per-component significance level.
    #[arg(long, value_name = "A")]
    alpha: Option<f64>,

    /// Sample size.
    #[arg(long, value_name = "N")]
    n: Option<usize>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_name = "T")]
    threads: Option<usize>,

    /// Also run the covariance reliability study with M outer repeats.
    #[arg(long, value_name = "M")]
    reliability: Option<usize>,
}

fn execute(args: &Args) -> fimci_cli::Result<Option<RunOutcome>> {
    if args.list {
        for name in presets::names() {
            let c = presets::load(name)?;
            println!("{name:<14} {:<9} n={:<5} theta*={:?}", c.model_id.label(), c.n, c.theta_star);
        }
        return Ok(None);
    }
    if let Some(manifest) = &args.replay {
        return replay(manifest, args.threads, &args.out).map(Some);
    }
    let spec = args.experiment.as_deref().expect("clap enforces a source");
    let flags = RunFlags {
        reps: args.reps,
        seed: args.seed,
        alpha: args.alpha,
        n: args.n,
        threads: args.threads,
        reliability: args.reliability,
    };
    let config = apply_overrides(resolve_experiment(spec)?, &flags)?;
    run_experiment(config, &flags, &args.out).map(Some)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            match std::fs::read_to_string(args.out.join(TABLE_FILE)) {
                Ok(table) => print!("{table}"),
                Err(e) => eprintln!("warning: could not read back the table: {e}"),
            }
            eprintln!(
                "wrote {} files to {} in {:.1} s",
                outcome.files.len(),
                args.out.display(),
                outcome.manifest.wall_time_seconds
            );
            if outcome.exit_code == EXIT_SOFT {
                eprintln!(
                    "warning: {:.1}% of replications excluded (limit {:.0}%)",
                    100.0 * outcome.report.exclusion_rate(),
                    100.0 * MAX_EXCLUSION_RATE
                );
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_HARD as u8)
        }
    }
}
