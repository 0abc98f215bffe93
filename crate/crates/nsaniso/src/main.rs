//! Command-line front end: `nsaniso <experiment> --config <path>`.
//! Exits 0 exactly when every check of the experiment passes; on failure
//! the first failing check is printed and the exit code is 1. Operational
//! errors (unreadable config, solver setup failures) exit with 2.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nsaniso::config::ExperimentConfig;
use nsaniso::experiments;

#[derive(Parser)]
#[command(
    name = "nsaniso",
    version,
    about = "Experiment drivers for anisotropic-viscosity incompressible flow"
)]
struct Cli {
    /// Experiment to run; must match the configuration file.
    experiment: String,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir` from the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the sweep experiments (falls back to the
    /// NSANISO_JOBS environment variable, then to the default pool).
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed folded into the sampled initial data (overrides the
    /// configuration's `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if cli.experiment != cfg.experiment {
        return Err(format!(
            "configuration file is for {:?}, but {:?} was requested",
            cfg.experiment, cli.experiment
        )
        .into());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out_dir = cli
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out-{}", cfg.experiment)));
    let jobs = cli.jobs.or_else(|| {
        std::env::var("NSANISO_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    });

    let outcome = experiments::run(&cfg, &out_dir, jobs)?;
    for check in &outcome.checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} (value {})", check.name, check.value);
    }
    println!("artifacts in {}", out_dir.display());
    if let Some(fail) = outcome.first_failure() {
        eprintln!("first failing check: {} (value {})", fail.name, fail.value);
        Ok(ExitCode::FAILURE)
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
