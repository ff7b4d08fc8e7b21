//! Argument parsing and dispatch. Exit codes: 0 when every check passes,
//! 1 when a check fails (or the run breaks down), 2 for invalid input.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands;
use crate::report::Outcome;
use crate::scenario::{load, Overrides, Scenario};
use crate::verify;
use crate::{LabError, LabResult};

#[derive(Debug, Parser)]
#[command(
    name = "delayfbsde",
    version,
    about = "Delay FBSDE experiments: simulation, pricing, control and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true, env = "DELAYFBSDE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory for report.json and exports; the report goes to stdout
    /// when absent.
    #[arg(long, global = true, env = "DELAYFBSDE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "DELAYFBSDE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "DELAYFBSDE_PATHS")]
    pub paths: Option<usize>,
    /// Time step; must divide the delay window.
    #[arg(long, global = true, env = "DELAYFBSDE_DT")]
    pub dt: Option<f64>,
    /// Worker threads (reports do not depend on it).
    #[arg(long, global = true, env = "DELAYFBSDE_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Forward ensembles of a delay equation.
    Simulate,
    /// Price, hedge and optionally replicate a claim.
    Price,
    /// Policy tournament and feedback law against the value function.
    Control,
    /// Joint quadratic variation convergence study.
    Qv,
    /// Malliavin derivative against the bump oracle.
    Malliavin,
    /// The property suite with a pass/fail summary.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Price => "price",
            Self::Control => "control",
            Self::Qv => "qv",
            Self::Malliavin => "malliavin",
            Self::Verify => "verify",
        }
    }
}

fn scenario<S: Scenario>(path: &Path, overrides: &Overrides) -> LabResult<(S, u64)> {
    let sc: S = load(path, overrides)?;
    let seed = sc.seed();
    Ok((sc, seed))
}

/// Loads the scenario and runs the subcommand on the current thread pool.
pub fn execute(command: Command, config: &Path, overrides: &Overrides) -> LabResult<Outcome> {
    let name = command.name();
    Ok(match command {
        Command::Simulate => {
            let (sc, seed) = scenario(config, overrides)?;
            commands::simulate(&sc)?.into_outcome(name, seed, &sc)
        }
        Command::Price => {
            let (sc, seed) = scenario(config, overrides)?;
            commands::price_claim(&sc)?.into_outcome(name, seed, &sc)
        }
        Command::Control => {
            let (sc, seed) = scenario(config, overrides)?;
            commands::control(&sc)?.into_outcome(name, seed, &sc)
        }
        Command::Qv => {
            let (sc, seed) = scenario(config, overrides)?;
            commands::quadratic_variation(&sc)?.into_outcome(name, seed, &sc)
        }
        Command::Malliavin => {
            let (sc, seed) = scenario(config, overrides)?;
            commands::malliavin(&sc)?.into_outcome(name, seed, &sc)
        }
        Command::Verify => {
            let (sc, seed) = scenario(config, overrides)?;
            verify::verify(&sc)?.into_outcome(name, seed, &sc)
        }
    })
}

/// [`execute`] on a pool of `threads` workers (the global pool when absent).
pub fn execute_with_threads(
    command: Command,
    config: &Path,
    overrides: &Overrides,
    threads: Option<usize>,
) -> LabResult<Outcome> {
    match threads {
        None => execute(command, config, overrides),
        Some(0) => Err(LabError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LabError::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| execute(command, config, overrides)),
    }
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> LabResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let report = dir.join("report.json");
    std::fs::write(&report, &outcome.report).map_err(|e| LabError::io(&report, e))?;
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| LabError::io(&path, e))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> u8 {
    let Some(config) = &cli.config else {
        eprintln!("error: --config PATH (or DELAYFBSDE_CONFIG) is required");
        return 2;
    };
    let overrides = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        dt: cli.dt,
    };
    let start = Instant::now();
    let outcome = match execute_with_threads(cli.command, config, &overrides, cli.threads) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if !outcome.artifacts.is_empty() && cli.out.is_none() {
        eprintln!("error: the scenario requests exports; pass --out DIR");
        return 2;
    }
    match &cli.out {
        Some(dir) => {
            if let Err(e) = write_outputs(dir, &outcome) {
                eprintln!("error: {e}");
                return 1;
            }
        }
        None => print!("{}", outcome.report),
    }
    for (name, check) in &outcome.checks {
        eprintln!(
            "{} {name}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.detail
        );
    }
    eprintln!(
        "{} finished in {:.1} s",
        cli.command.name(),
        start.elapsed().as_secs_f64()
    );
    if outcome.passed() {
        0
    } else {
        eprintln!("check failed: {}", outcome.failures().join(", "));
        1
    }
}
