//! The eight verification criteria at full size plus the worker-count
//! determinism check. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use delayfbsde::cli::{execute_with_threads, Command};
use delayfbsde::scenario::{load, Overrides, Scale, VerifyScenario};
use delayfbsde::verify::{criterion_name, run_criterion};

/// Wall-clock budget per criterion, seconds.
const BUDGET: [f64; 8] = [120.0, 30.0, 300.0, 120.0, 120.0, 300.0, 300.0, 600.0];

fn scenarios() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios"))
}

fn main() -> ExitCode {
    let full: VerifyScenario =
        load(&scenarios().join("verify_full.json"), &Overrides::default()).expect("bundled");
    assert_eq!(full.scale, Scale::Full);
    let mut all = true;
    for id in 1..=8u8 {
        let start = Instant::now();
        let outcome = run_criterion(id, Scale::Full, full.seed, false);
        let secs = start.elapsed().as_secs_f64();
        let budget = BUDGET[id as usize - 1];
        let (passed, summary) = match outcome {
            Ok(rep) => (rep.passed && secs <= budget, rep.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= passed;
        println!(
            "AC{id} {} {} ({secs:.1} s, budget {budget:.0} s): {summary}",
            if passed { "PASS" } else { "FAIL" },
            criterion_name(id)
        );
    }

    let start = Instant::now();
    let config = scenarios().join("verify_linear.json");
    let reports: Vec<String> = [1, 2, 8]
        .iter()
        .map(|&n| {
            match execute_with_threads(Command::Verify, &config, &Overrides::default(), Some(n)) {
                Ok(o) => o.report,
                Err(e) => format!("error: {e}"),
            }
        })
        .collect();
    let identical = reports
        .iter()
        .all(|r| r == &reports[0] && !r.starts_with("error"));
    all &= identical;
    println!(
        "AC9 {} determinism ({:.1} s): verify reports under 1, 2 and 8 workers are {}",
        if identical { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        if identical {
            format!("byte-identical ({} bytes)", reports[0].len())
        } else {
            "different".into()
        }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
