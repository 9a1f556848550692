//! The acceptance battery at its stated tolerances, one line per criterion.
//! Runs without the libtest harness so the lines are always shown.

use std::process::ExitCode;

use hfact_cli::suite::run_all;
use hfact_cli::ExperimentConfig;

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let prep = cfg.prepare(std::path::Path::new(".")).expect("default config is valid");
    let result = run_all(&cfg, &prep);
    for o in &result.outcomes {
        println!("{}", o.line());
    }
    let failed = result.outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", result.outcomes.len() - failed);
    if result.outcomes.len() == 9 && failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
