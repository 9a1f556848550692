use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hfact_cli::{emit_report, EXIT_NUMERICAL, run_subcommand, CliError, ExperimentConfig, Subcommand};

/// Weak factorization laboratory for H^1 through multilinear fractional
/// integrals.
#[derive(Parser, Debug)]
#[command(name = "hfact", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads` of the configuration.
    #[arg(long, env = "HFACT_THREADS")]
    threads: Option<usize>,
}

/// Returns whether every acceptance criterion passed (always true for
/// subcommands other than `suite`).
fn run(args: &Args) -> Result<bool, CliError> {
    let path = &args.config;
    let cfg = ExperimentConfig::load(path)?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let prep = cfg
        .prepare(&base)
        .map_err(|e| CliError::validation(path, e))?;
    let threads = args.threads.or(cfg.threads);
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::validation(
                path,
                hfact_core::Error::InvalidGrid("threads must be positive".into()),
            ));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = run_subcommand(args.subcommand, &cfg, &prep, &base, &out)
        .map_err(|e| CliError::from_core(path, e))?;
    emit_report(&report, &out, &cfg.formats).map_err(|e| CliError::io(&out, e))?;
    if args.subcommand == Subcommand::Suite {
        let failed = report.summary["criteria"]
            .as_array()
            .map(|cs| cs.iter().filter(|c| c["passed"] != true).count())
            .unwrap_or(0);
        for c in report.summary["criteria"].as_array().into_iter().flatten() {
            println!(
                "criterion {} [{}] {}",
                c["id"],
                if c["passed"] == true { "PASS" } else { "FAIL" },
                c["name"].as_str().unwrap_or("")
            );
        }
        return Ok(failed == 0);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL as u8),
        Err(e) => {
            eprintln!("hfact {}: {e}", args.subcommand.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
