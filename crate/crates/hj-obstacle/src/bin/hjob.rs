//! Batch experiment driver. One subcommand per capability; everything else
//! lives in the library.
//!
//! Exit codes: 0 when every verdict is PASS/INFO, 1 on FAIL verdicts or
//! runtime errors, 2 on configuration errors. Errors are emitted as JSON on
//! stderr.

use clap::Parser;
use hj_obstacle::config::ExperimentConfig;
use hj_obstacle::experiments::{run_named, RunContext};
use hj_obstacle::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "hjob",
    about = "Obstacle problems for degenerate viscous Hamilton-Jacobi equations: batch experiments",
    after_help = "Subcommands: solve | ergodic | dichotomy | rate-study | adjoint-audit | key-stability | mc-verify | suite"
)]
struct Cli {
    /// Experiment to run.
    subcommand: String,
    /// TOML config; defaults are used (and echoed) when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (env HJOB_OUT overrides the default "./out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep cells; 0 uses all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Catalog problem key override.
    #[arg(long)]
    problem: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            let kind = match err {
                Error::Config(_) | Error::UnknownProblem(_) => "config",
                _ => "runtime",
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": err.to_string(), "kind": kind })
            );
            if kind == "config" {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> hj_obstacle::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(problem) = &cli.problem {
        cfg.problem = hj_obstacle::config::ProblemSection::from_catalog_key(problem);
    }
    if cfg.problem.catalog.is_empty() && cfg.problem.dim == 0 {
        // no problem configured anywhere: a sensible default
        cfg.problem =
            hj_obstacle::config::ProblemSection::from_catalog_key("subcritical-obstacle-1d");
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    if cfg.run.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("HJOB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = RunContext::new(out_dir);
    let report = run_named(&cli.subcommand, &cfg, &ctx)?;
    print!("{}", report.render_text());
    println!(
        "{}: {} checks, {} in {:.2}s -> {}",
        report.experiment,
        report.checks.len(),
        if report.all_pass() {
            "all green"
        } else {
            "FAILURES"
        },
        report.wall_seconds,
        ctx.out_dir.join(&cli.subcommand).display()
    );
    Ok(report.all_pass())
}
