use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use glmarket::validate_market;
use glmarket_cli::config::ExperimentConfig;
use glmarket_cli::{runner, CliError};

#[derive(Parser)]
#[command(
    name = "glmarket",
    about = "Price-competition simulator: generalized-linear demand, UCB pricing, Nash benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run multi-seed episodes; write trajectory CSVs, summary JSON and
    /// lemma reports.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Proceed even when model assumptions fail validation.
        #[arg(long)]
        force: bool,
        /// Use this many seeds (extends the configured list if needed).
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads (default: GLMARKET_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Regret-scaling study over the configured horizon ladder.
    Scaling {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check model assumptions and print the evidence report.
    Validate { config: PathBuf },
    /// Full inequality battery, including concentration coverage.
    Lemmas {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run {
            config,
            out,
            force,
            seeds,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = runner::run_experiment(&cfg, &out, force, seeds, workers)?;
            println!(
                "wrote {} trajectories to {}; mean regret per seller: {:?}",
                cfg.seeds(seeds).len(),
                out.display(),
                summary.regret_mean
            );
            Ok(())
        }
        Cmd::Scaling {
            config,
            out,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let slope = runner::regret_scaling_study(&cfg, &out, workers)?;
            for (i, s) in slope.per_seller.iter().enumerate() {
                println!(
                    "seller {i}: slope {s:.4} (95% CI [{:.4}, {:.4}])",
                    slope.ci_lower[i], slope.ci_upper[i]
                );
            }
            Ok(())
        }
        Cmd::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let market = cfg.market(None)?;
            let report = validate_market(&market, 101);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?
            );
            if report.all_ok() {
                println!("all assumptions hold (A1-A5)");
                Ok(())
            } else {
                Err(CliError::Gate(report.failures().join("; ")))
            }
        }
        Cmd::Lemmas {
            config,
            out,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let reports = runner::lemma_suite(&cfg, &out, workers)?;
            let mut failed = 0;
            for rep in &reports {
                println!(
                    "{} {}: lhs {:.6e} vs rhs {:.6e}",
                    if rep.pass { "pass" } else { "FAIL" },
                    rep.lemma,
                    rep.lhs,
                    rep.rhs
                );
                if !rep.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                Err(CliError::Io(format!("{failed} lemma checks failed")))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
