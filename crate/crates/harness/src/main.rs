//! `berknash` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use berknash_harness::benchmark;
use berknash_harness::error::{HarnessError, Result};
use berknash_harness::experiments::{duality_audit, resolve_output_dir, run_experiment};
use berknash_harness::output::{fmt_float, PLOT_SCRIPT};
use berknash_harness::report::report;
use berknash_harness::ExperimentConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "berknash", version, about = "Berk-Nash equilibria in misspecified MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or a previous run's manifest.json.
    Run {
        config: PathBuf,
        /// Also write a generic plotting script into the run directory.
        #[arg(long)]
        plot_script: bool,
    },
    /// Describe the canonical three-state benchmark.
    Benchmark3 {
        /// Print the instance as a config snippet.
        #[arg(long)]
        dump: bool,
    },
    /// Check LP duality and complementary slackness for every conjecture.
    AuditDuality { config: PathBuf },
    /// Summarize a finished run directory.
    Report { rundir: PathBuf },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, plot_script } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = resolve_output_dir(&cfg);
            let artifacts = run_experiment(&cfg, &dir)?;
            if plot_script {
                let path = dir.join("plot.py");
                std::fs::write(&path, PLOT_SCRIPT)
                    .map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))?;
            }
            for file in artifacts.files.iter().chain([&artifacts.manifest]) {
                println!("{}", file.display());
            }
            Ok(())
        }
        Command::Benchmark3 { dump } => {
            if dump {
                print!("{}", benchmark::dump());
            } else {
                println!(
                    "{}: 3 states, 2 actions, discount {}, mixture conjectures eps = {:?}",
                    benchmark::NAME,
                    benchmark::DISCOUNT,
                    benchmark::FAMILY_EPS
                );
                println!("use --dump for the full instance");
            }
            Ok(())
        }
        Command::AuditDuality { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mdp = cfg.build_instance()?;
            let cs = cfg.conjectures(&mdp)?;
            let rows = duality_audit(&mdp, &cs).map_err(|source| HarnessError::Solver {
                experiment: "audit-duality".into(),
                source,
            })?;
            println!("model  primal_gap  dual_gap  slackness  flow_residual  greedy  passed");
            for r in &rows {
                println!(
                    "{}  {}  {}  {}  {}  {}  {}",
                    r.model,
                    fmt_float(r.primal_gap()),
                    fmt_float(r.dual_gap()),
                    fmt_float(r.slackness),
                    fmt_float(r.flow_residual),
                    r.greedy,
                    r.passed()
                );
            }
            let failed: Vec<String> = rows
                .iter()
                .filter(|r| !r.passed())
                .map(|r| r.model.to_string())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Audit(format!(
                    "duality audit failed for models {}",
                    failed.join(", ")
                )))
            }
        }
        Command::Report { rundir } => {
            print!("{}", report(&rundir)?);
            Ok(())
        }
    }
}
