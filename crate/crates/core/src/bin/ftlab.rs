use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ftlab::harness::{self, parse_config, Scenario};
use ftlab::{Error, Result};

/// Forecast-trap experiments: run scenarios, verify outputs, check configs.
#[derive(Parser)]
#[command(name = "ftlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Scenario name (overrides `scenario` in the config).
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Verify checksums and recompute the headline statistics of a run directory.
    Summarize { dir: PathBuf },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = harness::thread_limit()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config { key: "FTLAB_THREADS".into(), message: e.to_string() })?;
    }
    match cli.command {
        Command::Run { config, out, seed, scenario } => {
            let mut cfg = parse_config(&config)?;
            if let Some(dir) = out {
                cfg.output = dir;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(name) = scenario {
                cfg.scenario = name.parse::<Scenario>()?;
            }
            let report = harness::run_scenario(&cfg, &|line| println!("{line}"))?;
            println!(
                "done: {} in {:.1}s, {} files plus manifest",
                report.manifest.scenario,
                report.manifest.wall_clock_seconds,
                report.manifest.files.len()
            );
        }
        Command::Summarize { dir } => {
            let report = harness::summarize(&dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Validate { config } => {
            let cfg = parse_config(&config)?;
            println!("{}: valid ({} scenario, seed {})", config.display(), cfg.scenario, cfg.seed);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ftlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
