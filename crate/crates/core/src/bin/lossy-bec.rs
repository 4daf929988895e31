use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lossy_condensate::config::{parse_config, Scenario, ScenarioConfig};
use lossy_condensate::persist::FailureRecord;
use lossy_condensate::runner::{run_directory, run_scenario};
use lossy_condensate::Error;

/// Truncated-Wigner simulations of a condensate with a localized drain.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Override `ensemble.base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override `ensemble.workers` (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override `outputs.directory`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run { config: PathBuf },
    /// Resolve and check a config, printing the resolved TOML.
    Validate { config: PathBuf },
    /// List the available scenarios.
    ListScenarios,
}

fn load(cli: &Cli, path: &PathBuf) -> Result<ScenarioConfig, Error> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.ensemble.base_seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.ensemble.workers = w;
    }
    if let Some(d) = &cli.out_dir {
        cfg.outputs.directory = d.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fail(cli: &Cli, cfg: Option<&ScenarioConfig>, err: &Error) -> ExitCode {
    let record = FailureRecord {
        scenario: cfg.map(|c| c.scenario.name().to_string()),
        config_hash: cfg.and_then(|c| c.hash().ok()),
        kind: err.kind().into(),
        message: err.to_string(),
    };
    let dir = match cfg {
        Some(c) => run_directory(c).ok(),
        None => cli.out_dir.clone(),
    };
    if let Some(d) = dir {
        if let Err(e) = record.write(&d) {
            eprintln!("could not write failure record: {e}");
        }
    }
    eprintln!(
        "{}",
        serde_json::to_string(&record).unwrap_or_else(|_| err.to_string())
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<16} {}", s.name(), s.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&cli, config).and_then(|c| c.to_toml()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config } => {
            let cfg = match load(&cli, config) {
                Ok(c) => c,
                Err(e) => return fail(&cli, None, &e),
            };
            match run_scenario(&cfg) {
                Ok(m) => {
                    let dir = run_directory(&cfg)
                        .map(|d| d.display().to_string())
                        .unwrap_or_default();
                    println!("{dir}");
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&m.summary).unwrap_or_default()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&cli, Some(&cfg), &e),
            }
        }
    }
}
