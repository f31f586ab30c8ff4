use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmdp_pd::error::{Error, Result};
use cmdp_pd::harness::{self, RunConfig};

#[derive(Parser)]
#[command(name = "cmdp-pd", version, about = "Constrained-MDP primal-dual policy optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
    },
    /// Run a built-in preset, optionally overriding config keys.
    Preset {
        /// Preset name (see `preset --list`).
        name: Option<String>,
        /// Override a config key, e.g. --override eta=0.001 (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the effective config as TOML instead of running.
        #[arg(long)]
        print: bool,
        /// List available presets.
        #[arg(long)]
        list: bool,
    },
    /// Execute an oracle suite and print its reference values.
    Oracle {
        /// One of: bellman, estimators, subproblems, regression, kappa0, all.
        suite: String,
    },
    /// Run a config once per point of a parameter grid.
    Sweep {
        /// Path to the base config file.
        config: PathBuf,
        /// Grid in the form key=v1,v2,... (repeatable; grids combine as a
        /// cartesian product).
        #[arg(long = "grid", value_name = "KEY=V1,V2,...", required = true)]
        grids: Vec<String>,
    },
}

fn parse_assignment(raw: &str) -> Result<(String, String)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("expected key=value, got '{raw}'")))
}

fn execute(cli: Cli) -> Result<()> {
    harness::init_worker_pool()?;
    match cli.command {
        Command::Run { config } => {
            let config = RunConfig::load(&config)?;
            harness::run_experiment(&config)?;
        }
        Command::Preset { name, overrides, print, list } => {
            if list {
                for preset in harness::builtin_presets() {
                    println!("{}", preset.experiment);
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| Error::Config("preset name required (or --list)".into()))?;
            let mut config = harness::preset(&name)?;
            for assignment in &overrides {
                let (key, value) = parse_assignment(assignment)?;
                config.apply_override(&key, &value)?;
            }
            if print {
                print!("{}", config.to_toml()?);
                return Ok(());
            }
            harness::run_experiment(&config)?;
        }
        Command::Oracle { suite } => {
            cmdp_pd::oracle_suites::run_suite(&suite)?;
        }
        Command::Sweep { config, grids } => {
            let config = RunConfig::load(&config)?;
            let mut parsed = Vec::with_capacity(grids.len());
            for grid in &grids {
                let (key, values) = parse_assignment(grid)?;
                let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
                if values.is_empty() || values.iter().any(String::is_empty) {
                    return Err(Error::Config(format!("empty value in grid '{grid}'")));
                }
                parsed.push((key, values));
            }
            harness::run_sweep(&config, &parsed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
