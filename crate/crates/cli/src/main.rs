use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seeker_core::runner::{self, RunError};
use seeker_core::scenario::{load_scenario, Overrides, ScenarioError};
use seeker_core::Execution;

/// Run, tune and check extremum-seeking scenarios.
#[derive(Parser, Debug)]
#[command(name = "seeker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write `<id>.csv` and `<id>.summary.json`.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Seed for random fields.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the tuning certificate only.
    Tune { scenario: PathBuf },
    /// Re-run the monitors on a stored trajectory.
    Analyze {
        trajectory: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run every scenario in a directory.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

const PASS: u8 = 0;
const MONITOR_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;

fn is_config_error(e: &RunError) -> bool {
    matches!(e, RunError::Scenario { .. } | RunError::ScenarioInline(_))
}

fn report(e: &dyn std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn verdict(passed: bool) -> ExitCode {
    ExitCode::from(if passed { PASS } else { MONITOR_FAILURE })
}

fn load(path: &Path, overrides: &Overrides) -> Result<seeker_core::scenario::Scenario, ScenarioError> {
    load_scenario(path, overrides, Execution::default())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEEKER_LOG", "error")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, dt, t_max, out, seed } => {
            match runner::run(&scenario, &Overrides { dt, t_max, seed }, &out) {
                Ok(summary) => {
                    print_json(&summary);
                    verdict(summary.passed)
                }
                Err(e) if is_config_error(&e) => report(&e, CONFIG_ERROR),
                Err(e) => report(&e, MONITOR_FAILURE),
            }
        }
        Command::Tune { scenario } => match load(&scenario, &Overrides::default()) {
            Ok(s) => match &s.tuned {
                Some(t) => {
                    print_json(&t.certificate);
                    verdict(t.certificate.passed())
                }
                None => report(&format!("{}: no tuning preset in use", scenario.display()), CONFIG_ERROR),
            },
            Err(e) => report(&format!("{}: {e}", scenario.display()), CONFIG_ERROR),
        },
        Command::Analyze { trajectory, scenario } => {
            let s = match load(&scenario, &Overrides::default()) {
                Ok(s) => s,
                Err(e) => return report(&format!("{}: {e}", scenario.display()), CONFIG_ERROR),
            };
            let traj = match runner::read_csv(&trajectory) {
                Ok(t) => t,
                Err(e) => return report(&e, CONFIG_ERROR),
            };
            let summary = runner::analyze(&s, &traj, None);
            print_json(&summary);
            verdict(summary.passed)
        }
        Command::Batch { dir, out } => {
            let results = match runner::batch(&dir, &out, Execution::default()) {
                Ok(r) => r,
                Err(e) => return report(&e, CONFIG_ERROR),
            };
            let mut code = PASS;
            for (path, result) in &results {
                match result {
                    Ok(s) => {
                        println!("{}\t{}", if s.passed { "pass" } else { "FAIL" }, path.display());
                        if !s.passed {
                            code = code.max(MONITOR_FAILURE);
                        }
                    }
                    Err(e) => {
                        println!("error\t{}\t{e}", path.display());
                        code = code.max(if is_config_error(e) { CONFIG_ERROR } else { MONITOR_FAILURE });
                    }
                }
            }
            ExitCode::from(code)
        }
    }
}
