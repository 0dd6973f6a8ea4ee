use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autoscale_sim::runner::{self, RunError};
use autoscale_sim::scenario::{load_scenario, ControllerKind, ScenarioConfig};

#[derive(Parser)]
#[command(name = "autoscale-sim", version, about = "Discrete-event autoscaling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write events.log, decisions.log, metrics.csv, summary.txt.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare two finished run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run scenarios across seeds concurrently.
    Sweep {
        /// May be given several times.
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Seed list such as `1-5` or `1,3,7`; defaults to the file's seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerKind>,
    },
    /// Load and validate a scenario, printing the resolved configuration.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_controller)]
    controller: Option<ControllerKind>,
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    ControllerKind::parse(s).ok_or_else(|| format!("unknown controller `{s}` (expected mas_h2 or hpa_ca)"))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("bad seed list `{s}`");
    if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn load(path: &PathBuf, seed: Option<u64>, controller: Option<ControllerKind>) -> Result<ScenarioConfig, RunError> {
    let mut config = load_scenario(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(controller) = controller {
        config.controller = controller;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, overrides } => {
            load(&scenario, overrides.seed, overrides.controller).and_then(|config| {
                let output = runner::run_to_dir(&config, &out)?;
                print!("{}", output.summary_text());
                Ok(())
            })
        }
        Command::Compare { run_a, run_b, out } => runner::compare_dirs(&run_a, &run_b, &out).map(|c| {
            print!("{}", c.render_text());
        }),
        Command::Sweep { scenario, out, seeds, controller } => (|| {
            let seeds = seeds.as_deref().map(parse_seeds).transpose().map_err(RunError::Mismatch)?;
            let mut configs = Vec::new();
            for path in &scenario {
                let base = load(path, None, controller)?;
                match &seeds {
                    None => configs.push(base),
                    Some(list) => configs.extend(list.iter().map(|s| ScenarioConfig { seed: *s, ..base.clone() })),
                }
            }
            for (dir, s) in runner::sweep(&configs, &out)? {
                println!(
                    "{}: mean util {:.3}, p95 util {:.3}, max replicas {}, downtime {} s",
                    dir.display(),
                    s.mean_utilization,
                    s.p95_utilization,
                    s.max_running_replicas,
                    s.migration_downtime_seconds
                );
            }
            Ok(())
        })(),
        Command::Validate { scenario, overrides } => load(&scenario, overrides.seed, overrides.controller).map(|c| {
            print!("{}", c.describe());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
