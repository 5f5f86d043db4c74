use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtss::env::{preset, ThetaSource, PRESET_NAMES};
use mtss::harness::{run_grid, GridConfig};
use mtss::Error;

#[derive(Parser)]
#[command(
    name = "mtss",
    version,
    about = "Meta Thompson sampling experiments for structured bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (agent, replication) cell of a config and write curve CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Check the config and print the plan without running or writing anything.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads for replications (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Parse and validate a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

const CONFIG_ERROR: u8 = 1;
const CELL_FAILURE: u8 = 2;

fn load(path: &Path) -> Result<GridConfig, ExitCode> {
    GridConfig::from_path(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })
}

fn describe(config: &GridConfig) -> String {
    let agents: Vec<&str> = config.agents.iter().map(|a| a.name()).collect();
    let scenario = config.scenario.resolve().map(|s| s.name).unwrap_or_default();
    format!(
        "scenario {scenario}, agents [{}], T = {}, {} replications, output {}",
        agents.join(", "),
        config.horizon,
        config.replications,
        config.output_dir.display()
    )
}

fn run(config: PathBuf, dry_run: bool, workers: Option<usize>) -> ExitCode {
    let cfg = match load(&config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(CONFIG_ERROR);
    }
    if dry_run {
        println!("dry run: {}", describe(&cfg));
        return ExitCode::SUCCESS;
    }
    eprintln!("running {}", describe(&cfg));
    match run_grid(&cfg, workers) {
        Ok(report) => {
            for p in &report.csv_paths {
                println!("{}", p.display());
            }
            println!("{}", report.metadata_path.display());
            if report.failed_cells > 0 {
                eprintln!(
                    "{} cell(s) had failed replications; see metadata.json",
                    report.failed_cells
                );
                ExitCode::from(CELL_FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn list_presets() {
    println!(
        "{:<18} {:<11} {:>5} {:>3} {:>3}  model",
        "name", "problem", "N", "K", "d"
    );
    for name in PRESET_NAMES {
        let s = preset(name).expect("listed preset exists");
        let model = match s.theta_source {
            ThetaSource::Lmm { sigma1 } => format!("lmm sigma1={sigma1}"),
            ThetaSource::BetaLogistic { psi, link } => format!("beta psi={psi} link={link:?}").to_lowercase(),
            ThetaSource::MisspecifiedCos { lambda, sigma1 } => format!("cos-mixture lambda={lambda} sigma1={sigma1}"),
        };
        let rotation = s
            .cold_start
            .map(|c| format!(", rotate {} every {}", c.delta_n, c.period))
            .unwrap_or_default();
        println!(
            "{:<18} {:<11} {:>5} {:>3} {:>3}  {model}{rotation}",
            name,
            format!("{:?}", s.problem).to_lowercase(),
            s.n_items,
            s.k,
            s.dim
        );
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            dry_run,
            workers,
        } => run(config, dry_run, workers),
        Command::Presets {
            action: PresetAction::List,
        } => {
            list_presets();
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("ok: {}", describe(&cfg));
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
    }
}
