use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveTime;
use clap::{Parser, Subcommand};

use sarsm::config::Config;
use sarsm::metrics::{align, summarize};
use sarsm::pipeline::{run_pipeline, PipelineError};
use sarsm::simulator::{companion_meteo, read_scenario, simulate_stack, write_truth, SimulationError};
use sarsm::stack_io::{read_reference_ssm, read_ssm_grid, write_meteo, write_slc_stack};

#[derive(Parser)]
#[command(
    name = "sarsm",
    version,
    about = "Surface soil moisture from InSAR coherence and phase closures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full chain as described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads, overriding the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic stack, truth table and meteo series from a scenario.
    Simulate { scenario: PathBuf, out_dir: PathBuf },
    /// Compare one cell of an SSM grid with a reference series; prints JSON.
    Validate {
        estimates: PathBuf,
        reference: PathBuf,
        /// UTC time of day of the acquisitions.
        #[arg(long, default_value = "14:30")]
        acquisition_time: String,
        /// Cell as `row,col`.
        #[arg(long, default_value = "0,0")]
        cell: String,
        #[arg(long, default_value_t = 12.0)]
        max_gap_hours: f64,
    },
}

/// Error paired with the process status it maps to.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<(u8, E)> for Failure {
    fn from((code, e): (u8, E)) -> Self {
        Failure(code, e.into())
    }
}

fn run(config: PathBuf, workers: Option<usize>, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let mut loaded = Config::load(&config).map_err(|e| Failure(2, e.into()))?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure(2, anyhow!("--workers must be at least 1")));
        }
        loaded.config.workers = Some(w);
    }
    if let Some(dir) = out_dir {
        loaded.config.out_dir = dir;
    }
    let manifest = run_pipeline(&loaded).map_err(|e: PipelineError| Failure(e.exit_code() as u8, e.into()))?;
    log::info!(
        "{} of {} cells inverted; outputs in {}",
        manifest.cells_inverted,
        manifest.cells_total,
        loaded.config.out_dir.display()
    );
    Ok(())
}

fn simulate(scenario: PathBuf, out_dir: PathBuf) -> Result<(), Failure> {
    let code = |e: &SimulationError| match e {
        SimulationError::InvalidScenario(_) | SimulationError::Json(_) => 2,
        _ => 3,
    };
    let s = read_scenario(&scenario).map_err(|e| Failure(code(&e), e.into()))?;
    let sim = simulate_stack(&s).map_err(|e| Failure(code(&e), e.into()))?;
    fs::create_dir_all(&out_dir).map_err(|e| (3, e))?;
    write_slc_stack(&sim.stack, out_dir.join("stack")).map_err(|e| (3, e))?;
    write_truth(&s, out_dir.join("truth.csv")).map_err(|e| (3, e))?;
    write_meteo(&companion_meteo(&s), out_dir.join("meteo.csv")).map_err(|e| (3, e))?;
    log::info!(
        "{} contaminated pixels; wrote stack, truth.csv and meteo.csv to {}",
        sim.contaminated.iter().filter(|&&c| c).count(),
        out_dir.display()
    );
    Ok(())
}

fn validate(
    estimates: PathBuf,
    reference: PathBuf,
    acquisition_time: &str,
    cell: &str,
    max_gap_hours: f64,
) -> Result<(), Failure> {
    let time = NaiveTime::parse_from_str(acquisition_time, "%H:%M")
        .with_context(|| format!("--acquisition-time {acquisition_time:?} is not HH:MM"))
        .map_err(|e| Failure(2, e))?;
    let (row, col) = cell
        .split_once(',')
        .and_then(|(r, c)| Some((r.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)))
        .ok_or_else(|| Failure(2, anyhow!("--cell {cell:?} is not row,col")))?;
    if !(max_gap_hours >= 0.0) {
        return Err(Failure(2, anyhow!("--max-gap-hours must be non-negative")));
    }
    let grid = read_ssm_grid(&estimates).map_err(|e| (3, e))?;
    let series: Vec<_> = grid
        .iter()
        .filter(|r| (r.cell_row, r.cell_col) == (row, col))
        .map(|r| (r.date.and_time(time).and_utc(), r.ssm))
        .collect();
    if series.is_empty() {
        return Err(Failure(3, anyhow!("no estimates for cell ({row}, {col})")));
    }
    let reference = read_reference_ssm(&reference).map_err(|e| (3, e))?;
    let summary = summarize(&align(&series, &reference, max_gap_hours));
    println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| (1, e))?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            workers,
            out_dir,
        } => run(config, workers, out_dir),
        Command::Simulate { scenario, out_dir } => simulate(scenario, out_dir),
        Command::Validate {
            estimates,
            reference,
            acquisition_time,
            cell,
            max_gap_hours,
        } => validate(estimates, reference, &acquisition_time, &cell, max_gap_hours),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, e)) => {
            log::error!("{e}");
            ExitCode::from(code)
        }
    }
}
