//! End-to-end processing of a stack into an SSM grid.
//!
//! Cells are processed in parallel, results are gathered after a barrier and
//! written in cell-major order, so outputs do not depend on the worker count.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coherence_model::{
    dry_pairs, fit_dry_decorrelation, soil_moisture_coherence, span_matrix, DecorrelationFit,
};
use crate::config::{Config, ConfigError, LoadedConfig};
use crate::dielectric::RadarConfig;
use crate::dryness::{filter_acquisitions, find_driest, select_ordering_and_dry_set, DrynessAnalysis, DrynessError};
use crate::ds_formation::{coherence_matrix, form_ds, observables, CellGrid, DsOutcome, Observables};
use crate::inversion::{invert_cell, InversionProblem, SsmResult};
use crate::stack_io::{read_meteo, read_slc_stack, write_ssm_grid, GridRecord, MeteoSeries, SlcStack, StackIoError};

pub const GRID_FILE: &str = "ssm_grid.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("input data: {0}")]
    Data(#[from] StackIoError),
    #[error("acquisition selection: {0}")]
    Dryness(#[from] DrynessError),
    #[error("stack of {rows}x{cols} pixels holds no {cell_rows}x{cell_cols} cell")]
    NoCells {
        rows: usize,
        cols: usize,
        cell_rows: usize,
        cell_cols: usize,
    },
    #[error("every cell was skipped")]
    AllCellsSkipped,
    #[error("writing outputs: {0}")]
    Output(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl PipelineError {
    /// Process exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) | PipelineError::Dryness(_) | PipelineError::NoCells { .. } => 3,
            PipelineError::AllCellsSkipped => 4,
            PipelineError::Output(_) | PipelineError::Pool(_) => 1,
        }
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Inverted {
        dryness: DrynessAnalysis,
        dry_fit: DecorrelationFit,
        result: SsmResult,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub cell_row: usize,
    pub cell_col: usize,
    /// Homogeneous pixels found (including the reference pixel).
    pub selected_pixels: usize,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub package: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub stack_seed: Option<u64>,
    pub stack_generator: Option<String>,
    pub acquisitions: usize,
    pub candidate_indices: Vec<usize>,
    pub driest_index: usize,
    pub driest_date: NaiveDate,
    pub cells_total: usize,
    pub cells_inverted: usize,
    pub cells_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dates: Vec<NaiveDate>,
    pub candidates: Vec<usize>,
    pub driest_index: usize,
    pub cells: Vec<CellReport>,
}

impl RunOutput {
    pub fn grid_records(&self) -> Vec<GridRecord> {
        let mut out = Vec::new();
        for cell in &self.cells {
            if let CellStatus::Inverted { result, .. } = &cell.status {
                for (i, (&date, &ssm)) in self.dates.iter().zip(&result.sm).enumerate() {
                    out.push(GridRecord {
                        cell_row: cell.cell_row,
                        cell_col: cell.cell_col,
                        date,
                        ssm,
                        cost: result.final_cost,
                        dry_flag: result.dry_indices.contains(&i) as u8,
                    });
                }
            }
        }
        out
    }

    pub fn inverted(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Inverted { .. }))
            .count()
    }
}

enum Formed {
    Cell { selected: usize, obs: Observables },
    Skipped { selected: usize, reason: String },
}

/// Runs the whole chain on in-memory inputs, using the current rayon pool.
pub fn process(config: &Config, stack: &SlcStack, meteo: &MeteoSeries) -> Result<RunOutput, PipelineError> {
    let [cell_h, cell_w] = config.grid_size_pixels;
    let grid = CellGrid::new(stack.rows(), stack.cols(), cell_h, cell_w);
    if grid.is_empty() {
        return Err(PipelineError::NoCells {
            rows: stack.rows(),
            cols: stack.cols(),
            cell_rows: cell_h,
            cell_cols: cell_w,
        });
    }
    let cells: Vec<(usize, usize)> = grid.cells().collect();

    // distributed scatterers and their observables
    let formed: Vec<Formed> = cells
        .par_iter()
        .map(|&(cr, cc)| {
            let window = grid.window(cr, cc);
            match form_ds(stack, cr, cc, &window, config.ks_alpha, config.l_min) {
                Ok(DsOutcome::Formed(ds)) => match coherence_matrix(&ds.z) {
                    Ok(c) => Formed::Cell {
                        selected: ds.l(),
                        obs: observables(&c, &ds.z),
                    },
                    Err(e) => Formed::Skipped {
                        selected: ds.l(),
                        reason: e.to_string(),
                    },
                },
                Ok(DsOutcome::Skipped { selected }) => Formed::Skipped {
                    selected,
                    reason: format!("{selected} homogeneous pixels, fewer than l_min = {}", config.l_min),
                },
                Err(e) => Formed::Skipped {
                    selected: 0,
                    reason: e.to_string(),
                },
            }
        })
        .collect();

    let p = stack.acquisitions();
    let mut gamma_sum = DMatrix::<f64>::zeros(p, p);
    let mut formed_count = 0usize;
    for f in &formed {
        if let Formed::Cell { obs, .. } = f {
            gamma_sum += &obs.gamma;
            formed_count += 1;
        }
    }
    if formed_count == 0 {
        return Err(PipelineError::AllCellsSkipped);
    }
    let gamma_mean = gamma_sum / formed_count as f64;

    // driest acquisition, shared by all cells
    let candidates = filter_acquisitions(meteo, stack.dates(), &config.meteo_criteria())?;
    let driest = find_driest(&gamma_mean, &candidates)?;
    log::info!(
        "{} of {} acquisitions pass the meteo filter; driest is {} ({})",
        candidates.len(),
        p,
        driest,
        stack.dates()[driest]
    );

    let radar = RadarConfig {
        frequency_hz: config.frequency_hz.unwrap_or(stack.frequency_hz),
        wavenumber_scale: config.wavenumber_scale,
    };
    let spans = span_matrix(stack.dates());
    let reports: Vec<CellReport> = cells
        .par_iter()
        .zip(formed.into_par_iter())
        .map(|(&(cell_row, cell_col), f)| {
            let (selected_pixels, status) = match f {
                Formed::Skipped { selected, reason } => (selected, CellStatus::Skipped { reason }),
                Formed::Cell { selected, obs } => {
                    let status = invert(config, &radar, &spans, driest, &obs).unwrap_or_else(|reason| {
                        log::warn!("cell ({cell_row}, {cell_col}) skipped: {reason}");
                        CellStatus::Skipped { reason }
                    });
                    (selected, status)
                }
            };
            CellReport {
                cell_row,
                cell_col,
                selected_pixels,
                status,
            }
        })
        .collect();

    let output = RunOutput {
        dates: stack.dates().to_vec(),
        candidates,
        driest_index: driest,
        cells: reports,
    };
    if output.inverted() == 0 {
        return Err(PipelineError::AllCellsSkipped);
    }
    Ok(output)
}

/// Ordering, dry-decorrelation removal and inversion for one cell.
fn invert(
    config: &Config,
    radar: &RadarConfig,
    spans: &DMatrix<f64>,
    driest: usize,
    obs: &Observables,
) -> Result<CellStatus, String> {
    let dryness =
        select_ordering_and_dry_set(&obs.gamma, &obs.power, driest, config.dry_fraction).map_err(|e| e.to_string())?;
    let pairs = dry_pairs(&obs.gamma, spans, &dryness.dry_indices);
    let dry_fit =
        fit_dry_decorrelation(&pairs, &config.fit_bounds()).map_err(|e| format!("dry decorrelation fit: {e}"))?;
    let gamma_sm = soil_moisture_coherence(&obs.gamma, &dry_fit, spans, config.gamma_floor);
    let problem = InversionProblem {
        gamma_sm,
        closures_obs: obs.closures.clone(),
        texture: config.texture,
        radar: *radar,
        driest_index: driest,
        ordering: dryness.ordering.clone(),
        dry_indices: dryness.dry_indices.clone(),
        sm_dry: config.sm_dry,
        lower: config.sm_lower,
        upper: config.sm_upper,
    };
    let result = invert_cell(&problem, &config.solver_options()).map_err(|e| format!("inversion: {e}"))?;
    Ok(CellStatus::Inverted {
        dryness,
        dry_fit,
        result,
    })
}

/// Runs `process` on a dedicated pool of `workers` threads (one per core
/// when `None`).
pub fn process_with_workers(
    config: &Config,
    stack: &SlcStack,
    meteo: &MeteoSeries,
    workers: Option<usize>,
) -> Result<RunOutput, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()?;
    pool.install(|| process(config, stack, meteo))
}

pub fn manifest(loaded: &LoadedConfig, stack: &SlcStack, output: &RunOutput) -> Manifest {
    let inverted = output.inverted();
    Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: loaded.sha256.clone(),
        seed: loaded.config.seed,
        stack_seed: stack.seed,
        stack_generator: stack.generator.clone(),
        acquisitions: stack.acquisitions(),
        candidate_indices: output.candidates.clone(),
        driest_index: output.driest_index,
        driest_date: output.dates[output.driest_index],
        cells_total: output.cells.len(),
        cells_inverted: inverted,
        cells_skipped: output.cells.len() - inverted,
    }
}

pub fn write_outputs(out_dir: &Path, manifest: &Manifest, output: &RunOutput) -> Result<(), PipelineError> {
    fs::create_dir_all(out_dir)?;
    write_ssm_grid(&output.grid_records(), out_dir.join(GRID_FILE))?;
    let mut diag = serde_json::to_string_pretty(&output.cells).map_err(std::io::Error::other)?;
    diag.push('\n');
    fs::write(out_dir.join(DIAGNOSTICS_FILE), diag)?;
    let mut man = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    man.push('\n');
    fs::write(out_dir.join(MANIFEST_FILE), man)?;
    Ok(())
}

/// Loads inputs named by the config, runs the chain and writes the grid,
/// diagnostics and manifest into `out_dir`.
pub fn run_pipeline(loaded: &LoadedConfig) -> Result<Manifest, PipelineError> {
    let config = &loaded.config;
    let stack = read_slc_stack(&config.stack_dir)?;
    let meteo = read_meteo(&config.meteo_csv)?;
    let output = process_with_workers(config, &stack, &meteo, config.workers)?;
    let manifest = manifest(loaded, &stack, &output);
    write_outputs(&config.out_dir, &manifest, &output)?;
    Ok(manifest)
}
