//! Synthetic SLC stacks with known soil moisture.
//!
//! Each cell's pixels are independent draws from a zero-mean circular complex
//! Gaussian with covariance
//!
//! ```text
//! Gamma_nm = gamma_dry(t_nm) * gamma_model(k_n, k_m) * exp(j arg I_nm)
//! ```
//!
//! i.e. the exponential dry decorrelation times the analytical soil model,
//! plus optional additive noise and amplitude-shifted "contaminated" pixels
//! for exercising the homogeneity test.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::{Complex32, Complex64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coherence_model::DecorrelationFit;
use crate::dielectric::{RadarConfig, SoilTexture};
use crate::forward_model::{model_matrices, wavenumbers, ForwardError};
use crate::stack_io::{SlcStack, StackIoError};

pub const GENERATOR_NAME: &str = "ChaCha8Rng/stream-per-cell";

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("covariance of cell {0} could not be factorized")]
    FactorizationFailure(usize),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Io(#[from] StackIoError),
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
}

fn default_shift() -> f64 {
    3.0
}

fn default_incidence() -> f64 {
    38.0
}

/// Synthetic scene description. Cells are laid out on a
/// `cell_grid[0] x cell_grid[1]` grid, each `window[0] x window[1]` pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub dates: Vec<NaiveDate>,
    /// One moisture vector (length p) per cell, in cell-major order.
    pub truth_ssm: Vec<Vec<f64>>,
    pub cell_grid: [usize; 2],
    pub window: [usize; 2],
    #[serde(default)]
    pub texture: SoilTexture,
    #[serde(default)]
    pub radar: RadarConfig,
    pub gamma0: f64,
    pub gamma_p: f64,
    pub tau: f64,
    /// Additive circular noise power relative to unit signal power.
    #[serde(default)]
    pub noise_floor: f64,
    /// Pixels per cell whose amplitude is shifted off the homogeneous
    /// distribution.
    #[serde(default)]
    pub contaminated_per_cell: usize,
    /// Amplitude shift of contaminated pixels, in standard deviations.
    #[serde(default = "default_shift")]
    pub contamination_shift_sigma: f64,
    #[serde(default = "default_incidence")]
    pub incidence_angle_deg: f64,
    /// Days with rain, written to the companion meteo file.
    #[serde(default)]
    pub rain_dates: Vec<NaiveDate>,
    pub seed: u64,
}

impl Scenario {
    pub fn p(&self) -> usize {
        self.dates.len()
    }

    pub fn pixels_per_cell(&self) -> usize {
        self.window[0] * self.window[1]
    }

    pub fn cells(&self) -> usize {
        self.cell_grid[0] * self.cell_grid[1]
    }

    pub fn dry_model(&self) -> DecorrelationFit {
        DecorrelationFit {
            gamma0: self.gamma0,
            gamma_p: self.gamma_p,
            tau: self.tau,
            residual_rms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidScenario(m));
        let p = self.p();
        if p < 2 {
            return bad("need at least two dates".into());
        }
        if self.dates.windows(2).any(|w| w[1] <= w[0]) {
            return bad("dates must be strictly increasing".into());
        }
        if self.truth_ssm.len() != self.cells() {
            return bad(format!(
                "{} truth vectors for {} cells",
                self.truth_ssm.len(),
                self.cells()
            ));
        }
        for (i, v) in self.truth_ssm.iter().enumerate() {
            if v.len() != p {
                return bad(format!("truth vector {i} has length {} (p = {p})", v.len()));
            }
            if v.iter().any(|s| !(0.005..=0.5).contains(s)) {
                return bad(format!("truth vector {i} leaves [0.005, 0.5]"));
            }
        }
        if self.pixels_per_cell() < 2 {
            return bad("need at least 2 pixels per cell".into());
        }
        if self.contaminated_per_cell >= self.pixels_per_cell() {
            return bad("contaminated pixels must leave the reference pixel clean".into());
        }
        if !(0.0 <= self.gamma_p && self.gamma_p <= self.gamma0 && self.gamma0 <= 1.0) {
            return bad("need 0 <= gamma_p <= gamma0 <= 1".into());
        }
        if !(self.tau > 0.0) || !(self.noise_floor >= 0.0) {
            return bad("tau must be positive and noise_floor non-negative".into());
        }
        self.texture
            .validate()
            .map_err(|e| SimulationError::InvalidScenario(e.to_string()))?;
        Ok(())
    }
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario, SimulationError> {
    let bytes = fs::read(path.as_ref()).map_err(|e| SimulationError::Io(e.into()))?;
    let s: Scenario = serde_json::from_slice(&bytes)?;
    s.validate()?;
    Ok(s)
}

/// Target covariance of one cell, projected onto the PSD cone if rounding
/// made it indefinite.
pub fn target_coherence(scenario: &Scenario, cell: usize) -> Result<DMatrix<Complex64>, SimulationError> {
    let p = scenario.p();
    let truth = &scenario.truth_ssm[cell];
    let k = wavenumbers(truth, &scenario.texture, &scenario.radar)?;
    let (values, gamma_model) = model_matrices(&k)?;
    let dry = scenario.dry_model();
    let mut gamma = DMatrix::from_fn(p, p, |n, m| {
        if n == m {
            return Complex64::new(1.0, 0.0);
        }
        let t = (scenario.dates[n] - scenario.dates[m]).num_days().abs() as f64;
        Complex64::from_polar(dry.predict(t) * gamma_model[(n, m)], values[(n, m)].arg())
    });
    for n in 0..p {
        for m in n + 1..p {
            gamma[(m, n)] = gamma[(n, m)].conj();
        }
    }

    let eig = SymmetricEigen::new(gamma.clone());
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < 0.0 {
        log::info!("cell {cell}: clamping covariance eigenvalue {min_eig:.3e} to zero");
        let clamped = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0));
        let v = &eig.eigenvectors;
        gamma = v * DMatrix::from_diagonal(&clamped) * v.adjoint();
        let scale: Vec<f64> = (0..p).map(|i| gamma[(i, i)].re.sqrt()).collect();
        gamma = DMatrix::from_fn(p, p, |n, m| {
            if n == m {
                Complex64::new(1.0, 0.0)
            } else {
                gamma[(n, m)] / (scale[n] * scale[m])
            }
        });
    }
    Ok(gamma)
}

/// Lower-triangular factor `L` with `L L^H ~= gamma`. Semidefinite matrices
/// get a growing diagonal jitter.
fn factorize(gamma: &DMatrix<Complex64>, cell: usize) -> Result<DMatrix<Complex64>, SimulationError> {
    let p = gamma.nrows();
    let mut jitter = 0.0;
    for _ in 0..8 {
        let m = gamma + DMatrix::<Complex64>::identity(p, p) * Complex64::new(jitter, 0.0);
        if let Some(ch) = Cholesky::new(m) {
            return Ok(ch.l());
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
    Err(SimulationError::FactorizationFailure(cell))
}

fn circular_normal(rng: &mut ChaCha8Rng, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

#[derive(Debug, Clone)]
pub struct SimulatedStack {
    pub stack: SlcStack,
    /// `true` for contaminated pixels, row-major over the stack grid.
    pub contaminated: Vec<bool>,
}

/// Random generator for one cell: the scenario seed selects the key, the
/// cell index the stream, so cells can be generated in any order.
pub fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

pub fn simulate_stack(scenario: &Scenario) -> Result<SimulatedStack, SimulationError> {
    use rayon::prelude::*;
    scenario.validate()?;
    let p = scenario.p();
    let [h, w] = scenario.window;
    let [grid_rows, grid_cols] = scenario.cell_grid;
    let rows = grid_rows * h;
    let cols = grid_cols * w;

    let cells: Vec<(Vec<Complex64>, Vec<bool>)> = (0..scenario.cells())
        .into_par_iter()
        .map(|cell| simulate_cell(scenario, cell))
        .collect::<Result<_, _>>()?;

    let mut pixels = vec![Complex32::new(0.0, 0.0); p * rows * cols];
    let mut contaminated = vec![false; rows * cols];
    for (cell, (samples, flags)) in cells.into_iter().enumerate() {
        let (cr, cc) = (cell / grid_cols, cell % grid_cols);
        for i in 0..h * w {
            let (r, c) = (cr * h + i / w, cc * w + i % w);
            contaminated[r * cols + c] = flags[i];
            for a in 0..p {
                let z = samples[i * p + a];
                pixels[(a * rows + r) * cols + c] = Complex32::new(z.re as f32, z.im as f32);
            }
        }
    }
    let mut stack = SlcStack::new(
        scenario.dates.clone(),
        rows,
        cols,
        pixels,
        scenario.radar.frequency_hz,
        scenario.incidence_angle_deg,
    )?;
    stack.seed = Some(scenario.seed);
    stack.generator = Some(GENERATOR_NAME.to_string());
    Ok(SimulatedStack { stack, contaminated })
}

/// Samples of one cell, pixel-major (`pixel * p + acquisition`), with the
/// contamination flag of each pixel.
fn simulate_cell(scenario: &Scenario, cell: usize) -> Result<(Vec<Complex64>, Vec<bool>), SimulationError> {
    let p = scenario.p();
    let [h, w] = scenario.window;
    let l = h * w;
    let factor = factorize(&target_coherence(scenario, cell)?, cell)?;
    let mut rng = cell_rng(scenario.seed, cell);

    let center = (h / 2) * w + w / 2;
    let mut candidates: Vec<usize> = (0..l).filter(|&i| i != center).collect();
    candidates.shuffle(&mut rng);
    let mut flags = vec![false; l];
    for &i in candidates.iter().take(scenario.contaminated_per_cell) {
        flags[i] = true;
    }
    let total_power = 1.0 + scenario.noise_floor;
    let amplitude_sigma = (total_power * (4.0 - std::f64::consts::PI) / 4.0).sqrt();
    let shift = scenario.contamination_shift_sigma * amplitude_sigma;

    let mut out = Vec::with_capacity(l * p);
    for &contaminated in &flags {
        let white = DVector::from_fn(p, |_, _| circular_normal(&mut rng, 1.0));
        let mut z = &factor * white;
        if scenario.noise_floor > 0.0 {
            for v in z.iter_mut() {
                *v += circular_normal(&mut rng, scenario.noise_floor);
            }
        }
        if contaminated {
            for v in z.iter_mut() {
                let a = v.norm();
                if a > 0.0 {
                    *v *= (a + shift) / a;
                }
            }
        }
        out.extend(z.iter());
    }
    Ok((out, flags))
}

/// Truth CSV `cell_row,cell_col,date,ssm`, cell-major then date.
pub fn write_truth(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), SimulationError> {
    let mut out = String::from("cell_row,cell_col,date,ssm\n");
    let cols = scenario.cell_grid[1];
    for (cell, truth) in scenario.truth_ssm.iter().enumerate() {
        for (date, sm) in scenario.dates.iter().zip(truth) {
            out.push_str(&format!("{},{},{},{}\n", cell / cols, cell % cols, date, sm));
        }
    }
    fs::write(path, out).map_err(|e| SimulationError::Io(e.into()))?;
    Ok(())
}

/// Daily meteo from the day before the first acquisition to the last one:
/// warm, snow free, 10 mm of rain on each `rain_dates` day.
pub fn companion_meteo(scenario: &Scenario) -> crate::stack_io::MeteoSeries {
    use crate::stack_io::{MeteoRecord, MeteoSeries};
    let first = scenario.dates[0].pred_opt().unwrap_or(scenario.dates[0]);
    let last = *scenario.dates.last().expect("validated non-empty");
    let records = first
        .iter_days()
        .take_while(|d| *d <= last)
        .map(|date| MeteoRecord {
            date,
            precipitation_mm: if scenario.rain_dates.contains(&date) { 10.0 } else { 0.0 },
            air_temperature_c: 25.0,
            snow_mm: 0.0,
        })
        .collect();
    MeteoSeries::new(records).expect("generated record is valid")
}
