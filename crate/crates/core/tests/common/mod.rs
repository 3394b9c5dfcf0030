#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarsm::config::Config;
use sarsm::dielectric::{RadarConfig, SoilTexture};
use sarsm::metrics::{pearson_r, rmse, Pair};
use sarsm::pipeline::{process, CellStatus, RunOutput};
use sarsm::simulator::{companion_meteo, simulate_stack, Scenario};

pub fn dates(p: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2018, 7, 5).unwrap();
    (0..p).map(|i| d0 + Days::new(12 * i as u64)).collect()
}

/// Scene with a regional dry spell: `dry_fraction` of the dates are dry in
/// every cell (one of them at exactly 0.03), the rest are rainy with
/// moisture in `[0.08, 0.35]`.
pub fn round_trip_scenario(p: usize, cell_grid: [usize; 2], window: [usize; 2], seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let dates = dates(p);
    let n_dry = ((0.3 * p as f64) - 1e-9).ceil() as usize;
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut rng);
    let dry: Vec<usize> = idx[..n_dry].to_vec();
    let driest = dry[0];
    let cells = cell_grid[0] * cell_grid[1];
    let truth_ssm = (0..cells)
        .map(|_| {
            (0..p)
                .map(|i| {
                    if i == driest {
                        0.03
                    } else if dry.contains(&i) {
                        rng.random_range(0.03..0.035)
                    } else {
                        rng.random_range(0.08..0.35)
                    }
                })
                .collect()
        })
        .collect();
    let rain_dates = (0..p).filter(|i| !dry.contains(i)).map(|i| dates[i]).collect();
    Scenario {
        dates,
        truth_ssm,
        cell_grid,
        window,
        texture: SoilTexture::default(),
        radar: RadarConfig::default(),
        gamma0: 0.85,
        gamma_p: 0.4,
        tau: 30.0,
        noise_floor: 0.0,
        contaminated_per_cell: 0,
        contamination_shift_sigma: 3.0,
        incidence_angle_deg: 38.0,
        rain_dates,
        seed,
    }
}

pub fn config_for(scenario: &Scenario) -> Config {
    let json = format!(
        r#"{{"stack_dir": "unused", "meteo_csv": "unused", "out_dir": "unused",
            "grid_size_pixels": [{}, {}], "texture": {{"sand_pct": {}, "clay_pct": {}}}}}"#,
        scenario.window[0], scenario.window[1], scenario.texture.sand_pct, scenario.texture.clay_pct
    );
    Config::from_json(json.as_bytes(), std::path::Path::new("/"))
        .unwrap()
        .config
}

pub fn run_scenario(scenario: &Scenario) -> RunOutput {
    let sim = simulate_stack(scenario).unwrap();
    process(&config_for(scenario), &sim.stack, &companion_meteo(scenario)).unwrap()
}

pub struct CellScore {
    pub rmse: f64,
    pub r: f64,
}

/// Per-cell RMSE and correlation against the scenario truth; skipped cells
/// score as infinitely wrong.
pub fn score(scenario: &Scenario, output: &RunOutput) -> Vec<CellScore> {
    let cols = scenario.cell_grid[1];
    output
        .cells
        .iter()
        .map(|cell| match &cell.status {
            CellStatus::Inverted { result, .. } => {
                let truth = &scenario.truth_ssm[cell.cell_row * cols + cell.cell_col];
                let pairs: Vec<Pair> = result
                    .sm
                    .iter()
                    .zip(truth)
                    .zip(&scenario.dates)
                    .map(|((&e, &t), d)| Pair {
                        time: d.and_hms_opt(14, 30, 0).unwrap().and_utc(),
                        estimate: e,
                        reference: t,
                    })
                    .collect();
                CellScore {
                    rmse: rmse(&pairs).unwrap(),
                    r: pearson_r(&pairs).unwrap_or(f64::NAN),
                }
            }
            CellStatus::Skipped { .. } => CellScore {
                rmse: f64::INFINITY,
                r: f64::NAN,
            },
        })
        .collect()
}
