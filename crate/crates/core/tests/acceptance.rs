//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{config_for, round_trip_scenario, score};
use sarsm::coherence_model::{fit_dry_decorrelation, DecorrelationFit, FitBounds};
use sarsm::config::Config;
use sarsm::dielectric::{hallikainen_permittivity, soil_wavenumber, RadarConfig, SoilTexture};
use sarsm::dryness::select_ordering_and_dry_set;
use sarsm::ds_formation::{closures_from_phase, coherence_matrix, observables};
use sarsm::forward_model::{interferometric_value, model_coherence_phase, predict_observables, wavenumbers};
use sarsm::inversion::{cost, initialize_ssm, InversionProblem};
use sarsm::phase::{triplets, wrap};
use sarsm::pipeline::{process, run_pipeline, CellStatus};
use sarsm::simulator::{companion_meteo, simulate_stack};
use sarsm::stack_io::{write_meteo, write_slc_stack};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let s = round_trip_scenario(20, [2, 2], [10, 20], 1);
    let sim = simulate_stack(&s).unwrap();
    let out = process(&config_for(&s), &sim.stack, &companion_meteo(&s)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let scores = score(&s, &out);
    let cells_ok = scores.iter().all(|c| c.rmse < 0.03 && c.r > 0.9);
    let per_cell: Vec<String> = scores
        .iter()
        .map(|c| format!("rmse {:.4} r {:.3}", c.rmse, c.r))
        .collect();
    outcome(
        cells_ok && elapsed < 60.0,
        format!(
            "[{}], {:.1} s (need rmse < 0.03, r > 0.9 per cell, < 60 s)",
            per_cell.join("; "),
            elapsed
        ),
    )
}

fn noisy_round_trip() -> Outcome {
    let mut rmses = Vec::new();
    for seed in 0..20 {
        let mut s = round_trip_scenario(20, [2, 2], [10, 20], 100 + seed);
        s.noise_floor = 0.1;
        let sim = simulate_stack(&s).unwrap();
        let out = process(&config_for(&s), &sim.stack, &companion_meteo(&s)).unwrap();
        let scores = score(&s, &out);
        // pooled over the cells of one run
        let mse = scores.iter().map(|c| c.rmse * c.rmse).sum::<f64>() / scores.len() as f64;
        rmses.push(mse.sqrt());
    }
    let good = rmses.iter().filter(|&&r| r < 0.05).count();
    let mut sorted = rmses.clone();
    sorted.sort_by(f64::total_cmp);
    outcome(
        good >= 18,
        format!(
            "{good}/20 runs with rmse < 0.05 (need >= 18); median rmse {:.4}",
            sorted[sorted.len() / 2]
        ),
    )
}

fn coherence_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9001);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(2..=8);
        let l = rng.random_range(1..=64);
        let z = DMatrix::from_fn(p, l, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let c = coherence_matrix(&z).unwrap();
        for n in 0..p {
            for m in 0..p {
                let mut num = Complex64::new(0.0, 0.0);
                let (mut pn, mut pm) = (0.0, 0.0);
                for i in 0..l {
                    num += z[(n, i)] * z[(m, i)].conj();
                    pn += z[(n, i)].norm_sqr();
                    pm += z[(m, i)].norm_sqr();
                }
                worst = worst.max((c[(n, m)] - num / (pn * pm).sqrt()).norm());
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max deviation {worst:.2e} over 100 instances (need <= 1e-12)"),
    )
}

fn fit_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9002);
    let (mut worst_param, mut worst_rms): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let gamma0 = rng.random_range(0.5..1.0);
        let truth = DecorrelationFit {
            gamma0,
            gamma_p: gamma0 * rng.random_range(0.1..0.8),
            tau: rng.random_range(5.0..80.0),
            residual_rms: 0.0,
        };
        let pairs: Vec<(f64, f64)> = (1..=30)
            .map(|i| (6.0 * i as f64, truth.predict(6.0 * i as f64)))
            .collect();
        let fit = fit_dry_decorrelation(&pairs, &FitBounds::default()).unwrap();
        worst_param = worst_param
            .max((fit.gamma0 - truth.gamma0).abs())
            .max((fit.gamma_p - truth.gamma_p).abs())
            .max((fit.tau - truth.tau).abs() / truth.tau);
        worst_rms = worst_rms.max(fit.residual_rms);
    }
    outcome(
        worst_param <= 1e-6 && worst_rms < 1e-6,
        format!("max parameter error {worst_param:.2e}, max residual rms {worst_rms:.2e} (need <= 1e-6, < 1e-6)"),
    )
}

fn model_identities() -> Outcome {
    let radar = RadarConfig::default();
    let texture = SoilTexture::LOAM;
    let mut rng = ChaCha8Rng::seed_from_u64(9003);

    let mut equal_dev: f64 = 0.0;
    for i in 0..50 {
        let mv = 0.005 + 0.01 * i as f64;
        let k = soil_wavenumber(mv, &texture, &radar).unwrap();
        let (g, ph) = model_coherence_phase(k, k).unwrap();
        equal_dev = equal_dev.max((g - 1.0).abs()).max(ph.abs());
    }

    let mut rank_one: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(3..=8);
        let v: Vec<Complex64> = (0..p)
            .map(|_| Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-3.1..3.1)))
            .collect();
        let z = DMatrix::from_fn(p, 1, |n, _| v[n]);
        let c = coherence_matrix(&z).unwrap();
        let obs = observables(&c, &z);
        let from_phase = closures_from_phase(&obs.phase);
        for cl in obs.closures.iter().chain(&from_phase) {
            rank_one = rank_one.max(cl.value.abs());
        }
    }

    let mut product_dev: f64 = 0.0;
    for _ in 0..100 {
        let p = 4;
        let sm: Vec<f64> = (0..p).map(|_| rng.random_range(0.005..0.5)).collect();
        let k = wavenumbers(&sm, &texture, &radar).unwrap();
        let model = predict_observables(&sm, &texture, &radar).unwrap();
        for (cl, (n, m, kk)) in model.closures_model.iter().zip(triplets(p)) {
            let prod = interferometric_value(k[n], k[m]).unwrap()
                * interferometric_value(k[m], k[kk]).unwrap()
                * interferometric_value(k[kk], k[n]).unwrap();
            product_dev = product_dev.max(wrap(cl.value - prod.arg()).abs());
        }
    }
    outcome(
        equal_dev <= 1e-12 && rank_one <= 1e-12 && product_dev <= 1e-12,
        format!(
            "equal-moisture {equal_dev:.2e}, rank-one closures {rank_one:.2e}, triple product {product_dev:.2e} (need <= 1e-12)"
        ),
    )
}

/// Loop-per-triplet evaluation recomputing each model value directly.
fn naive_cost(sm: &[f64], pr: &InversionProblem) -> f64 {
    let k: Vec<Complex64> = sm
        .iter()
        .map(|&v| soil_wavenumber(v, &pr.texture, &pr.radar).unwrap())
        .collect();
    let i = |a: usize, b: usize| Complex64::new(1.0, 0.0) / (Complex64::new(0.0, 2.0) * (k[a] - k[b].conj()));
    let gm = |a: usize, b: usize| i(a, b).norm() / (i(a, a).re * i(b, b).re).sqrt();
    let p = sm.len();
    let mut total = 0.0;
    let mut idx = 0;
    for n in 0..p {
        for m in n + 1..p {
            for kk in m + 1..p {
                let prod = i(n, m) * i(m, kk) * i(kk, n);
                let mut d = pr.closures_obs[idx].value - prod.im.atan2(prod.re);
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d <= -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                let g = &pr.gamma_sm;
                let s = (g[(n, m)] - gm(n, m)).abs() + (g[(m, kk)] - gm(m, kk)).abs() + (g[(n, kk)] - gm(n, kk)).abs();
                total += d * d + s * s;
                idx += 1;
            }
        }
    }
    total
}

fn problem_from(truth: &[f64]) -> InversionProblem {
    let texture = SoilTexture::LOAM;
    let radar = RadarConfig::default();
    let obs = predict_observables(truth, &texture, &radar).unwrap();
    let mut ordering: Vec<usize> = (0..truth.len()).collect();
    ordering.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]));
    InversionProblem {
        gamma_sm: obs.gamma_model,
        closures_obs: obs.closures_model,
        texture,
        radar,
        driest_index: ordering[0],
        dry_indices: ordering[..2].to_vec(),
        ordering,
        sm_dry: 0.03,
        lower: 0.005,
        upper: 0.5,
    }
}

fn cost_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9004);
    let (mut worst_oracle, mut worst_zero): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let truth: Vec<f64> = (0..5).map(|_| rng.random_range(0.005..0.5)).collect();
        let mut pr = problem_from(&truth);
        worst_zero = worst_zero.max(cost(&truth, &pr).unwrap());
        for c in &mut pr.closures_obs {
            c.value = wrap(c.value + rng.random_range(-1.5..1.5));
        }
        for n in 0..5 {
            for m in n + 1..5 {
                let v = (pr.gamma_sm[(n, m)] + rng.random_range(-0.2..0.2)).clamp(0.01, 1.0);
                pr.gamma_sm[(n, m)] = v;
                pr.gamma_sm[(m, n)] = v;
            }
        }
        let sm: Vec<f64> = (0..5).map(|_| rng.random_range(0.005..0.5)).collect();
        worst_oracle = worst_oracle.max((cost(&sm, &pr).unwrap() - naive_cost(&sm, &pr)).abs());
    }
    outcome(
        worst_oracle <= 1e-10 && worst_zero <= 1e-12,
        format!("oracle deviation {worst_oracle:.2e} (need <= 1e-10), cost at truth {worst_zero:.2e} (need <= 1e-12)"),
    )
}

fn initializer_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9005);
    let mut violations = 0;
    for _ in 0..1000 {
        let p = rng.random_range(2..30);
        let mut g = DMatrix::from_fn(p, p, |_, _| rng.random_range(0.01..1.0));
        g = (&g + g.transpose()) * 0.5;
        g.fill_diagonal(1.0);
        let mut ordering: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            ordering.swap(i, rng.random_range(0..=i));
        }
        let sm = initialize_ssm(&g, &ordering, 0.03, 0.005, 0.5);
        if sm[ordering[0]] != 0.03 || ordering.windows(2).any(|w| sm[w[1]] < sm[w[0]]) {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over 1000 random inputs"),
    )
}

fn ordering_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9006);
    let mut exact = 0;
    for _ in 0..100 {
        let p = rng.random_range(5..25);
        let mut truth: Vec<f64> = Vec::new();
        while truth.len() < p {
            let v = rng.random_range(0.03..0.35);
            if truth.iter().all(|t: &f64| (t - v).abs() > 1e-3) {
                truth.push(v);
            }
        }
        let rate = rng.random_range(2.0..20.0);
        let gamma = DMatrix::from_fn(p, p, |n, m| (-rate * (truth[n] - truth[m]).abs()).exp());
        let mut expected: Vec<usize> = (0..p).collect();
        expected.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]));
        let analysis = select_ordering_and_dry_set(&gamma, &truth, expected[0], 0.3).unwrap();
        exact += (analysis.ordering == expected) as usize;
    }

    let (mut hit, mut total, mut worst) = (0usize, 0usize, 1.0f64);
    for seed in 0..100 {
        let s = round_trip_scenario(20, [1, 1], [10, 20], 5000 + seed);
        let sim = simulate_stack(&s).unwrap();
        let out = process(&config_for(&s), &sim.stack, &companion_meteo(&s)).unwrap();
        let truth = &s.truth_ssm[0];
        let mut by_truth: Vec<usize> = (0..truth.len()).collect();
        by_truth.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]));
        if let CellStatus::Inverted { dryness, .. } = &out.cells[0].status {
            let true_dry = &by_truth[..dryness.dry_indices.len()];
            let common = dryness.dry_indices.iter().filter(|i| true_dry.contains(i)).count();
            hit += common;
            total += true_dry.len();
            worst = worst.min(common as f64 / true_dry.len() as f64);
        } else {
            total += 6;
            worst = 0.0;
        }
    }
    let overlap = hit as f64 / total as f64;
    outcome(
        exact == 100 && overlap >= 0.8,
        format!(
            "monotone kernels exact {exact}/100; dry-set overlap {:.1}% over 100 runs, worst run {:.0}% (need 100/100, >= 80%)",
            100.0 * overlap,
            100.0 * worst
        ),
    )
}

fn dielectric_discipline() -> Outcome {
    let radar = RadarConfig::default();
    let mut moistures = vec![0.005];
    moistures.extend((1..=50).map(|i| i as f64 / 100.0));
    let (mut evaluated, mut bad) = (0usize, 0usize);
    for sand in 0..=100 {
        for clay in 0..=(100 - sand) {
            let texture = SoilTexture::new(sand as f64, clay as f64).unwrap();
            for &mv in &moistures {
                evaluated += 1;
                match soil_wavenumber(mv, &texture, &radar) {
                    Ok(k) if k.re > 0.0 && k.im <= 0.0 => {}
                    _ => bad += 1,
                }
            }
        }
    }
    let mut increasing = true;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=100 {
        let mv = 0.005 * i as f64;
        let eps = hallikainen_permittivity(mv, &SoilTexture::LOAM, radar.frequency_hz).unwrap();
        increasing &= eps.re > prev;
        prev = eps.re;
    }
    outcome(
        bad == 0 && increasing,
        format!("{bad} violations over {evaluated} (mv, texture) points; loam eps' strictly increasing: {increasing}"),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let s = round_trip_scenario(20, [2, 2], [10, 20], 77);
    let sim = simulate_stack(&s).unwrap();
    write_slc_stack(&sim.stack, tmp.path().join("stack")).unwrap();
    write_meteo(&companion_meteo(&s), tmp.path().join("meteo.csv")).unwrap();
    let json = r#"{"stack_dir": "stack", "meteo_csv": "meteo.csv", "grid_size_pixels": [10, 20], "seed": 77, "out_dir": "out"}"#;
    let mut outputs = Vec::new();
    for (run, workers) in [(0, 1), (1, 8), (2, 8)] {
        let mut loaded = Config::from_json(json.as_bytes(), tmp.path()).unwrap();
        loaded.config.workers = Some(workers);
        loaded.config.out_dir = tmp.path().join(format!("out{run}"));
        run_pipeline(&loaded).unwrap();
        outputs.push(read_dir_bytes(&loaded.config.out_dir));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same && outputs[0].len() == 3,
        format!(
            "{} files compared across workers 1, 8, 8: identical = {same}",
            outputs[0].len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("round-trip inversion (noiseless)", round_trip),
        ("round-trip inversion (10 dB SNR)", noisy_round_trip),
        ("coherence matrix oracle", coherence_oracle),
        ("dry decorrelation fit recovery", fit_recovery),
        ("interferometric model identities", model_identities),
        ("cost function oracle", cost_oracle),
        ("initializer monotonicity", initializer_property),
        ("ordering recovery", ordering_recovery),
        ("dielectric discipline", dielectric_discipline),
        ("determinism across worker counts", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = check();
        failed += !result.pass as usize;
        println!(
            "{} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
