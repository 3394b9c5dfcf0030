//! Analytical interferometric model for a homogeneous lossy soil half-space:
//! `I_nm = 1 / (2j (k_n - conj(k_m)))` with `k` the vertical wavenumber of
//! the soil at each acquisition.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::dielectric::{soil_wavenumber, DielectricError, RadarConfig, SoilTexture};
use crate::ds_formation::Closure;
use crate::phase::{triplets, wrap};

#[derive(Debug, Error, PartialEq)]
pub enum ForwardError {
    #[error("singular wavenumber pair (lossless and equal)")]
    SingularPair,
    #[error(transparent)]
    Dielectric(#[from] DielectricError),
}

const J: Complex64 = Complex64::new(0.0, 1.0);

pub fn interferometric_value(k_n: Complex64, k_m: Complex64) -> Result<Complex64, ForwardError> {
    let denom = 2.0 * J * (k_n - k_m.conj());
    if denom == Complex64::ZERO {
        return Err(ForwardError::SingularPair);
    }
    Ok(denom.inv())
}

/// Self-term `I_nn = -1 / (4 Im k_n)`, real and positive for lossy soil.
fn self_term(k: Complex64) -> Result<f64, ForwardError> {
    if k.im >= 0.0 {
        return Err(ForwardError::SingularPair);
    }
    Ok(-0.25 / k.im)
}

/// Model coherence magnitude `|I_nm| / sqrt(I_nn I_mm)` and phase `arg I_nm`.
pub fn model_coherence_phase(k_n: Complex64, k_m: Complex64) -> Result<(f64, f64), ForwardError> {
    let i_nm = interferometric_value(k_n, k_m)?;
    let norm = (self_term(k_n)? * self_term(k_m)?).sqrt();
    Ok(((i_nm.norm() / norm).min(1.0), wrap(i_nm.arg())))
}

/// Model predictions for one moisture vector.
#[derive(Debug, Clone)]
pub struct ModelObservables {
    /// Un-normalized interferometric values `I_nm`.
    pub values: DMatrix<Complex64>,
    pub gamma_model: DMatrix<f64>,
    pub phase_model: DMatrix<f64>,
    pub closures_model: Vec<Closure>,
}

pub fn wavenumbers(sm: &[f64], texture: &SoilTexture, radar: &RadarConfig) -> Result<Vec<Complex64>, ForwardError> {
    sm.iter()
        .map(|&mv| soil_wavenumber(mv, texture, radar).map_err(ForwardError::from))
        .collect()
}

/// `I_nm` for every pair, plus the model coherence matrix.
pub fn model_matrices(k: &[Complex64]) -> Result<(DMatrix<Complex64>, DMatrix<f64>), ForwardError> {
    let p = k.len();
    let selfs: Vec<f64> = k.iter().map(|&kn| self_term(kn)).collect::<Result<_, _>>()?;
    let mut values = DMatrix::zeros(p, p);
    let mut gamma = DMatrix::from_element(p, p, 1.0);
    for n in 0..p {
        values[(n, n)] = Complex64::new(selfs[n], 0.0);
        for m in n + 1..p {
            let v = interferometric_value(k[n], k[m])?;
            values[(n, m)] = v;
            values[(m, n)] = v.conj();
            let g = (v.norm() / (selfs[n] * selfs[m]).sqrt()).min(1.0);
            gamma[(n, m)] = g;
            gamma[(m, n)] = g;
        }
    }
    Ok((values, gamma))
}

pub fn predict_observables(
    sm: &[f64],
    texture: &SoilTexture,
    radar: &RadarConfig,
) -> Result<ModelObservables, ForwardError> {
    let k = wavenumbers(sm, texture, radar)?;
    let (values, gamma_model) = model_matrices(&k)?;
    let p = sm.len();
    let phase_model = DMatrix::from_fn(p, p, |n, m| if n == m { 0.0 } else { values[(n, m)].arg() });
    let closures_model = triplets(p)
        .map(|(n, m, kk)| Closure {
            n,
            m,
            k: kk,
            value: wrap((values[(n, m)] * values[(m, kk)] * values[(kk, n)]).arg()),
        })
        .collect();
    Ok(ModelObservables {
        values,
        gamma_model,
        phase_model,
        closures_model,
    })
}
