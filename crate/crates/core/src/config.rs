//! Run configuration: a single JSON file with every tunable of the chain.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coherence_model::FitBounds;
use crate::dielectric::SoilTexture;
use crate::dryness::MeteoCriteria;
use crate::inversion::SolverOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

mod defaults {
    pub fn ks_alpha() -> f64 {
        0.05
    }
    pub fn l_min() -> usize {
        20
    }
    pub fn dry_fraction() -> f64 {
        0.3
    }
    pub fn precip_window_hours() -> f64 {
        48.0
    }
    pub fn precip_threshold_mm() -> f64 {
        0.1
    }
    pub fn temp_min_c() -> f64 {
        0.0
    }
    pub fn sm_dry() -> f64 {
        0.03
    }
    pub fn sm_lower() -> f64 {
        0.005
    }
    pub fn sm_upper() -> f64 {
        0.5
    }
    pub fn wavenumber_scale() -> f64 {
        1.0
    }
    pub fn solver_tol() -> f64 {
        1e-6
    }
    pub fn max_iter() -> usize {
        500
    }
    pub fn fd_step() -> f64 {
        1e-6
    }
    pub fn gamma_floor() -> f64 {
        0.01
    }
    pub fn tau_min_days() -> f64 {
        1.0
    }
    pub fn tau_max_factor() -> f64 {
        10.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub stack_dir: PathBuf,
    pub meteo_csv: PathBuf,
    /// Cell size in pixels, `[rows, cols]`.
    pub grid_size_pixels: [usize; 2],
    #[serde(default = "defaults::ks_alpha")]
    pub ks_alpha: f64,
    #[serde(default = "defaults::l_min")]
    pub l_min: usize,
    #[serde(default = "defaults::dry_fraction")]
    pub dry_fraction: f64,
    #[serde(default = "defaults::precip_window_hours")]
    pub precip_window_hours: f64,
    #[serde(default = "defaults::precip_threshold_mm")]
    pub precip_threshold_mm: f64,
    #[serde(default = "defaults::temp_min_c")]
    pub temp_min_c: f64,
    #[serde(default = "defaults::sm_dry")]
    pub sm_dry: f64,
    #[serde(default = "defaults::sm_lower")]
    pub sm_lower: f64,
    #[serde(default = "defaults::sm_upper")]
    pub sm_upper: f64,
    #[serde(default)]
    pub texture: SoilTexture,
    /// Falls back to the stack header when absent.
    #[serde(default)]
    pub frequency_hz: Option<f64>,
    #[serde(default = "defaults::wavenumber_scale")]
    pub wavenumber_scale: f64,
    #[serde(default = "defaults::solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::fd_step")]
    pub fd_step: f64,
    #[serde(default = "defaults::gamma_floor")]
    pub gamma_floor: f64,
    #[serde(default = "defaults::tau_min_days")]
    pub tau_min_days: f64,
    #[serde(default = "defaults::tau_max_factor")]
    pub tau_max_factor: f64,
    /// Worker threads; absent means one per core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// A parsed config plus the digest of the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Config {
    /// Parses and validates `bytes`; relative paths are resolved against
    /// `base_dir`.
    pub fn from_json(bytes: &[u8], base_dir: &Path) -> Result<LoadedConfig, ConfigError> {
        let mut config: Config = serde_json::from_slice(bytes)?;
        for path in [&mut config.stack_dir, &mut config.meteo_csv, &mut config.out_dir] {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        config.validate()?;
        Ok(LoadedConfig {
            config,
            sha256: sha256_hex(bytes),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig, ConfigError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&bytes, base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.grid_size_pixels.contains(&0) {
            return bad("grid_size_pixels must be positive");
        }
        if !(self.ks_alpha > 0.0 && self.ks_alpha < 1.0) {
            return bad("ks_alpha must lie in (0, 1)");
        }
        if self.l_min < 2 {
            return bad("l_min must be at least 2");
        }
        if !(self.dry_fraction > 0.0 && self.dry_fraction <= 1.0) {
            return bad("dry_fraction must lie in (0, 1]");
        }
        if !(self.precip_window_hours > 0.0) || !(self.precip_threshold_mm >= 0.0) || !self.temp_min_c.is_finite() {
            return bad("meteo criteria must be finite, window positive, threshold non-negative");
        }
        if !(self.sm_lower > 0.0
            && self.sm_lower <= self.sm_dry
            && self.sm_dry <= self.sm_upper
            && self.sm_upper <= 0.5)
        {
            return bad("need 0 < sm_lower <= sm_dry <= sm_upper <= 0.5");
        }
        if self.texture.validate().is_err() {
            return bad("texture percentages must be in [0, 100] and sum to at most 100");
        }
        if let Some(f) = self.frequency_hz {
            if !(f > 0.0 && f.is_finite()) {
                return bad("frequency_hz must be positive");
            }
        }
        if !(self.wavenumber_scale > 0.0 && self.wavenumber_scale.is_finite()) {
            return bad("wavenumber_scale must be positive");
        }
        if !(self.solver_tol > 0.0) || self.max_iter == 0 || !(self.fd_step > 0.0) {
            return bad("solver_tol, max_iter and fd_step must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma_floor) {
            return bad("gamma_floor must lie in [0, 1)");
        }
        if !(self.tau_min_days > 0.0) || !(self.tau_max_factor > 0.0) {
            return bad("tau bounds must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    pub fn meteo_criteria(&self) -> MeteoCriteria {
        MeteoCriteria {
            precip_window_hours: self.precip_window_hours,
            precip_threshold_mm: self.precip_threshold_mm,
            temp_min_c: self.temp_min_c,
        }
    }

    pub fn fit_bounds(&self) -> FitBounds {
        FitBounds {
            tau_min_days: self.tau_min_days,
            tau_max_factor: self.tau_max_factor,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.max_iter,
            fd_step: self.fd_step,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"stack_dir": "stack", "meteo_csv": "/data/meteo.csv",
        "grid_size_pixels": [12, 50], "out_dir": "out"}"#;

    #[test]
    fn defaults_filled_and_paths_resolved() {
        let loaded = Config::from_json(MINIMAL.as_bytes(), Path::new("/runs")).unwrap();
        let c = loaded.config;
        assert_eq!(c.stack_dir, PathBuf::from("/runs/stack"));
        assert_eq!(c.meteo_csv, PathBuf::from("/data/meteo.csv"));
        assert_eq!(c.dry_fraction, 0.3);
        assert_eq!(c.sm_dry, 0.03);
        assert_eq!((c.sm_lower, c.sm_upper), (0.005, 0.5));
        assert_eq!(c.texture, SoilTexture::default());
        assert_eq!(c.meteo_criteria(), MeteoCriteria::default());
        assert_eq!(c.solver_options(), SolverOptions::default());
        assert_eq!(c.fit_bounds(), FitBounds::default());
        assert_eq!(loaded.sha256, sha256_hex(MINIMAL.as_bytes()));
        assert_eq!(loaded.sha256.len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = MINIMAL.replace("\"out_dir\"", "\"typo\": 1, \"out_dir\"");
        assert!(matches!(
            Config::from_json(json.as_bytes(), Path::new(".")),
            Err(ConfigError::Schema(_))
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        for patch in [
            "\"ks_alpha\": 1.5,",
            "\"sm_dry\": 0.6,",
            "\"workers\": 0,",
            "\"texture\": {\"sand_pct\": 80, \"clay_pct\": 40},",
            "\"dry_fraction\": 0,",
        ] {
            let json = MINIMAL.replacen('{', &format!("{{{patch}"), 1);
            assert!(
                matches!(
                    Config::from_json(json.as_bytes(), Path::new(".")),
                    Err(ConfigError::Invalid(_))
                ),
                "{patch}"
            );
        }
    }

    #[test]
    fn digest_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
