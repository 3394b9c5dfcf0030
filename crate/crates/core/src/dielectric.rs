//! Soil permittivity from the Hallikainen et al. (1985) empirical polynomials
//! and the resulting complex vertical wavenumber.
//!
//! Both parts of the relative permittivity are quadratic in volumetric
//! moisture with texture-dependent coefficients:
//!
//! ```text
//! eps = (a0 + a1 S + a2 C) + (b0 + b1 S + b2 C) mv + (c0 + c1 S + c2 C) mv^2
//! ```
//!
//! The coefficients are tabulated at discrete frequencies (1.4 to 18 GHz) and
//! linearly interpolated in between. Sign convention: `eps = eps' - j eps''`
//! with `eps'' >= 0` (time dependence `exp(+j w t)`).

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const BUILTIN_TABLE: &str = include_str!("../data/hallikainen_1985.csv");

#[derive(Debug, Error, PartialEq)]
pub enum DielectricError {
    #[error("volumetric moisture {0} outside [0, 0.5]")]
    OutOfRangeMoisture(f64),
    #[error("frequency {0} Hz outside the coefficient table span")]
    FrequencyOutsideCalibration(f64),
    #[error("real permittivity {0} is not positive")]
    NonPhysicalPermittivity(f64),
    #[error("invalid texture: sand {sand}%, clay {clay}%")]
    InvalidTexture { sand: f64, clay: f64 },
    #[error("coefficient table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilTexture {
    pub sand_pct: f64,
    pub clay_pct: f64,
}

impl SoilTexture {
    pub const SANDY_LOAM: SoilTexture = SoilTexture {
        sand_pct: 51.51,
        clay_pct: 13.43,
    };
    pub const LOAM: SoilTexture = SoilTexture {
        sand_pct: 41.96,
        clay_pct: 8.53,
    };

    pub fn new(sand_pct: f64, clay_pct: f64) -> Result<Self, DielectricError> {
        let t = Self { sand_pct, clay_pct };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), DielectricError> {
        let ok = (0.0..=100.0).contains(&self.sand_pct)
            && (0.0..=100.0).contains(&self.clay_pct)
            && self.sand_pct + self.clay_pct <= 100.0;
        if ok {
            Ok(())
        } else {
            Err(DielectricError::InvalidTexture {
                sand: self.sand_pct,
                clay: self.clay_pct,
            })
        }
    }
}

impl Default for SoilTexture {
    fn default() -> Self {
        Self::SANDY_LOAM
    }
}

/// Radar parameters entering the wavenumber. `wavenumber_scale` multiplies
/// the vertical wavenumber (1.0 = plain `w sqrt(mu eps)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub frequency_hz: f64,
    #[serde(default = "unit_scale")]
    pub wavenumber_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            frequency_hz: 5.405e9,
            wavenumber_scale: 1.0,
        }
    }
}

/// Nine polynomial coefficients `[a0, a1, a2, b0, b1, b2, c0, c1, c2]`.
pub type Coefficients = [f64; 9];

#[derive(Debug, Clone, Copy, PartialEq)]
struct TableRow {
    frequency_ghz: f64,
    real: Coefficients,
    imag: Coefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    rows: Vec<TableRow>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    frequency_ghz: f64,
    part: String,
    a0: f64,
    a1: f64,
    a2: f64,
    b0: f64,
    b1: f64,
    b2: f64,
    c0: f64,
    c1: f64,
    c2: f64,
}

impl CoefficientTable {
    /// Table shipped with the crate.
    pub fn builtin() -> &'static CoefficientTable {
        static TABLE: OnceLock<CoefficientTable> = OnceLock::new();
        TABLE.get_or_init(|| CoefficientTable::from_csv(BUILTIN_TABLE.as_bytes()).expect("built-in table parses"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DielectricError> {
        let bytes = std::fs::read(path).map_err(|e| DielectricError::Table(e.to_string()))?;
        Self::from_csv(&bytes[..])
    }

    /// Parses `frequency_ghz,part,a0,a1,a2,b0,b1,b2,c0,c1,c2` with one `real`
    /// and one `imag` row per frequency.
    pub fn from_csv(reader: impl std::io::Read) -> Result<Self, DielectricError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<TableRow> = Vec::new();
        for rec in rdr.deserialize::<CsvRow>() {
            let r = rec.map_err(|e| DielectricError::Table(e.to_string()))?;
            let coeffs = [r.a0, r.a1, r.a2, r.b0, r.b1, r.b2, r.c0, r.c1, r.c2];
            let idx = match rows.iter().position(|row| row.frequency_ghz == r.frequency_ghz) {
                Some(i) => i,
                None => {
                    rows.push(TableRow {
                        frequency_ghz: r.frequency_ghz,
                        real: [f64::NAN; 9],
                        imag: [f64::NAN; 9],
                    });
                    rows.len() - 1
                }
            };
            match r.part.as_str() {
                "real" => rows[idx].real = coeffs,
                "imag" => rows[idx].imag = coeffs,
                other => return Err(DielectricError::Table(format!("unknown part `{other}`"))),
            }
        }
        if rows.is_empty() {
            return Err(DielectricError::Table("empty table".into()));
        }
        if rows.iter().any(|r| r.real.iter().chain(&r.imag).any(|v| v.is_nan())) {
            return Err(DielectricError::Table("each frequency needs real and imag rows".into()));
        }
        rows.sort_by(|a, b| a.frequency_ghz.total_cmp(&b.frequency_ghz));
        Ok(Self { rows })
    }

    pub fn frequency_span_hz(&self) -> (f64, f64) {
        (
            self.rows[0].frequency_ghz * 1e9,
            self.rows[self.rows.len() - 1].frequency_ghz * 1e9,
        )
    }

    /// Coefficients at `frequency_hz`, linearly interpolated between the
    /// bracketing table frequencies.
    pub fn coefficients(&self, frequency_hz: f64) -> Result<(Coefficients, Coefficients), DielectricError> {
        let ghz = frequency_hz / 1e9;
        let (lo, hi) = self.frequency_span_hz();
        if !(frequency_hz >= lo && frequency_hz <= hi) {
            return Err(DielectricError::FrequencyOutsideCalibration(frequency_hz));
        }
        let upper = self
            .rows
            .iter()
            .position(|r| r.frequency_ghz >= ghz)
            .expect("within span");
        let b = &self.rows[upper];
        if b.frequency_ghz == ghz || upper == 0 {
            return Ok((b.real, b.imag));
        }
        let a = &self.rows[upper - 1];
        let w = (ghz - a.frequency_ghz) / (b.frequency_ghz - a.frequency_ghz);
        let lerp =
            |x: &Coefficients, y: &Coefficients| -> Coefficients { std::array::from_fn(|i| x[i] + w * (y[i] - x[i])) };
        Ok((lerp(&a.real, &b.real), lerp(&a.imag, &b.imag)))
    }

    /// Complex relative permittivity `eps' - j eps''`. The loss term is
    /// floored at zero: some table rows carry a negative constant that would
    /// otherwise produce gain for very dry, clay-free soil.
    pub fn permittivity(
        &self,
        mv: f64,
        texture: &SoilTexture,
        frequency_hz: f64,
    ) -> Result<Complex64, DielectricError> {
        if !(0.0..=0.5).contains(&mv) {
            return Err(DielectricError::OutOfRangeMoisture(mv));
        }
        texture.validate()?;
        let (re, im) = self.coefficients(frequency_hz)?;
        let eps_real = evaluate_polynomial(&re, mv, texture);
        let eps_imag = evaluate_polynomial(&im, mv, texture).max(0.0);
        Ok(Complex64::new(eps_real, -eps_imag))
    }
}

/// `(a0 + a1 S + a2 C) + (b0 + b1 S + b2 C) mv + (c0 + c1 S + c2 C) mv^2`
pub fn evaluate_polynomial(c: &Coefficients, mv: f64, texture: &SoilTexture) -> f64 {
    let (s, cl) = (texture.sand_pct, texture.clay_pct);
    let a = c[0] + c[1] * s + c[2] * cl;
    let b = c[3] + c[4] * s + c[5] * cl;
    let q = c[6] + c[7] * s + c[8] * cl;
    a + mv * (b + mv * q)
}

/// Permittivity from the built-in coefficient table.
pub fn hallikainen_permittivity(
    mv: f64,
    texture: &SoilTexture,
    frequency_hz: f64,
) -> Result<Complex64, DielectricError> {
    CoefficientTable::builtin().permittivity(mv, texture, frequency_hz)
}

/// Vertical wavenumber `k = (w / c) sqrt(eps_r)` on the branch with
/// `Re k > 0`; for `eps = eps' - j eps''` this gives `Im k <= 0`.
pub fn wavenumber(eps_r: Complex64, frequency_hz: f64) -> Result<Complex64, DielectricError> {
    if !(eps_r.re > 0.0) {
        return Err(DielectricError::NonPhysicalPermittivity(eps_r.re));
    }
    let k0 = 2.0 * PI * frequency_hz / SPEED_OF_LIGHT;
    let mut root = eps_r.sqrt();
    if root.re < 0.0 {
        root = -root;
    }
    Ok(root * k0)
}

/// Moisture to wavenumber, including the configured scale factor.
pub fn soil_wavenumber(mv: f64, texture: &SoilTexture, radar: &RadarConfig) -> Result<Complex64, DielectricError> {
    let eps = hallikainen_permittivity(mv, texture, radar.frequency_hz)?;
    Ok(wavenumber(eps, radar.frequency_hz)? * radar.wavenumber_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: f64 = 5.405e9;

    #[test]
    fn dry_soil_reduces_to_constant_term() {
        let t = SoilTexture::LOAM;
        let (re, im) = CoefficientTable::builtin().coefficients(F).unwrap();
        let eps = hallikainen_permittivity(0.0, &t, F).unwrap();
        assert!((eps.re - (re[0] + re[1] * t.sand_pct + re[2] * t.clay_pct)).abs() < 1e-12);
        assert!((-eps.im - (im[0] + im[1] * t.sand_pct + im[2] * t.clay_pct)).abs() < 1e-12);
    }

    #[test]
    fn real_part_increases_for_loam() {
        let t = SoilTexture::LOAM;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=50 {
            let e = hallikainen_permittivity(i as f64 * 0.01, &t, F).unwrap();
            assert!(e.re > prev);
            prev = e.re;
        }
    }

    #[test]
    fn matches_hand_evaluated_polynomial_at_table_frequency() {
        // 4 GHz real row: 2.927 -0.012 -0.001 | 5.505 0.371 0.062 | 114.826 -0.389 -0.547
        let (s, c, mv) = (41.96, 8.53, 0.2);
        let a = 2.927 - 0.012 * s - 0.001 * c;
        let b = 5.505 + 0.371 * s + 0.062 * c;
        let q = 114.826 - 0.389 * s - 0.547 * c;
        let expected = a + b * mv + q * mv * mv;
        let eps = hallikainen_permittivity(mv, &SoilTexture::new(s, c).unwrap(), 4.0e9).unwrap();
        assert!((eps.re - expected).abs() < 1e-9);
        // imag row: 0.004 0.001 0.002 | 0.951 0.005 -0.010 | 16.759 0.192 0.290
        let a = 0.004 + 0.001 * s + 0.002 * c;
        let b = 0.951 + 0.005 * s - 0.010 * c;
        let q = 16.759 + 0.192 * s + 0.290 * c;
        assert!((-eps.im - (a + b * mv + q * mv * mv)).abs() < 1e-9);
    }

    #[test]
    fn continuous_across_table_frequency() {
        let t = SoilTexture::SANDY_LOAM;
        for mv in [0.01, 0.1, 0.3, 0.5] {
            let at = hallikainen_permittivity(mv, &t, 6.0e9).unwrap();
            let below = hallikainen_permittivity(mv, &t, 6.0e9 - 1e-3).unwrap();
            let above = hallikainen_permittivity(mv, &t, 6.0e9 + 1e-3).unwrap();
            assert!((at - below).norm() < 1e-9);
            assert!((at - above).norm() < 1e-9);
        }
    }

    #[test]
    fn input_validation() {
        let t = SoilTexture::LOAM;
        assert_eq!(
            hallikainen_permittivity(0.6, &t, F),
            Err(DielectricError::OutOfRangeMoisture(0.6))
        );
        assert_eq!(
            hallikainen_permittivity(0.1, &t, 35e9),
            Err(DielectricError::FrequencyOutsideCalibration(35e9))
        );
        assert!(SoilTexture::new(70.0, 40.0).is_err());
        assert!(SoilTexture::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn vacuum_wavenumber() {
        let k = wavenumber(Complex64::new(1.0, 0.0), F).unwrap();
        assert!((k.re - 2.0 * PI * F / SPEED_OF_LIGHT).abs() < 1e-12);
        assert!((k.re - 113.28).abs() < 0.005);
        assert_eq!(k.im, 0.0);
        let k4 = wavenumber(Complex64::new(4.0, 0.0), F).unwrap();
        assert!((k4.re - 2.0 * k.re).abs() < 1e-12);
    }

    #[test]
    fn lossy_wavenumber_decays() {
        let k0 = 2.0 * PI * F / SPEED_OF_LIGHT;
        for (re, im) in [(3.0, 0.1), (20.0, 5.0), (0.5, 4.0), (12.0, 1e-6)] {
            let eps = Complex64::new(re, -im);
            let k = wavenumber(eps, F).unwrap();
            assert!(k.re > 0.0 && k.im < 0.0);
            assert!((k.norm_sqr() - k0 * k0 * eps.norm()).abs() < 1e-9 * k.norm_sqr());
        }
        assert_eq!(
            wavenumber(Complex64::new(-1.0, -0.5), F),
            Err(DielectricError::NonPhysicalPermittivity(-1.0))
        );
    }

    #[test]
    fn wavenumber_monotone_in_moisture() {
        let radar = RadarConfig::default();
        let mut prev = 0.0;
        for i in 0..=50 {
            let k = soil_wavenumber(i as f64 * 0.01, &SoilTexture::LOAM, &radar).unwrap();
            assert!(k.re > prev);
            prev = k.re;
        }
    }

    #[test]
    fn custom_table_roundtrip() {
        let t = CoefficientTable::from_csv(BUILTIN_TABLE.as_bytes()).unwrap();
        assert_eq!(&t, CoefficientTable::builtin());
        assert_eq!(t.frequency_span_hz(), (1.4e9, 18e9));
        let missing_imag = "frequency_ghz,part,a0,a1,a2,b0,b1,b2,c0,c1,c2\n4.0,real,1,0,0,0,0,0,0,0,0\n";
        assert!(CoefficientTable::from_csv(missing_imag.as_bytes()).is_err());
    }
}
