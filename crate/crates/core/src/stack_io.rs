//! File formats: the SLC stack (JSON header + raw complex64 payload), daily
//! meteorological records, reference soil moisture series and the output
//! SSM grid.
//!
//! Stack layout on disk:
//!
//! ```text
//! <dir>/stack.json   {"p":..,"rows":..,"cols":..,"dates":[..],"frequency_hz":..,"incidence_angle_deg":..}
//! <dir>/stack.bin    p*rows*cols (re, im) pairs, f32 little-endian,
//!                    acquisition-major then row-major
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER_FILE: &str = "stack.json";
pub const PAYLOAD_FILE: &str = "stack.bin";
pub const DEFAULT_FREQUENCY_HZ: f64 = 5.405e9;

#[derive(Debug, Error)]
pub enum StackIoError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("payload holds {found} bytes but header implies {expected}")]
    HeaderPayloadMismatch { expected: u64, found: u64 },
    #[error("dates not strictly increasing at index {0}")]
    NonMonotonicDates(usize),
    #[error("non-finite sample at flat index {0}")]
    NonFiniteSample(usize),
    #[error("invalid stack header: {0}")]
    Header(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: u64, message: String },
    #[error("negative precipitation at row {0}")]
    NegativePrecip(u64),
    #[error("negative snow depth at row {0}")]
    NegativeSnow(u64),
    #[error("soil moisture {value} outside [0, 1] at row {row}")]
    OutOfRangeSsm { row: u64, value: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, StackIoError>;

/// A co-registered stack of `p` complex images on a `rows x cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlcStack {
    dates: Vec<NaiveDate>,
    rows: usize,
    cols: usize,
    pixels: Vec<Complex32>,
    pub frequency_hz: f64,
    pub incidence_angle_deg: f64,
    /// Provenance of simulated stacks.
    pub seed: Option<u64>,
    pub generator: Option<String>,
}

impl SlcStack {
    pub fn new(
        dates: Vec<NaiveDate>,
        rows: usize,
        cols: usize,
        pixels: Vec<Complex32>,
        frequency_hz: f64,
        incidence_angle_deg: f64,
    ) -> Result<Self> {
        check_increasing(&dates)?;
        let expected = dates.len() * rows * cols;
        if pixels.len() != expected {
            return Err(StackIoError::HeaderPayloadMismatch {
                expected: expected as u64 * 8,
                found: pixels.len() as u64 * 8,
            });
        }
        if let Some(i) = pixels.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StackIoError::NonFiniteSample(i));
        }
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(StackIoError::Header(format!(
                "frequency_hz must be positive, got {frequency_hz}"
            )));
        }
        Ok(Self {
            dates,
            rows,
            cols,
            pixels,
            frequency_hz,
            incidence_angle_deg,
            seed: None,
            generator: None,
        })
    }

    pub fn acquisitions(&self) -> usize {
        self.dates.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn pixels(&self) -> &[Complex32] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, acquisition: usize, row: usize, col: usize) -> Complex32 {
        self.pixels[(acquisition * self.rows + row) * self.cols + col]
    }

    /// Time series of one pixel, widened to f64.
    pub fn series(&self, row: usize, col: usize) -> Vec<Complex64> {
        (0..self.acquisitions())
            .map(|a| {
                let z = self.pixel(a, row, col);
                Complex64::new(z.re as f64, z.im as f64)
            })
            .collect()
    }

    /// Amplitude series |z| of one pixel.
    pub fn amplitude_series(&self, row: usize, col: usize) -> Vec<f64> {
        self.series(row, col).iter().map(|z| z.norm()).collect()
    }
}

fn check_increasing<T: PartialOrd>(dates: &[T]) -> Result<()> {
    match dates.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(StackIoError::NonMonotonicDates(i + 1)),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StackHeader {
    p: usize,
    rows: usize,
    cols: usize,
    dates: Vec<NaiveDate>,
    frequency_hz: f64,
    incidence_angle_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<String>,
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StackIoError::MissingFile(path.to_path_buf()),
        _ => StackIoError::Io(e),
    })
}

pub fn read_slc_stack(dir: impl AsRef<Path>) -> Result<SlcStack> {
    let dir = dir.as_ref();
    let header_bytes = read_existing(&dir.join(HEADER_FILE))?;
    let header: StackHeader = serde_json::from_slice(&header_bytes).map_err(|e| StackIoError::Header(e.to_string()))?;
    if header.dates.len() != header.p {
        return Err(StackIoError::Header(format!(
            "p = {} but {} dates listed",
            header.p,
            header.dates.len()
        )));
    }
    let payload = read_existing(&dir.join(PAYLOAD_FILE))?;
    let expected = (header.p * header.rows * header.cols) as u64 * 8;
    if payload.len() as u64 != expected {
        return Err(StackIoError::HeaderPayloadMismatch {
            expected,
            found: payload.len() as u64,
        });
    }
    let pixels = payload
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    let mut stack = SlcStack::new(
        header.dates,
        header.rows,
        header.cols,
        pixels,
        header.frequency_hz,
        header.incidence_angle_deg,
    )?;
    stack.seed = header.seed;
    stack.generator = header.generator;
    Ok(stack)
}

pub fn write_slc_stack(stack: &SlcStack, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let header = StackHeader {
        p: stack.acquisitions(),
        rows: stack.rows,
        cols: stack.cols,
        dates: stack.dates.clone(),
        frequency_hz: stack.frequency_hz,
        incidence_angle_deg: stack.incidence_angle_deg,
        seed: stack.seed,
        generator: stack.generator.clone(),
    };
    let mut json = serde_json::to_string_pretty(&header).map_err(|e| StackIoError::Header(e.to_string()))?;
    json.push('\n');
    fs::write(dir.join(HEADER_FILE), json)?;

    let mut payload = Vec::with_capacity(stack.pixels.len() * 8);
    for z in &stack.pixels {
        payload.extend_from_slice(&z.re.to_le_bytes());
        payload.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(dir.join(PAYLOAD_FILE), payload)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Meteorological records

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteoRecord {
    pub date: NaiveDate,
    #[serde(rename = "precip_mm")]
    pub precipitation_mm: f64,
    #[serde(rename = "temp_c")]
    pub air_temperature_c: f64,
    pub snow_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeteoSeries {
    records: Vec<MeteoRecord>,
}

impl MeteoSeries {
    pub fn new(records: Vec<MeteoRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            let row = i as u64 + 1;
            if r.precipitation_mm < 0.0 {
                return Err(StackIoError::NegativePrecip(row));
            }
            if r.snow_mm < 0.0 {
                return Err(StackIoError::NegativeSnow(row));
            }
        }
        let dates: Vec<_> = records.iter().map(|r| r.date).collect();
        check_increasing(&dates)?;
        Ok(Self { records })
    }

    pub fn records(&self) -> &[MeteoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<&MeteoRecord> {
        self.records
            .binary_search_by_key(&date, |r| r.date)
            .ok()
            .map(|i| &self.records[i])
    }
}

fn csv_error_row(e: &csv::Error) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(0)
}

fn check_csv_header(reader: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| StackIoError::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(StackIoError::Parse {
            row: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StackIoError::MissingFile(path.to_path_buf()),
        _ => StackIoError::Io(e),
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Reads `date,precip_mm,temp_c,snow_mm`. Row numbers in errors are file
/// line numbers (header = line 1).
pub fn read_meteo(path: impl AsRef<Path>) -> Result<MeteoSeries> {
    let mut reader = open_csv(path.as_ref())?;
    check_csv_header(&mut reader, &["date", "precip_mm", "temp_c", "snow_mm"])?;
    let mut records = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for result in reader.deserialize::<MeteoRecord>() {
        let record = result.map_err(|e| StackIoError::Parse {
            row: csv_error_row(&e),
            message: e.to_string(),
        })?;
        let row = records.len() as u64 + 2;
        if !(record.precipitation_mm.is_finite() && record.air_temperature_c.is_finite() && record.snow_mm.is_finite())
        {
            return Err(StackIoError::Parse {
                row,
                message: "non-finite value".into(),
            });
        }
        if record.precipitation_mm < 0.0 {
            return Err(StackIoError::NegativePrecip(row));
        }
        if record.snow_mm < 0.0 {
            return Err(StackIoError::NegativeSnow(row));
        }
        if prev.is_some_and(|d| record.date <= d) {
            return Err(StackIoError::NonMonotonicDates(records.len()));
        }
        prev = Some(record.date);
        records.push(record);
    }
    Ok(MeteoSeries { records })
}

pub fn write_meteo(series: &MeteoSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("date,precip_mm,temp_c,snow_mm\n");
    for r in series.records() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.date, r.precipitation_mm, r.air_temperature_c, r.snow_mm
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Reference soil moisture

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsmRecord {
    pub datetime: DateTime<Utc>,
    pub ssm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmSeries {
    records: Vec<SsmRecord>,
}

impl SsmSeries {
    pub fn new(records: Vec<SsmRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.ssm) {
                return Err(StackIoError::OutOfRangeSsm {
                    row: i as u64 + 1,
                    value: r.ssm,
                });
            }
        }
        let times: Vec<_> = records.iter().map(|r| r.datetime).collect();
        check_increasing(&times)?;
        Ok(Self { records })
    }

    pub fn records(&self) -> &[SsmRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Reads `datetime,ssm` with RFC 3339 timestamps and volumetric moisture.
pub fn read_reference_ssm(path: impl AsRef<Path>) -> Result<SsmSeries> {
    let mut reader = open_csv(path.as_ref())?;
    check_csv_header(&mut reader, &["datetime", "ssm"])?;
    let mut records: Vec<SsmRecord> = Vec::new();
    for result in reader.deserialize::<SsmRecord>() {
        let record = result.map_err(|e| StackIoError::Parse {
            row: csv_error_row(&e),
            message: e.to_string(),
        })?;
        let row = records.len() as u64 + 2;
        if !(0.0..=1.0).contains(&record.ssm) {
            return Err(StackIoError::OutOfRangeSsm { row, value: record.ssm });
        }
        if records.last().is_some_and(|r| record.datetime <= r.datetime) {
            return Err(StackIoError::NonMonotonicDates(records.len()));
        }
        records.push(record);
    }
    Ok(SsmSeries { records })
}

// ---------------------------------------------------------------------------
// Output grid

pub const GRID_HEADER: &str = "cell_row,cell_col,date,ssm,cost,dry_flag";

/// One row of the SSM grid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub cell_row: usize,
    pub cell_col: usize,
    pub date: NaiveDate,
    pub ssm: f64,
    pub cost: f64,
    pub dry_flag: u8,
}

fn format_grid(records: &[GridRecord]) -> String {
    let mut sorted: Vec<&GridRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.cell_row, r.cell_col, r.date));
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(GRID_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6e},{}\n",
            r.cell_row, r.cell_col, r.date, r.ssm, r.cost, r.dry_flag
        ));
    }
    out
}

/// Writes the grid in cell-major, then date order regardless of input order.
pub fn write_ssm_grid(records: &[GridRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(format_grid(records).as_bytes())?;
    Ok(())
}

pub fn read_ssm_grid(path: impl AsRef<Path>) -> Result<Vec<GridRecord>> {
    let mut reader = open_csv(path.as_ref())?;
    let expected: Vec<&str> = GRID_HEADER.split(',').collect();
    check_csv_header(&mut reader, &expected)?;
    reader
        .deserialize::<GridRecord>()
        .map(|r| {
            r.map_err(|e| StackIoError::Parse {
                row: csv_error_row(&e),
                message: e.to_string(),
            })
        })
        .collect()
}
