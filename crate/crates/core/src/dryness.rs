//! Dry-acquisition screening and SSM-level ordering.
//!
//! Acquisitions are first screened with the meteorological record, the
//! driest admissible one is picked from the cell-averaged coherence, and each
//! cell then orders its acquisitions from dry to wet using either coherence
//! with the driest date or backscatter level, keeping whichever ordering
//! shows the steeper coherence loss with ordering distance.

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stack_io::MeteoSeries;

#[derive(Debug, Error, PartialEq)]
pub enum DrynessError {
    #[error("no meteorological record for {0}")]
    DateNotCovered(NaiveDate),
    #[error("no admissible acquisition to choose the driest from")]
    EmptyCandidates,
    #[error("all ordering distances are equal; slope undefined")]
    DegenerateFit,
}

/// Meteorological screening thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteoCriteria {
    pub precip_window_hours: f64,
    pub precip_threshold_mm: f64,
    pub temp_min_c: f64,
}

impl Default for MeteoCriteria {
    fn default() -> Self {
        Self {
            precip_window_hours: 48.0,
            precip_threshold_mm: 0.1,
            temp_min_c: 0.0,
        }
    }
}

/// Indices of acquisitions that are snow free, above freezing and without
/// rain in the window ending on the acquisition day. Meteo is daily, so the
/// window covers `ceil(hours / 24)` calendar days including the acquisition
/// day; days missing from the record contribute no precipitation.
pub fn filter_acquisitions(
    meteo: &MeteoSeries,
    dates: &[NaiveDate],
    criteria: &MeteoCriteria,
) -> Result<Vec<usize>, DrynessError> {
    let window_days = (criteria.precip_window_hours / 24.0).ceil().max(1.0) as u64;
    let mut kept = Vec::new();
    for (i, &date) in dates.iter().enumerate() {
        let record = meteo.get(date).ok_or(DrynessError::DateNotCovered(date))?;
        let rain: f64 = (0..window_days)
            .filter_map(|back| date.checked_sub_days(Days::new(back)))
            .filter_map(|d| meteo.get(d))
            .map(|r| r.precipitation_mm)
            .sum();
        if record.snow_mm == 0.0
            && record.air_temperature_c > criteria.temp_min_c
            && rain < criteria.precip_threshold_mm
        {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Candidate with the highest mean coherence against the other candidates.
/// Ties go to the earliest acquisition.
pub fn find_driest(gamma_mean: &DMatrix<f64>, candidates: &[usize]) -> Result<usize, DrynessError> {
    let first = *candidates.first().ok_or(DrynessError::EmptyCandidates)?;
    if candidates.len() == 1 {
        return Ok(first);
    }
    let mut best = (f64::NEG_INFINITY, first);
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    for &n in &sorted {
        let others = sorted.iter().filter(|&&m| m != n);
        let count = others.clone().count() as f64;
        let mean = others.map(|&m| gamma_mean[(n, m)]).sum::<f64>() / count;
        if mean > best.0 {
            best = (mean, n);
        }
    }
    Ok(best.1)
}

/// Starts at `driest`, then all other acquisitions by descending coherence
/// with it (ties: earlier first).
pub fn order_by_coherence(gamma: &DMatrix<f64>, driest: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = (0..gamma.nrows()).filter(|&i| i != driest).collect();
    rest.sort_by(|&a, &b| gamma[(driest, b)].total_cmp(&gamma[(driest, a)]).then(a.cmp(&b)));
    std::iter::once(driest).chain(rest).collect()
}

/// Ascending backscatter (ties: earlier first).
pub fn order_by_backscatter(power: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..power.len()).collect();
    order.sort_by(|&a, &b| power[a].total_cmp(&power[b]).then(a.cmp(&b)));
    order
}

/// Least-squares slope of coherence against distance in the ordering, over
/// all pairs n < m.
pub fn ordering_slope(gamma: &DMatrix<f64>, ordering: &[usize]) -> Result<f64, DrynessError> {
    let p = ordering.len();
    let mut position = vec![0usize; p];
    for (pos, &idx) in ordering.iter().enumerate() {
        position[idx] = pos;
    }
    let mut xs = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    let mut ys = Vec::with_capacity(xs.capacity());
    for n in 0..p {
        for m in n + 1..p {
            xs.push(position[n].abs_diff(position[m]) as f64);
            ys.push(gamma[(n, m)]);
        }
    }
    let count = xs.len() as f64;
    if xs.is_empty() {
        return Err(DrynessError::DegenerateFit);
    }
    let mx = xs.iter().sum::<f64>() / count;
    let my = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DrynessError::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingSource {
    Coherence,
    Backscatter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrynessAnalysis {
    pub driest_index: usize,
    /// Acquisition indices from driest to wettest.
    pub ordering: Vec<usize>,
    pub ordering_source: OrderingSource,
    pub slope: f64,
    pub dry_indices: Vec<usize>,
}

pub fn dry_count(p: usize, dry_fraction: f64) -> usize {
    // guard against 0.3 * 10 = 3.0000000000000004
    let raw = dry_fraction * p as f64;
    let rounded = raw.round();
    let n = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (n as usize).clamp(1.min(p), p)
}

/// Evaluates both orderings and keeps the one with the more negative slope
/// (coherence wins ties). The backscatter ordering is rotated so that it
/// also starts at `driest`; without that the driest constraint and the
/// initializer would disagree with the ordering.
pub fn select_ordering_and_dry_set(
    gamma: &DMatrix<f64>,
    power: &[f64],
    driest: usize,
    dry_fraction: f64,
) -> Result<DrynessAnalysis, DrynessError> {
    let p = gamma.nrows();
    let by_coherence = order_by_coherence(gamma, driest);
    let by_backscatter: Vec<usize> = std::iter::once(driest)
        .chain(order_by_backscatter(power).into_iter().filter(|&i| i != driest))
        .collect();

    let (ordering, source, slope) = if p < 3 {
        (by_coherence, OrderingSource::Coherence, 0.0)
    } else {
        let s_coh = ordering_slope(gamma, &by_coherence)?;
        let s_bsc = ordering_slope(gamma, &by_backscatter)?;
        if s_bsc < s_coh {
            (by_backscatter, OrderingSource::Backscatter, s_bsc)
        } else {
            (by_coherence, OrderingSource::Coherence, s_coh)
        }
    };
    let dry_indices = ordering[..dry_count(p, dry_fraction)].to_vec();
    Ok(DrynessAnalysis {
        driest_index: driest,
        ordering,
        ordering_source: source,
        slope,
        dry_indices,
    })
}
