//! Distributed-scatterer formation: statistically homogeneous pixel (SHP)
//! selection with the two-sample Kolmogorov-Smirnov test, followed by the
//! normalized sample coherence matrix of the selected pixels and the
//! observables derived from it (coherence magnitude, interferometric phase,
//! backscatter proxy and phase closures).

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::phase::{triplets, wrap};
use crate::stack_io::SlcStack;

#[derive(Debug, Error, PartialEq)]
pub enum DsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    EmptySeries,
    #[error("window rows {row0}..{row_end} cols {col0}..{col_end} outside a {rows}x{cols} stack")]
    WindowOutOfBounds {
        row0: usize,
        row_end: usize,
        col0: usize,
        col_end: usize,
        rows: usize,
        cols: usize,
    },
    #[error("row {0} of the pixel matrix has zero norm")]
    ZeroRow(usize),
    #[error("zero interferogram in closure triplet")]
    ZeroInterferogram,
    #[error("significance level {0} outside (0, 1)")]
    InvalidAlpha(f64),
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest vertical distance
/// between the empirical CDFs of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, DsError> {
    if a.len() != b.len() {
        return Err(DsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(DsError::EmptySeries);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);

    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        // advance past every sample equal to x so ties step both CDFs at once
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic two-sided critical coefficient c(alpha) = sqrt(-ln(alpha/2)/2).
pub fn ks_critical_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Rectangular pixel window `[row0, row0+height) x [col0, col0+width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellWindow {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl CellWindow {
    pub fn center(&self) -> (usize, usize) {
        (self.row0 + self.height / 2, self.col0 + self.width / 2)
    }

    pub fn contains(&self, (r, c): (usize, usize)) -> bool {
        (self.row0..self.row0 + self.height).contains(&r) && (self.col0..self.col0 + self.width).contains(&c)
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_bounds(&self, stack: &SlcStack) -> Result<(), DsError> {
        let row_end = self.row0 + self.height;
        let col_end = self.col0 + self.width;
        if self.is_empty() || row_end > stack.rows() || col_end > stack.cols() {
            return Err(DsError::WindowOutOfBounds {
                row0: self.row0,
                row_end,
                col0: self.col0,
                col_end,
                rows: stack.rows(),
                cols: stack.cols(),
            });
        }
        Ok(())
    }
}

/// Tiling of the stack into SSM grid cells of `cell_height x cell_width`
/// pixels. Partial cells at the right and bottom edges are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellGrid {
    pub cell_height: usize,
    pub cell_width: usize,
    pub cell_rows: usize,
    pub cell_cols: usize,
}

impl CellGrid {
    pub fn new(stack_rows: usize, stack_cols: usize, cell_height: usize, cell_width: usize) -> Self {
        let (cell_rows, cell_cols) = if cell_height == 0 || cell_width == 0 {
            (0, 0)
        } else {
            (stack_rows / cell_height, stack_cols / cell_width)
        };
        Self {
            cell_height,
            cell_width,
            cell_rows,
            cell_cols,
        }
    }

    pub fn window(&self, cell_row: usize, cell_col: usize) -> CellWindow {
        CellWindow {
            row0: cell_row * self.cell_height,
            col0: cell_col * self.cell_width,
            height: self.cell_height,
            width: self.cell_width,
        }
    }

    /// Cells in cell-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cell_rows).flat_map(move |r| (0..self.cell_cols).map(move |c| (r, c)))
    }

    pub fn len(&self) -> usize {
        self.cell_rows * self.cell_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pixels of `window` whose amplitude series is KS-compatible with the
/// window-center pixel at level `alpha`. The center is always included.
/// Returned in row-major order.
pub fn select_shp(stack: &SlcStack, window: &CellWindow, alpha: f64) -> Result<Vec<(usize, usize)>, DsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DsError::InvalidAlpha(alpha));
    }
    window.check_bounds(stack)?;
    let p = stack.acquisitions();
    let center = window.center();
    let reference = stack.amplitude_series(center.0, center.1);
    let threshold = ks_critical_coefficient(alpha) * (2.0 / p as f64).sqrt();

    let mut selected = Vec::new();
    for r in window.row0..window.row0 + window.height {
        for c in window.col0..window.col0 + window.width {
            if (r, c) == center {
                selected.push((r, c));
                continue;
            }
            let d = ks_statistic(&reference, &stack.amplitude_series(r, c))?;
            if d <= threshold {
                selected.push((r, c));
            }
        }
    }
    Ok(selected)
}

/// A distributed scatterer: the selected pixels of one grid cell and their
/// `p x l` complex sample matrix.
#[derive(Debug, Clone)]
pub struct DsCell {
    pub cell_row: usize,
    pub cell_col: usize,
    pub pixel_indices: Vec<(usize, usize)>,
    pub z: DMatrix<Complex64>,
}

impl DsCell {
    pub fn from_pixels(stack: &SlcStack, cell_row: usize, cell_col: usize, pixel_indices: Vec<(usize, usize)>) -> Self {
        let p = stack.acquisitions();
        let z = DMatrix::from_fn(p, pixel_indices.len(), |a, i| {
            let (r, c) = pixel_indices[i];
            let v = stack.pixel(a, r, c);
            Complex64::new(v.re as f64, v.im as f64)
        });
        Self {
            cell_row,
            cell_col,
            pixel_indices,
            z,
        }
    }

    pub fn l(&self) -> usize {
        self.pixel_indices.len()
    }
}

#[derive(Debug, Clone)]
pub enum DsOutcome {
    Formed(DsCell),
    /// Fewer than `l_min` homogeneous pixels.
    Skipped {
        selected: usize,
    },
}

pub fn form_ds(
    stack: &SlcStack,
    cell_row: usize,
    cell_col: usize,
    window: &CellWindow,
    alpha: f64,
    l_min: usize,
) -> Result<DsOutcome, DsError> {
    let shp = select_shp(stack, window, alpha)?;
    if shp.len() < l_min {
        return Ok(DsOutcome::Skipped { selected: shp.len() });
    }
    Ok(DsOutcome::Formed(DsCell::from_pixels(stack, cell_row, cell_col, shp)))
}

/// Normalized sample coherence matrix of a `p x l` sample matrix:
/// `C = Z Z^H / sqrt(|Z|^2 (|Z|^2)^T)` with row-wise Euclidean norms.
pub fn coherence_matrix(z: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, DsError> {
    let p = z.nrows();
    let norms_sq: Vec<f64> = (0..p).map(|n| z.row(n).norm_squared()).collect();
    if let Some(n) = norms_sq.iter().position(|&v| v == 0.0) {
        return Err(DsError::ZeroRow(n));
    }
    let zzh = z * z.adjoint();
    let mut c = DMatrix::from_fn(p, p, |n, m| zzh[(n, m)] / (norms_sq[n] * norms_sq[m]).sqrt());
    for n in 0..p {
        c[(n, n)] = Complex64::new(1.0, 0.0);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub value: f64,
}

/// Per-cell interferometric observables.
#[derive(Debug, Clone)]
pub struct Observables {
    /// Coherence magnitude, symmetric with unit diagonal.
    pub gamma: DMatrix<f64>,
    /// Interferometric phase (radians), antisymmetric.
    pub phase: DMatrix<f64>,
    /// Mean |z|^2 per acquisition.
    pub power: Vec<f64>,
    /// Closures of all triplets n < m < k.
    pub closures: Vec<Closure>,
}

pub fn observables(c: &DMatrix<Complex64>, z: &DMatrix<Complex64>) -> Observables {
    let p = c.nrows();
    let mut gamma = DMatrix::from_fn(p, p, |n, m| c[(n, m)].norm().clamp(0.0, 1.0));
    let mut phase = DMatrix::from_fn(p, p, |n, m| c[(n, m)].arg());
    for n in 0..p {
        gamma[(n, n)] = 1.0;
        phase[(n, n)] = 0.0;
        for m in n + 1..p {
            // exact symmetry regardless of rounding in Z Z^H
            gamma[(m, n)] = gamma[(n, m)];
            phase[(m, n)] = -phase[(n, m)];
        }
    }
    let l = z.ncols().max(1) as f64;
    let power = (0..p).map(|n| z.row(n).norm_squared() / l).collect();
    let closures = closures_from_phase(&phase);
    Observables {
        gamma,
        phase,
        power,
        closures,
    }
}

/// Closures of the unit phasors `exp(j phase)` for all triplets.
pub fn closures_from_phase(phase: &DMatrix<f64>) -> Vec<Closure> {
    triplets(phase.nrows())
        .map(|(n, m, k)| Closure {
            n,
            m,
            k,
            value: wrap(phase[(n, m)] + phase[(m, k)] + phase[(k, n)]),
        })
        .collect()
}

/// Phase closure `arg(I_nm I_mk I_kn)` in (-pi, pi].
pub fn phase_closure(i_nm: Complex64, i_mk: Complex64, i_kn: Complex64) -> Result<f64, DsError> {
    if i_nm == Complex64::ZERO || i_mk == Complex64::ZERO || i_kn == Complex64::ZERO {
        return Err(DsError::ZeroInterferogram);
    }
    Ok(wrap((i_nm * i_mk * i_kn).arg()))
}
