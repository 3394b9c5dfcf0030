//! Dry-pair exponential decorrelation and the soil-moisture coherence term.
//!
//! Over dry acquisition pairs coherence is modelled as
//! `(gamma0 - gamma_p) * exp(-t / tau) + gamma_p`; dividing the observed
//! coherence by that model leaves the part attributed to moisture change.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 dry pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all dry pairs share the same time span")]
    DegenerateTimeSpans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub tau_min_days: f64,
    /// Upper bound on tau as a multiple of the longest span.
    pub tau_max_factor: f64,
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            tau_min_days: 1.0,
            tau_max_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationFit {
    pub gamma0: f64,
    pub gamma_p: f64,
    pub tau: f64,
    pub residual_rms: f64,
}

impl DecorrelationFit {
    pub fn predict(&self, t_days: f64) -> f64 {
        (self.gamma0 - self.gamma_p) * (-t_days / self.tau).exp() + self.gamma_p
    }
}

/// Best `(amplitude, asymptote)` for a fixed decay factor vector `e`, with
/// `amplitude >= 0`, `asymptote in [0, 1]` and `amplitude + asymptote <= 1`.
/// The feasible set is a triangle; when the unconstrained optimum falls
/// outside it the optimum lies on an edge, so every edge is tried.
fn linear_subproblem(e: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = e.len() as f64;
    let sse = |a: f64, c: f64| -> f64 { e.iter().zip(y).map(|(ei, yi)| (a * ei + c - yi).powi(2)).sum() };
    let feasible = |a: f64, c: f64| a >= 0.0 && (0.0..=1.0).contains(&c) && a + c <= 1.0 + 1e-15;

    let se: f64 = e.iter().sum();
    let sy: f64 = y.iter().sum();
    let see: f64 = e.iter().map(|v| v * v).sum();
    let sey: f64 = e.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * see - se * se;
    if det.abs() > 1e-14 * n * see.max(1e-300) {
        let a = (n * sey - se * sy) / det;
        let c = (sy - a * se) / n;
        if feasible(a, c) {
            return (a, c, sse(a, c));
        }
    }

    let mut candidates = Vec::with_capacity(3);
    // amplitude = 0
    let c = (sy / n).clamp(0.0, 1.0);
    candidates.push((0.0, c));
    // asymptote = 0
    if see > 0.0 {
        candidates.push(((sey / see).clamp(0.0, 1.0), 0.0));
    }
    // amplitude + asymptote = 1
    let (mut num, mut den) = (0.0, 0.0);
    for (ei, yi) in e.iter().zip(y) {
        num += (ei - 1.0) * (yi - 1.0);
        den += (ei - 1.0) * (ei - 1.0);
    }
    if den > 0.0 {
        let a = (num / den).clamp(0.0, 1.0);
        candidates.push((a, 1.0 - a));
    }
    candidates
        .into_iter()
        .map(|(a, c)| (a, c, sse(a, c)))
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .expect("at least one edge candidate")
}

fn profile(t: &[f64], y: &[f64], tau: f64) -> (f64, f64, f64) {
    let e: Vec<f64> = t.iter().map(|ti| (-ti / tau).exp()).collect();
    linear_subproblem(&e, y)
}

/// Bounded least-squares fit of the dry decorrelation model to
/// `(span_days, coherence)` pairs.
///
/// For fixed tau the model is linear in the two coherence levels, so the fit
/// profiles them out, searches log(tau) on a grid followed by golden-section
/// refinement, and polishes all three parameters with projected
/// Gauss-Newton steps.
pub fn fit_dry_decorrelation(pairs: &[(f64, f64)], bounds: &FitBounds) -> Result<DecorrelationFit, FitError> {
    if pairs.len() < 3 {
        return Err(FitError::TooFewPairs(pairs.len()));
    }
    let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let t_max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t_min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    if t_max - t_min <= 0.0 {
        return Err(FitError::DegenerateTimeSpans);
    }
    let lo = bounds.tau_min_days.ln();
    let hi = (bounds.tau_max_factor * t_max).max(bounds.tau_min_days).ln();

    let sse_at = |log_tau: f64| profile(&t, &y, log_tau.exp()).2;
    const GRID: usize = 200;
    let grid: Vec<f64> = (0..=GRID).map(|i| lo + (hi - lo) * i as f64 / GRID as f64).collect();
    let best = grid
        .iter()
        .enumerate()
        .map(|(i, &g)| (i, sse_at(g)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (sse_at(x1), sse_at(x2));
    for _ in 0..100 {
        if b - a < 1e-12 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = sse_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = sse_at(x2);
        }
    }
    let mut tau = (0.5 * (a + b)).exp();
    let (mut amp, mut floor, mut sse) = profile(&t, &y, tau);

    if amp > 0.0 {
        (amp, floor, tau, sse) = gauss_newton_polish(&t, &y, amp, floor, tau, lo.exp(), hi.exp(), sse);
    }

    Ok(DecorrelationFit {
        gamma0: amp + floor,
        gamma_p: floor,
        tau,
        residual_rms: (sse / t.len() as f64).sqrt(),
    })
}

#[allow(clippy::too_many_arguments)]
fn gauss_newton_polish(
    t: &[f64],
    y: &[f64],
    mut amp: f64,
    mut floor: f64,
    mut tau: f64,
    tau_lo: f64,
    tau_hi: f64,
    mut sse: f64,
) -> (f64, f64, f64, f64) {
    let eval = |amp: f64, floor: f64, tau: f64| -> f64 {
        t.iter()
            .zip(y)
            .map(|(ti, yi)| (amp * (-ti / tau).exp() + floor - yi).powi(2))
            .sum()
    };
    for _ in 0..50 {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = nalgebra::Vector3::<f64>::zeros();
        for (ti, yi) in t.iter().zip(y) {
            let e = (-ti / tau).exp();
            let r = amp * e + floor - yi;
            let row = nalgebra::Vector3::new(e, 1.0, amp * e * ti / (tau * tau));
            jtj += row * row.transpose();
            jtr += row * r;
        }
        let Some(step) = jtj.try_inverse().map(|inv| inv * jtr) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let na = amp - lambda * step[0];
            let nf = floor - lambda * step[1];
            let nt = (tau - lambda * step[2]).clamp(tau_lo, tau_hi);
            let feasible = na >= 0.0 && (0.0..=1.0).contains(&nf) && na + nf <= 1.0;
            if feasible {
                let ns = eval(na, nf, nt);
                if ns < sse {
                    (amp, floor, tau, sse) = (na, nf, nt, ns);
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved || sse == 0.0 {
            break;
        }
    }
    (amp, floor, tau, sse)
}

/// Coherence attributed to moisture change: observed coherence divided by
/// the fitted dry model at each pair's span, clipped to `[floor, 1]`.
/// `spans_days[(n, m)]` is the time between acquisitions n and m.
pub fn soil_moisture_coherence(
    gamma: &DMatrix<f64>,
    fit: &DecorrelationFit,
    spans_days: &DMatrix<f64>,
    gamma_floor: f64,
) -> DMatrix<f64> {
    let p = gamma.nrows();
    DMatrix::from_fn(p, p, |n, m| {
        if n == m {
            return 1.0;
        }
        let model = fit.predict(spans_days[(n, m)]);
        let ratio = if model > 0.0 { gamma[(n, m)] / model } else { 1.0 };
        ratio.clamp(0.0, 1.0).max(gamma_floor)
    })
}

/// Absolute time spans in days between every pair of dates.
pub fn span_matrix(dates: &[chrono::NaiveDate]) -> DMatrix<f64> {
    let p = dates.len();
    DMatrix::from_fn(p, p, |n, m| (dates[n] - dates[m]).num_days().abs() as f64)
}

/// `(span, coherence)` for every pair of distinct dry acquisitions.
pub fn dry_pairs(gamma: &DMatrix<f64>, spans: &DMatrix<f64>, dry: &[usize]) -> Vec<(f64, f64)> {
    let mut dry = dry.to_vec();
    dry.sort_unstable();
    let mut out = Vec::new();
    for (i, &n) in dry.iter().enumerate() {
        for &m in &dry[i + 1..] {
            out.push((spans[(n, m)], gamma[(n, m)]));
        }
    }
    out
}
