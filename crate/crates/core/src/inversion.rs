//! Per-cell SSM inversion.
//!
//! The cost compares observed phase closures and moisture coherences against
//! the analytical model over all triplets `n < m < k`:
//!
//! ```text
//! L = sum wrap(E_obs - E_model)^2
//!   + sum (|g_nm - g^model_nm| + |g_mk - g^model_mk| + |g_nk - g^model_nk|)^2
//! ```
//!
//! and is minimised under box bounds, with the driest acquisition capped at
//! the assumed dry moisture level. The start point walks the dry-to-wet
//! ordering dividing by moisture coherence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dielectric::{RadarConfig, SoilTexture};
use crate::ds_formation::Closure;
use crate::forward_model::{model_matrices, wavenumbers, ForwardError};
use crate::phase::{triplet_count, triplets, wrap};

#[derive(Debug, Error, PartialEq)]
pub enum InversionError {
    #[error("need at least 4 acquisitions, got {0}")]
    TooFewAcquisitions(usize),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// First-order optimality tolerance (projected gradient, inf-norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Forward finite-difference step.
    pub fd_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InversionProblem {
    /// Observed moisture coherence, floored and clipped to [floor, 1].
    pub gamma_sm: DMatrix<f64>,
    /// Observed closures for all triplets in lexicographic order.
    pub closures_obs: Vec<Closure>,
    pub texture: SoilTexture,
    pub radar: RadarConfig,
    pub driest_index: usize,
    /// Dry-to-wet ordering, starting at `driest_index`.
    pub ordering: Vec<usize>,
    pub dry_indices: Vec<usize>,
    pub sm_dry: f64,
    pub lower: f64,
    pub upper: f64,
}

impl InversionProblem {
    pub fn p(&self) -> usize {
        self.gamma_sm.nrows()
    }

    pub fn validate(&self) -> Result<(), InversionError> {
        let p = self.p();
        let bad = |m: String| Err(InversionError::InvalidProblem(m));
        if self.gamma_sm.ncols() != p {
            return bad("coherence matrix is not square".into());
        }
        if self.closures_obs.len() != triplet_count(p) {
            return bad(format!("{} closures for {} acquisitions", self.closures_obs.len(), p));
        }
        if self
            .closures_obs
            .iter()
            .zip(triplets(p))
            .any(|(c, t)| (c.n, c.m, c.k) != t)
        {
            return bad("closures not in n < m < k lexicographic order".into());
        }
        if self.driest_index >= p {
            return bad(format!("driest index {} >= p", self.driest_index));
        }
        if !(self.lower > 0.0 && self.lower <= self.sm_dry && self.sm_dry <= self.upper && self.upper <= 0.5) {
            return bad(format!(
                "bounds need 0 < lower <= sm_dry <= upper <= 0.5 (got {}, {}, {})",
                self.lower, self.sm_dry, self.upper
            ));
        }
        let mut sorted = self.ordering.clone();
        sorted.sort_unstable();
        if sorted != (0..p).collect::<Vec<_>>() || self.ordering.first() != Some(&self.driest_index) {
            return bad("ordering must be a permutation starting at the driest index".into());
        }
        Ok(())
    }

    pub fn lower_bounds(&self) -> DVector<f64> {
        DVector::from_element(self.p(), self.lower)
    }

    pub fn upper_bounds(&self) -> DVector<f64> {
        let mut hi = DVector::from_element(self.p(), self.upper);
        hi[self.driest_index] = self.sm_dry.min(self.upper);
        hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmResult {
    pub sm: Vec<f64>,
    pub initial_sm: Vec<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ordering_used: Vec<usize>,
    pub dry_indices: Vec<usize>,
}

/// Start point: `sm[driest] = sm_dry`, then along the ordering
/// `sm[next] = clip(sm[prev] / gamma_sm[prev, next], lower, upper)`.
pub fn initialize_ssm(gamma_sm: &DMatrix<f64>, ordering: &[usize], sm_dry: f64, lower: f64, upper: f64) -> Vec<f64> {
    let mut sm = vec![sm_dry; gamma_sm.nrows()];
    for w in ordering.windows(2) {
        let (prev, next) = (w[0], w[1]);
        let g = gamma_sm[(prev, next)];
        let v = if g > 0.0 { sm[prev] / g } else { upper };
        sm[next] = v.clamp(lower, upper);
    }
    sm
}

/// Residual vector whose squared norm is the cost: one wrapped closure
/// misfit per triplet followed by one grouped coherence misfit per triplet.
pub fn residuals(sm: &[f64], problem: &InversionProblem) -> Result<Vec<f64>, InversionError> {
    let k = wavenumbers(sm, &problem.texture, &problem.radar)?;
    let (values, gamma_model) = model_matrices(&k)?;
    let g = &problem.gamma_sm;
    let t = problem.closures_obs.len();
    let mut r = vec![0.0; 2 * t];
    for (i, (c, (n, m, kk))) in problem.closures_obs.iter().zip(triplets(sm.len())).enumerate() {
        let model = (values[(n, m)] * values[(m, kk)] * values[(kk, n)]).arg();
        r[i] = wrap(c.value - model);
        r[t + i] = (g[(n, m)] - gamma_model[(n, m)]).abs()
            + (g[(m, kk)] - gamma_model[(m, kk)]).abs()
            + (g[(n, kk)] - gamma_model[(n, kk)]).abs();
    }
    Ok(r)
}

pub fn cost(sm: &[f64], problem: &InversionProblem) -> Result<f64, InversionError> {
    Ok(residuals(sm, problem)?.iter().map(|v| v * v).sum())
}

type ResidualFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>, InversionError> + 'a;

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Finite-difference Jacobian of the residuals; steps backwards where a
/// forward step would leave the box.
fn fd_jacobian(
    f: &ResidualFn,
    x: &DVector<f64>,
    r: &[f64],
    upper: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>, InversionError> {
    let mut jac = DMatrix::zeros(r.len(), x.len());
    let mut probe = x.as_slice().to_vec();
    for j in 0..x.len() {
        let step = if x[j] + h <= upper[j] { h } else { -h };
        probe[j] = x[j] + step;
        let rp = f(&probe)?;
        for (i, (a, b)) in rp.iter().zip(r).enumerate() {
            jac[(i, j)] = (a - b) / step;
        }
        probe[j] = x[j];
    }
    Ok(jac)
}

fn project(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
}

/// Projected-gradient optimality measure `|P(x - g) - x|_inf`.
fn projected_gradient_norm(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct BoxSolution {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Box-constrained Levenberg-Marquardt on `sum r(x)^2`.
///
/// Variables sitting on a bound with the gradient pointing outwards are
/// frozen for the step; the damped Gauss-Newton step on the rest is projected
/// back into the box and accepted only if it lowers the cost.
///
/// Stops when the projected gradient falls below `tol`, when the cost stops
/// changing (`df <= tol * 1e-3 * max(1, f)` over three consecutive accepted
/// steps), when no damping yields descent, or at `max_iter`. Only the last
/// case reports `converged = false`.
pub fn minimize_least_squares_box(
    f: &ResidualFn,
    x0: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<BoxSolution, InversionError> {
    let n = x0.len();
    let bound_eps = 1e-12;
    let mut x = project(x0, lo, hi);
    let mut r = f(x.as_slice())?;
    let mut fx = sum_sq(&r);
    let mut mu = 1e-3;
    let mut stalled = 0;

    for iter in 0..opts.max_iter {
        let jac = fd_jacobian(f, &x, &r, hi, opts.fd_step)?;
        let jtr = jac.tr_mul(&DVector::from_column_slice(&r));
        let grad = &jtr * 2.0;
        if projected_gradient_norm(&x, &grad, lo, hi) <= opts.tol {
            return Ok(BoxSolution {
                x,
                f: fx,
                iterations: iter,
                converged: true,
            });
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !((x[i] <= lo[i] + bound_eps && grad[i] > 0.0) || (x[i] >= hi[i] - bound_eps && grad[i] < 0.0))
            })
            .collect();
        let jtj = jac.tr_mul(&jac);
        let a = DMatrix::from_fn(free.len(), free.len(), |i, j| jtj[(free[i], free[j])]);
        let b = DVector::from_fn(free.len(), |i, _| -jtr[free[i]]);

        let mut accepted = None;
        while mu < 1e12 {
            let mut damped = a.clone();
            for i in 0..free.len() {
                damped[(i, i)] += mu * a[(i, i)].max(1e-12);
            }
            if let Some(step) = damped.cholesky().map(|c| c.solve(&b)) {
                let mut trial = x.clone();
                for (i, &fi) in free.iter().enumerate() {
                    trial[fi] += step[i];
                }
                let trial = project(&trial, lo, hi);
                let rt = f(trial.as_slice())?;
                let ft = sum_sq(&rt);
                if ft < fx {
                    accepted = Some((trial, rt, ft));
                    mu = (mu / 3.0).max(1e-12);
                    break;
                }
            }
            mu *= 4.0;
        }
        let Some((x_new, r_new, f_new)) = accepted else {
            return Ok(BoxSolution {
                x,
                f: fx,
                iterations: iter + 1,
                converged: true,
            });
        };
        let df = fx - f_new;
        stalled = if df <= opts.tol * 1e-3 * fx.abs().max(1.0) {
            stalled + 1
        } else {
            0
        };
        x = x_new;
        r = r_new;
        fx = f_new;
        if stalled >= 3 {
            return Ok(BoxSolution {
                x,
                f: fx,
                iterations: iter + 1,
                converged: true,
            });
        }
    }
    Ok(BoxSolution {
        x,
        f: fx,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// Constrained local minimisation of the cost from the ordering-based start.
pub fn invert_cell(problem: &InversionProblem, opts: &SolverOptions) -> Result<SsmResult, InversionError> {
    let p = problem.p();
    if p < 4 {
        return Err(InversionError::TooFewAcquisitions(p));
    }
    problem.validate()?;
    let lo = problem.lower_bounds();
    let hi = problem.upper_bounds();
    let init = initialize_ssm(
        &problem.gamma_sm,
        &problem.ordering,
        problem.sm_dry,
        problem.lower,
        problem.upper,
    );
    let x0 = project(&DVector::from_vec(init.clone()), &lo, &hi);
    let initial_cost = cost(x0.as_slice(), problem)?;

    let objective = |sm: &[f64]| residuals(sm, problem);
    let sol = minimize_least_squares_box(&objective, &x0, &lo, &hi, opts)?;
    if !sol.converged {
        log::warn!(
            "inversion hit the iteration cap ({}) with cost {:.3e}",
            opts.max_iter,
            sol.f
        );
    }
    let (sm, final_cost) = if sol.f <= initial_cost {
        (sol.x.as_slice().to_vec(), sol.f)
    } else {
        (x0.as_slice().to_vec(), initial_cost)
    };
    Ok(SsmResult {
        sm,
        initial_sm: init,
        initial_cost,
        final_cost,
        iterations: sol.iterations,
        converged: sol.converged,
        ordering_used: problem.ordering.clone(),
        dry_indices: problem.dry_indices.clone(),
    })
}
