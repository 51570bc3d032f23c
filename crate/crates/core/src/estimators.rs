//! Least squares, least absolute deviation and maximum-correntropy fits.
//!
//! The correntropy objective is nonconvex. [`mce_fit`] maximizes it by
//! majorize-minimize: `exp(-z)` lies above its tangent, so with weights
//! `w_t = exp(-gamma * loss(r_t))` any decrease of `sum_t w_t loss(r_t)` raises
//! the objective. For `p = 2` the inner problem is weighted least squares, for
//! `p = 1` weighted LAD. Several starts are run and the best objective wins.

use serde::{Deserialize, Serialize};

use crate::datagen::RegressionDataset;
use crate::error::{Error, Result};
use crate::kernels::{objective_from_residuals, LossSpec};
use crate::numkit::{dist2, dot, norm2, solve_general, solve_sym, Regressors};
use crate::rng;

/// Floor on `|r_t|` in the LAD reweighting `1 / max(|r_t|, floor)`.
pub const LAD_SMOOTHING: f64 = 1e-8;
/// Iteration cap of the inner LAD solver.
pub const LAD_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Ols,
    Lad,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub max_iter: usize,
    /// Stop once `||theta_{k+1} - theta_k||_2 <= tol`.
    pub tol: f64,
    /// Number of random restarts around the initial point.
    pub multistart: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-10,
            multistart: 4,
            seed: 0,
            init: Init::Lad,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    /// Sample correntropy for MCE fits, mean loss for OLS/LAD.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    /// `||theta - theta_true||_2`.
    pub fn error_to(&self, theta_true: &[f64]) -> f64 {
        dist2(&self.theta, theta_true)
    }

    /// Whether the objective trace never drops by more than `slack`.
    pub fn trace_monotone(&self, slack: f64) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[1] >= w[0] - slack)
    }
}

fn check_weights(ds: &RegressionDataset, w: &[f64]) -> Result<()> {
    if w.len() != ds.len() {
        return Err(Error::DimensionError {
            expected: ds.len(),
            found: w.len(),
        });
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "weights must be finite and >= 0".into(),
        ));
    }
    Ok(())
}

fn weighted_rhs(x: &Regressors, y: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    let mut b = vec![0.0; x.dim()];
    for (t, c) in x.columns().enumerate() {
        let wy = w.map_or(1.0, |w| w[t]) * y[t];
        if wy != 0.0 {
            for i in 0..b.len() {
                b[i] += wy * c[i];
            }
        }
    }
    b
}

fn mean_abs(r: &[f64]) -> f64 {
    r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64
}

fn mean_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

/// Ordinary least squares via the normal equations.
pub fn ols_fit(ds: &RegressionDataset) -> Result<FitResult> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let g = ds.x.gram(None);
    let theta = solve_sym(&g, &weighted_rhs(&ds.x, &ds.y, None))?;
    let objective = mean_sq(&ds.residuals(&theta));
    Ok(FitResult {
        theta,
        objective,
        iterations: 1,
        converged: true,
        objective_trace: vec![objective],
    })
}

/// Minimizes `sum_t w_t (y_t - x_t^T theta)^2`.
pub fn wls_fit(ds: &RegressionDataset, w: &[f64]) -> Result<Vec<f64>> {
    check_weights(ds, w)?;
    let g = ds.x.gram(Some(w));
    solve_sym(&g, &weighted_rhs(&ds.x, &ds.y, Some(w))).map_err(|_| Error::DegenerateWeights)
}

/// Weighted LS that falls back to a `1e-10 * trace / n` ridge on a degenerate
/// Gram matrix. Returns `None` when the weights carry no information at all.
fn wls_ridged(x: &Regressors, y: &[f64], w: &[f64]) -> Option<(Vec<f64>, bool)> {
    let mut g = x.gram(Some(w));
    let b = weighted_rhs(x, y, Some(w));
    match solve_sym(&g, &b) {
        Ok(theta) => Some((theta, false)),
        Err(_) => {
            let tr = g.trace();
            if !(tr > 0.0) || !tr.is_finite() {
                return None;
            }
            g.add_diagonal(1e-10 * tr / x.dim() as f64);
            solve_sym(&g, &b).ok().map(|theta| (theta, true))
        }
    }
}

fn residuals(x: &Regressors, y: &[f64], theta: &[f64]) -> Vec<f64> {
    x.columns().zip(y).map(|(c, y)| y - dot(c, theta)).collect()
}

fn weighted_abs(r: &[f64], w: &[f64]) -> f64 {
    r.iter().zip(w).map(|(r, w)| w * r.abs()).sum()
}

struct LadSolution {
    theta: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// IRLS on the smoothed weighted absolute loss, finished exactly by
/// [`vertex_descent`].
fn weighted_lad_solve(
    x: &Regressors,
    y: &[f64],
    w: &[f64],
    start: Option<&[f64]>,
) -> Result<LadSolution> {
    let mut theta = match start {
        Some(s) => s.to_vec(),
        None => wls_ridged(x, y, w).ok_or(Error::DegenerateWeights)?.0,
    };
    let mut r = residuals(x, y, &theta);
    let mut iterations = 0;
    let mut converged = false;
    let mut c = vec![0.0; w.len()];
    while iterations < LAD_MAX_ITER {
        iterations += 1;
        for t in 0..w.len() {
            c[t] = w[t] / r[t].abs().max(LAD_SMOOTHING);
        }
        let Some((next, _)) = wls_ridged(x, y, &c) else {
            break;
        };
        let step = dist2(&next, &theta);
        theta = next;
        r = residuals(x, y, &theta);
        if step <= 1e-10 * (1.0 + norm2(&theta)) {
            converged = true;
            break;
        }
    }
    if let Some(vertex) = vertex_descent(x, y, w, &r) {
        let rv = residuals(x, y, &vertex);
        if weighted_abs(&rv, w) <= weighted_abs(&r, w) {
            theta = vertex;
            converged = true;
        }
    }
    Ok(LadSolution {
        theta,
        iterations,
        converged,
    })
}

/// `n` independent samples with the smallest `|r_t|` among positive weights.
fn initial_basis(x: &Regressors, w: &[f64], r: &[f64]) -> Option<Vec<usize>> {
    let n = x.dim();
    let mut order: Vec<usize> = (0..r.len()).filter(|&t| w[t] > 0.0).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    // greedy Gram-Schmidt rank test
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut chosen = Vec::with_capacity(n);
    for &t in &order {
        if chosen.len() == n {
            break;
        }
        let xt = x.column(t);
        let mut v = xt.to_vec();
        for b in &q {
            let d = dot(b, &v);
            v.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
        }
        let nv = norm2(&v);
        if nv > 1e-8 * norm2(xt) {
            v.iter_mut().for_each(|a| *a /= nv);
            q.push(v);
            chosen.push(t);
        }
    }
    (chosen.len() == n).then_some(chosen)
}

fn basis_rows(x: &Regressors, basis: &[usize]) -> Vec<f64> {
    basis.iter().flat_map(|&t| x.column(t).to_vec()).collect()
}

fn interpolate(x: &Regressors, y: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let b: Vec<f64> = basis.iter().map(|&t| y[t]).collect();
    solve_general(&basis_rows(x, basis), &b).ok()
}

/// Exact finish for weighted LAD.
///
/// The optimum sits at a vertex where `n` independent residuals vanish. From
/// the vertex through the best-fitting samples, walk along edges (release one
/// basic sample, keep the others at zero residual) while the one-sided
/// derivative is negative, with an exact weighted-median line search.
fn vertex_descent(x: &Regressors, y: &[f64], w: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = x.dim();
    let len = y.len();
    let mut basis = initial_basis(x, w, r)?;
    let mut theta = interpolate(x, y, &basis)?;
    let mut obj = weighted_abs(&residuals(x, y, &theta), w);
    let y_scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-12 * y_scale;
    let mut in_basis = vec![false; len];
    let mut a = vec![0.0; len];
    let mut crossings: Vec<(f64, usize)> = Vec::with_capacity(len);
    for _ in 0..(100 + 20 * n) {
        basis.iter().for_each(|&t| in_basis[t] = true);
        let rows = basis_rows(x, &basis);
        let mut dirs = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            dirs.push(solve_general(&rows, &e).ok()?);
        }
        let res = residuals(x, y, &theta);
        // steepest edge by one-sided derivative
        let mut best: Option<(f64, usize, f64)> = None;
        for (j, d) in dirs.iter().enumerate() {
            let (mut lin, mut kink) = (0.0, w[basis[j]]);
            for t in 0..len {
                if in_basis[t] || w[t] == 0.0 {
                    continue;
                }
                let at = dot(x.column(t), d);
                if res[t].abs() <= zero_tol {
                    kink += w[t] * at.abs();
                } else {
                    lin -= w[t] * res[t].signum() * at;
                }
            }
            for sign in [1.0, -1.0] {
                let slope = sign * lin + kink;
                if best.is_none_or(|b| slope < b.0) {
                    best = Some((slope, j, sign));
                }
            }
        }
        let (slope0, j, sign) = best?;
        basis.iter().for_each(|&t| in_basis[t] = false);
        if slope0 >= -1e-12 * obj.max(1e-300) {
            break;
        }
        let d: Vec<f64> = dirs[j].iter().map(|v| sign * v).collect();
        crossings.clear();
        for t in 0..len {
            if w[t] == 0.0 || basis.contains(&t) || res[t].abs() <= zero_tol {
                continue;
            }
            a[t] = dot(x.column(t), &d);
            if a[t] != 0.0 {
                let s = res[t] / a[t];
                if s > 0.0 {
                    crossings.push((s, t));
                }
            }
        }
        crossings.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        let mut slope = slope0;
        let mut entering = None;
        for &(_, t) in &crossings {
            slope += 2.0 * w[t] * a[t].abs();
            if slope >= 0.0 {
                entering = Some(t);
                break;
            }
        }
        let entering = entering?;
        let mut next_basis = basis.clone();
        next_basis[j] = entering;
        let Some(next) = interpolate(x, y, &next_basis) else {
            break;
        };
        let next_obj = weighted_abs(&residuals(x, y, &next), w);
        if !(next_obj < obj) {
            break;
        }
        basis = next_basis;
        theta = next;
        obj = next_obj;
    }
    Some(theta)
}

/// Least absolute deviation, `min sum_t |y_t - x_t^T theta|`.
pub fn lad_fit(ds: &RegressionDataset, cfg: &EstimatorConfig) -> Result<FitResult> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let ols = ols_fit(ds)?;
    let w = vec![1.0; ds.len()];
    let sol = weighted_lad_solve(&ds.x, &ds.y, &w, Some(&ols.theta))?;
    let objective = mean_abs(&ds.residuals(&sol.theta));
    Ok(FitResult {
        theta: sol.theta,
        objective,
        iterations: sol.iterations,
        converged: sol.converged,
        objective_trace: vec![objective],
    })
}

/// Minimizes `sum_t w_t |y_t - x_t^T theta|`.
pub fn weighted_lad_fit(
    ds: &RegressionDataset,
    w: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    check_weights(ds, w)?;
    cfg.validate()?;
    let g = ds.x.gram(Some(w));
    if solve_sym(&g, &vec![0.0; ds.dim()]).is_err() {
        return Err(Error::DegenerateWeights);
    }
    Ok(weighted_lad_solve(&ds.x, &ds.y, w, None)?.theta)
}

fn start_points(ds: &RegressionDataset, cfg: &EstimatorConfig) -> Result<Vec<Vec<f64>>> {
    let ols = ols_fit(ds)?.theta;
    let lad = lad_fit(ds, cfg)?.theta;
    let mut starts = match &cfg.init {
        Init::Ols => vec![ols, lad],
        Init::Lad => vec![lad, ols],
        Init::Given(t) => {
            if t.len() != ds.dim() {
                return Err(Error::DimensionError {
                    expected: ds.dim(),
                    found: t.len(),
                });
            }
            vec![t.clone(), ols, lad]
        }
    };
    let base = starts[0].clone();
    let norm = norm2(&base);
    let scale = 0.5 * if norm > 0.0 { norm } else { 1.0 };
    for k in 0..cfg.multistart {
        let mut r = rng::substream(cfg.seed, "mce/multistart", &[k as u64]);
        starts.push(
            base.iter()
                .map(|v| v + scale * rng::standard_normal(&mut r))
                .collect(),
        );
    }
    Ok(starts)
}

/// Majorize-minimize ascent from a single start.
fn mm_run(
    ds: &RegressionDataset,
    spec: &LossSpec,
    cfg: &EstimatorConfig,
    start: &[f64],
) -> FitResult {
    let mut theta = start.to_vec();
    let mut r = ds.residuals(&theta);
    let mut value = objective_from_residuals(spec, &r);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = false;
    let mut w = vec![0.0; ds.len()];
    while iterations < cfg.max_iter {
        iterations += 1;
        for (wt, rt) in w.iter_mut().zip(&r) {
            *wt = spec.weight(*rt);
        }
        let step = if spec.p() == 2.0 {
            wls_ridged(&ds.x, &ds.y, &w)
        } else {
            weighted_lad_solve(&ds.x, &ds.y, &w, Some(&theta))
                .ok()
                .map(|s| (s.theta, false))
        };
        let Some((next, ridged)) = step else {
            // every weight underflowed: no information left to move on
            break;
        };
        let r_next = ds.residuals(&next);
        let v_next = objective_from_residuals(spec, &r_next);
        if v_next < value {
            // ascent stalled at rounding level: the current point is the fixed point
            converged = !ridged;
            break;
        }
        let moved = dist2(&next, &theta);
        theta = next;
        r = r_next;
        value = v_next;
        trace.push(value);
        if moved <= cfg.tol {
            converged = !ridged;
            break;
        }
    }
    FitResult {
        theta,
        objective: value,
        iterations,
        converged,
        objective_trace: trace,
    }
}

/// Maximum-correntropy estimate for `p in {1, 2}`.
///
/// Runs MM from the configured initial point, the other of OLS/LAD, and
/// `cfg.multistart` Gaussian perturbations (scale `0.5 * ||theta_init||`) of the
/// initial point. The highest objective wins; exact ties go to the lowest start
/// index. The winner is a local maximizer and need not be global.
pub fn mce_fit(
    ds: &RegressionDataset,
    spec: &LossSpec,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    if spec.p() != 1.0 && spec.p() != 2.0 {
        return Err(Error::InvalidConfig(format!(
            "mce_fit supports p = 1 or p = 2, got p = {}",
            spec.p()
        )));
    }
    let starts = start_points(ds, cfg)?;
    let mut best: Option<FitResult> = None;
    for s in &starts {
        let fit = mm_run(ds, spec, cfg, s);
        if best.as_ref().is_none_or(|b| fit.objective > b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}
