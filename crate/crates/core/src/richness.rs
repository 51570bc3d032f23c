//! Informativity of a regressor matrix.
//!
//! `rho_alpha(X)` is the smallest fraction of normalized regressors whose
//! correlation with some direction reaches `alpha`. It is exact here only for
//! `n = 2`; in general it is bracketed by
//!
//! ```text
//! v_alpha(X) <= rho_alpha(X) <= min(1, lambda_min(Xn Xn^T) / (N alpha^2))
//! ```
//!
//! where the lower bound is valid for `alpha <= sigma(X)`, and `sigma(X)` is
//! the minimax correlation `min_{|eta|=1} max_t |xn_t^T eta|`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, eig_sym, norm2, Regressors};
use crate::rng;

/// Regressors scaled to unit 2-norm, plus the smallest original norm `r_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRegressors {
    xtilde: Regressors,
    r_x: f64,
}

impl NormalizedRegressors {
    pub fn xtilde(&self) -> &Regressors {
        &self.xtilde
    }

    pub fn r_x(&self) -> f64 {
        self.r_x
    }

    pub fn dim(&self) -> usize {
        self.xtilde.dim()
    }

    pub fn len(&self) -> usize {
        self.xtilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xtilde.is_empty()
    }

    /// Eigen-decomposition of `Xn Xn^T`.
    fn gram_eigen(&self) -> crate::numkit::SymEigen {
        eig_sym(&self.xtilde.gram(None))
    }

    pub fn lambda_min(&self) -> f64 {
        self.gram_eigen().values[0].max(0.0)
    }
}

pub fn normalize_columns(x: &Regressors) -> Result<NormalizedRegressors> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = x.dim();
    let mut flat = Vec::with_capacity(x.as_flat().len());
    let mut r_x = f64::INFINITY;
    for (t, c) in x.columns().enumerate() {
        let norm = norm2(c);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroRegressor(t));
        }
        r_x = r_x.min(norm);
        flat.extend(c.iter().map(|v| v / norm));
    }
    Ok(NormalizedRegressors {
        xtilde: Regressors::from_flat(n, flat)?,
        r_x,
    })
}

/// `{ t : |xn_t^T eta| >= alpha * ||eta||_2 }` (0-based indices).
pub fn correlation_set(nr: &NormalizedRegressors, eta: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_alpha_closed(alpha)?;
    let norm = direction_norm(nr, eta)?;
    let level = alpha * norm;
    Ok(nr
        .xtilde
        .columns()
        .enumerate()
        .filter(|(_, x)| dot(x, eta).abs() >= level)
        .map(|(t, _)| t)
        .collect())
}

fn correlation_count(nr: &NormalizedRegressors, unit_eta: &[f64], alpha: f64) -> usize {
    nr.xtilde
        .columns()
        .filter(|x| dot(x, unit_eta).abs() >= alpha)
        .count()
}

fn direction_norm(nr: &NormalizedRegressors, eta: &[f64]) -> Result<f64> {
    if eta.len() != nr.dim() {
        return Err(Error::DimensionError {
            expected: nr.dim(),
            found: eta.len(),
        });
    }
    let norm = norm2(eta);
    if !(norm > 0.0) {
        return Err(Error::ZeroDirection);
    }
    Ok(norm)
}

fn check_alpha_closed(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::DomainError(format!(
            "alpha = {alpha} must lie in [0, 1]"
        )));
    }
    Ok(())
}

fn require_dim2(nr: &NormalizedRegressors) -> Result<()> {
    if nr.dim() != 2 {
        return Err(Error::DimensionError {
            expected: 2,
            found: nr.dim(),
        });
    }
    Ok(())
}

/// Projective angles of the columns, in `[0, pi)`.
fn projective_angles(nr: &NormalizedRegressors) -> Vec<f64> {
    nr.xtilde
        .columns()
        .map(|x| wrap_pi(x[1].atan2(x[0])))
        .collect()
}

fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Distance between two projective angles, in `[0, pi/2]`.
fn projective_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Exact `rho_alpha` for `n = 2`.
///
/// A column at angle `phi` correlates with direction `psi` at level `alpha`
/// iff `dist(psi, phi) <= acos(alpha)` on the projective line. The count is
/// piecewise constant with breakpoints at `phi_t +- acos(alpha)`; a cyclic
/// sweep over the sorted breakpoints visits every open interval. Under the
/// inclusive inequality the value at a breakpoint is never below its
/// neighbours, so the minimum over open intervals is the infimum.
pub fn rho_exact_2d(nr: &NormalizedRegressors, alpha: f64) -> Result<f64> {
    require_dim2(nr)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    let half = alpha.acos();
    let phis = projective_angles(nr);
    let n_cols = phis.len();
    // (position, +1 enter | -1 leave)
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * n_cols);
    for &phi in &phis {
        events.push((wrap_pi(phi - half), 1));
        events.push((wrap_pi(phi + half), -1));
    }
    // entries before exits at equal positions: a shared point is not an interval
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let m = events.len();
    let (mut widest, mut start) = (-1.0, 0);
    for k in 0..m {
        let next = if k + 1 < m {
            events[k + 1].0
        } else {
            events[0].0 + PI
        };
        let gap = next - events[k].0;
        if gap > widest {
            widest = gap;
            start = k;
        }
    }
    // reference point well inside the widest gap
    let probe = wrap_pi(events[start].0 + 0.5 * widest);
    let mut count = phis
        .iter()
        .filter(|&&phi| projective_distance(probe, phi) <= half)
        .count() as i64;
    let mut min_count = count;
    for step in 1..=m {
        let k = (start + step) % m;
        count += events[k].1 as i64;
        let next = events[(k + 1) % m].0 + if k + 1 == m { PI } else { 0.0 };
        if next > events[k].0 {
            min_count = min_count.min(count);
        }
    }
    Ok(min_count.max(0) as f64 / n_cols as f64)
}

/// Upper estimate of `rho_alpha` from sampled directions.
///
/// Minimizes `|I_alpha| / N` over `n_samples` uniform unit directions, every
/// column direction and the `lambda_min` eigenvector of `Xn Xn^T`. Since
/// `rho_alpha` is an infimum, the sampled minimum can only overestimate it.
pub fn rho_sampled(
    nr: &NormalizedRegressors,
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if nr.dim() < 2 {
        return Err(Error::DimensionError {
            expected: 2,
            found: nr.dim(),
        });
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    check_alpha_closed(alpha)?;
    let n = nr.dim();
    const CHUNK: usize = 1024;
    let chunks = n_samples.div_ceil(CHUNK);
    let sampled = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::substream(seed, "richness/rho-sampled", &[c as u64]);
            let todo = CHUNK.min(n_samples - c * CHUNK);
            (0..todo)
                .map(|_| correlation_count(nr, &rng::unit_vector(&mut r, n), alpha))
                .min()
                .unwrap_or(usize::MAX)
        })
        .min()
        .unwrap_or(usize::MAX);
    let structural = nr
        .xtilde
        .columns()
        .map(|x| correlation_count(nr, x, alpha))
        .min()
        .unwrap_or(usize::MAX);
    let eig = correlation_count(nr, &nr.gram_eigen().vectors[0], alpha);
    let best = sampled.min(structural).min(eig);
    Ok(best as f64 / nr.len() as f64)
}

/// Certified lower bound `sqrt(lambda_min(Xn Xn^T) / N)` on `sigma(X)`.
pub fn sigma_lower(nr: &NormalizedRegressors) -> f64 {
    (nr.lambda_min() / nr.len() as f64).sqrt()
}

/// `sigma(X)` for `n = 2`: the best direction bisects the widest angular gap
/// between consecutive columns on the projective line, so
/// `sigma = cos(widest_gap / 2)`.
pub fn sigma_exact_2d(nr: &NormalizedRegressors) -> Result<f64> {
    require_dim2(nr)?;
    let mut phis = projective_angles(nr);
    phis.sort_by(f64::total_cmp);
    let m = phis.len();
    let widest = (0..m)
        .map(|k| {
            if k + 1 < m {
                phis[k + 1] - phis[k]
            } else {
                phis[0] + PI - phis[k]
            }
        })
        .fold(0.0_f64, f64::max);
    Ok((0.5 * widest).cos().clamp(0.0, 1.0))
}

/// `max_t |xn_t^T eta|` for unit `eta`.
fn max_correlation(nr: &NormalizedRegressors, eta: &[f64]) -> (f64, usize) {
    nr.xtilde
        .columns()
        .enumerate()
        .map(|(t, x)| (dot(x, eta).abs(), t))
        .fold((-1.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Upper estimate of `sigma(X)`.
///
/// Exact for `n = 2` ([`sigma_exact_2d`]). For `n >= 3`, the best of
/// `n_starts` projected-subgradient descents on the unit sphere (random starts
/// plus the `lambda_min` eigenvector). Any unit direction evaluates to at
/// least `sigma`, so the result never undershoots it.
pub fn sigma_heuristic(nr: &NormalizedRegressors, n_starts: usize, seed: u64) -> Result<f64> {
    if n_starts == 0 {
        return Err(Error::InvalidConfig("n_starts must be >= 1".into()));
    }
    if nr.dim() == 1 {
        return Ok(1.0);
    }
    if nr.dim() == 2 {
        return sigma_exact_2d(nr);
    }
    const ITERS: usize = 400;
    let n = nr.dim();
    let eig0 = nr.gram_eigen().vectors[0].clone();
    let best = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let mut eta = if k == 0 {
                eig0.clone()
            } else {
                let mut r = rng::substream(seed, "richness/sigma-start", &[k as u64]);
                rng::unit_vector(&mut r, n)
            };
            let (mut best, _) = max_correlation(nr, &eta);
            for it in 0..ITERS {
                let (_, t) = max_correlation(nr, &eta);
                let x = nr.xtilde.column(t);
                let c = dot(x, &eta);
                // subgradient of |x^T eta|, projected on the tangent space
                let mut g: Vec<f64> = x
                    .iter()
                    .zip(&eta)
                    .map(|(xi, ei)| c.signum() * (xi - c * ei))
                    .collect();
                let gn = norm2(&g);
                if gn < 1e-15 {
                    break;
                }
                let step = 0.2 / (1.0 + it as f64).sqrt();
                g.iter_mut().for_each(|v| *v /= gn);
                eta.iter_mut().zip(&g).for_each(|(e, gi)| *e -= step * gi);
                let en = norm2(&eta);
                eta.iter_mut().for_each(|e| *e /= en);
                best = best.min(max_correlation(nr, &eta).0);
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best.clamp(0.0, 1.0))
}

/// Lower bound `v_alpha(X)` for a given `sigma_used >= alpha`.
///
/// `delta = sqrt(1 - alpha^2) - sqrt(1 - sigma^2)`, threshold
/// `tau = sqrt(1 - delta^2)`, `J_t = { k : |xn_k^T xn_t| >= tau }` and the
/// result is `min_t |J_t| / N`.
pub fn v_alpha(nr: &NormalizedRegressors, alpha: f64, sigma_used: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(sigma_used <= 1.0) {
        return Err(Error::DomainError(format!(
            "need 0 < alpha <= sigma <= 1, got alpha = {alpha}, sigma = {sigma_used}"
        )));
    }
    if alpha > sigma_used {
        return Err(Error::AlphaExceedsSigma {
            alpha,
            sigma: sigma_used,
        });
    }
    let tau = v_alpha_threshold(alpha, sigma_used);
    // unit vectors carry a few ulps of norm error
    let level = tau - 4.0 * f64::EPSILON;
    let cols = nr.len();
    let min_count = (0..cols)
        .into_par_iter()
        .map(|t| {
            let xt = nr.xtilde.column(t);
            nr.xtilde
                .columns()
                .enumerate()
                .filter(|(k, xk)| *k == t || dot(xk, xt).abs() >= level)
                .count()
        })
        .min()
        .unwrap_or(0);
    Ok(min_count as f64 / cols as f64)
}

/// `tau = sqrt(1 - delta^2)` with `delta` clipped to `[0, 1]`.
pub fn v_alpha_threshold(alpha: f64, sigma: f64) -> f64 {
    let delta = ((1.0 - alpha * alpha).max(0.0).sqrt() - (1.0 - sigma * sigma).max(0.0).sqrt())
        .clamp(0.0, 1.0);
    (1.0 - delta * delta).sqrt()
}

/// `min(1, lambda_min(Xn Xn^T) / (N alpha^2))`.
pub fn rho_upper(nr: &NormalizedRegressors, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::DomainError(format!("alpha = {alpha} must be > 0")));
    }
    Ok(rho_upper_from(nr.lambda_min(), nr.len(), alpha))
}

fn rho_upper_from(lambda_min: f64, cols: usize, alpha: f64) -> f64 {
    (lambda_min.max(0.0) / (cols as f64 * alpha * alpha)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    /// `sqrt(lambda_min / N)`: keeps `v_alpha` a guaranteed lower bound.
    Certified,
    /// Sampled upper estimate of `sigma`: `v_alpha` may overshoot `rho`.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessOptions {
    pub sigma_source: SigmaSource,
    /// Directions for [`rho_sampled`] when `n >= 3`; 0 skips it.
    pub n_samples: usize,
    pub sigma_starts: usize,
    pub seed: u64,
}

impl Default for RichnessOptions {
    fn default() -> Self {
        Self {
            sigma_source: SigmaSource::Certified,
            n_samples: 10_000,
            sigma_starts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessReport {
    pub alpha: f64,
    pub r_x: f64,
    pub sigma_lower: f64,
    pub sigma_heuristic: f64,
    pub sigma_used: SigmaSource,
    /// `None` when `alpha` exceeds the sigma in use.
    pub v_alpha: Option<f64>,
    pub rho_upper: f64,
    /// Present for `n = 2` only.
    pub rho_exact: Option<f64>,
    /// Present for `n >= 3` when sampling is enabled.
    pub rho_sampled: Option<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `sqrt(lambda_max / lambda_min)` of the raw `X X^T`.
    pub condition_number: f64,
}

impl RichnessReport {
    /// Midpoint of `[v_alpha, rho_upper]`.
    pub fn rho_midpoint(&self) -> Option<f64> {
        self.v_alpha.map(|v| 0.5 * (v + self.rho_upper))
    }

    /// The best guaranteed value of `rho_alpha`: exact when available,
    /// otherwise the certified `v_alpha`.
    pub fn rho_certified(&self) -> Option<f64> {
        match (self.rho_exact, self.sigma_used, self.v_alpha) {
            (Some(exact), _, _) => Some(exact),
            (None, SigmaSource::Certified, v) => v,
            _ => None,
        }
    }
}

pub fn richness_report(
    x: &Regressors,
    alpha: f64,
    options: &RichnessOptions,
) -> Result<RichnessReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    let nr = normalize_columns(x)?;
    let nt = eig_sym(&nr.xtilde.gram(None));
    let lambda_min_t = nt.values[0].max(0.0);
    let sigma_lo = (lambda_min_t / nr.len() as f64).sqrt();
    let sigma_hi = sigma_heuristic(&nr, options.sigma_starts.max(1), options.seed)?.max(sigma_lo);
    let sigma = match options.sigma_source {
        SigmaSource::Certified => sigma_lo,
        SigmaSource::Heuristic => sigma_hi,
    };
    let v = match v_alpha(&nr, alpha, sigma) {
        Ok(v) => Some(v),
        Err(Error::AlphaExceedsSigma { .. }) => None,
        Err(e) => return Err(e),
    };
    let (rho_exact, rho_s) = if nr.dim() == 2 {
        (Some(rho_exact_2d(&nr, alpha)?), None)
    } else if nr.dim() >= 3 && options.n_samples > 0 {
        (
            None,
            Some(rho_sampled(&nr, alpha, options.n_samples, options.seed)?),
        )
    } else {
        (None, None)
    };
    let raw = eig_sym(&x.gram(None));
    let (lmin, lmax) = (raw.values[0], raw.values[raw.values.len() - 1]);
    Ok(RichnessReport {
        alpha,
        r_x: nr.r_x,
        sigma_lower: sigma_lo,
        sigma_heuristic: sigma_hi,
        sigma_used: options.sigma_source,
        v_alpha: v,
        rho_upper: rho_upper_from(lambda_min_t, nr.len(), alpha),
        rho_exact,
        rho_sampled: rho_s,
        lambda_min: lmin,
        lambda_max: lmax,
        condition_number: if lmin > 0.0 {
            (lmax / lmin).sqrt()
        } else {
            f64::INFINITY
        },
    })
}
