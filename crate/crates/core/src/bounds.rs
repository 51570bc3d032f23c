//! Stability condition and parametric error bound for the correntropy
//! estimator with an `l_p` loss.
//!
//! With `z = gamma * l(eps)`, `f = |{t : |v_t| <= eps}| / N` and `rho = rho_alpha(X)`,
//! the estimator error obeys
//!
//! ```text
//! ||theta* - theta0|| <= (1 / (alpha r_x)) * l^{-1}( ln(1/mu) / (gamma alpha_l) )
//! ```
//!
//! whenever `rho / (1 + e^-z) + e^-z f > 1`, where `mu` is [`mu_general`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::LossSpec;
use crate::richness::{RichnessReport, SigmaSource};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub spec: LossSpec,
    pub epsilon: f64,
    pub inlier_frac: f64,
    pub rho: f64,
    pub alpha: f64,
    pub r_x: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::DomainError(what.to_string()));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.inlier_frac) {
            return bad("inlier_frac must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.r_x > 0.0 && self.r_x.is_finite()) {
            return bad("r_x must be finite and > 0");
        }
        Ok(())
    }

    /// `gamma * l(eps)`.
    pub fn z(&self) -> f64 {
        self.spec.gamma() * self.spec.loss(self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub condition_ok: bool,
    pub mu: f64,
    /// `None` when the stability condition is violated.
    pub bound: Option<f64>,
}

impl BoundReport {
    fn violated(mu: f64) -> Self {
        Self {
            condition_ok: false,
            mu,
            bound: None,
        }
    }
}

/// `mu(z, f, rho)`; zero when the stability condition fails.
pub fn mu_general(z: f64, inlier_frac: f64, rho: f64) -> f64 {
    let q = (-z).exp();
    let margin = rho / (1.0 + q) + q * inlier_frac - 1.0;
    if !(margin > 0.0) {
        return 0.0;
    }
    // margin > 0 forces inlier_frac + rho > 1; this arrangement is exact at z = 0, f = 1
    ((rho + (1.0 + q) * (q * inlier_frac - 1.0)) / (inlier_frac + rho - 1.0)).clamp(0.0, 1.0)
}

/// `rho / (1 + e^-z) + e^-z f > 1`, strictly.
pub fn stability_condition(inputs: &BoundInputs) -> bool {
    let q = (-inputs.z()).exp();
    inputs.rho / (1.0 + q) + q * inputs.inlier_frac > 1.0
}

pub fn error_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let mu = mu_general(inputs.z(), inputs.inlier_frac, inputs.rho);
    if !(mu > 0.0) {
        return Ok(BoundReport::violated(mu));
    }
    let spec = &inputs.spec;
    let arg = (1.0 / mu).ln() / (spec.gamma() * spec.alpha_ell());
    let bound = spec.loss_inverse(arg)? / (inputs.alpha * inputs.r_x);
    Ok(BoundReport {
        condition_ok: true,
        mu,
        bound: Some(bound),
    })
}

/// Laplacian kernel: `(1 / (gamma1 alpha r_x)) ln(1/mu(gamma1 eps, f, rho))`.
pub fn bound_mce_l(
    gamma1: f64,
    epsilon: f64,
    inlier_frac: f64,
    rho: f64,
    alpha: f64,
    r_x: f64,
) -> Result<BoundReport> {
    let spec = LossSpec::laplacian(gamma1)?;
    BoundInputs {
        spec,
        epsilon,
        inlier_frac,
        rho,
        alpha,
        r_x,
    }
    .validate()?;
    let mu = mu_general(gamma1 * epsilon, inlier_frac, rho);
    if !(mu > 0.0) {
        return Ok(BoundReport::violated(mu));
    }
    Ok(BoundReport {
        condition_ok: true,
        mu,
        bound: Some((1.0 / mu).ln() / (gamma1 * alpha * r_x)),
    })
}

/// Gaussian kernel: `(1 / (alpha r_x)) sqrt((2 / gamma2) ln(1/mu(gamma2 eps^2, f, rho)))`.
pub fn bound_mce_g(
    gamma2: f64,
    epsilon: f64,
    inlier_frac: f64,
    rho: f64,
    alpha: f64,
    r_x: f64,
) -> Result<BoundReport> {
    let spec = LossSpec::gaussian(gamma2)?;
    BoundInputs {
        spec,
        epsilon,
        inlier_frac,
        rho,
        alpha,
        r_x,
    }
    .validate()?;
    let mu = mu_general(gamma2 * epsilon * epsilon, inlier_frac, rho);
    if !(mu > 0.0) {
        return Ok(BoundReport::violated(mu));
    }
    Ok(BoundReport {
        condition_ok: true,
        mu,
        bound: Some((2.0 / gamma2 * (1.0 / mu).ln()).sqrt() / (alpha * r_x)),
    })
}

/// Which value of `rho_alpha` feeds the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// Exact `rho` (n = 2) or `v_alpha` from the certified sigma: a valid guarantee.
    Certified,
    /// Midpoint of `[v_alpha, rho_upper]`, as used for the published figures.
    Midpoint,
}

/// `rho` for the chosen mode, or `None` if the report cannot supply it
/// (alpha above sigma, or a certified request on a heuristic report).
pub fn rho_from_report(report: &RichnessReport, mode: RhoMode) -> Option<f64> {
    match mode {
        RhoMode::Certified => {
            let v = if report.sigma_used == SigmaSource::Certified {
                report.v_alpha
            } else {
                None
            };
            match (report.rho_exact, v) {
                (Some(e), Some(v)) => Some(e.max(v)),
                (Some(e), None) => Some(e),
                (None, v) => v,
            }
        }
        RhoMode::Midpoint => report.rho_midpoint(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub rho: f64,
    pub report: BoundReport,
}

/// Grid search over `(alpha, rho_alpha)` pairs for the smallest finite bound.
///
/// Ties go to the lowest grid index. When no grid point satisfies the
/// stability condition, the first point is returned with its violated report.
pub fn optimize_alpha(
    spec: &LossSpec,
    epsilon: f64,
    inlier_frac: f64,
    r_x: f64,
    grid: &[(f64, f64)],
) -> Result<AlphaChoice> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let evaluated: Vec<AlphaChoice> = grid
        .par_iter()
        .map(|&(alpha, rho)| {
            let inputs = BoundInputs {
                spec: *spec,
                epsilon,
                inlier_frac,
                rho,
                alpha,
                r_x,
            };
            error_bound(&inputs).map(|report| AlphaChoice { alpha, rho, report })
        })
        .collect::<Result<_>>()?;
    let mut best: Option<&AlphaChoice> = None;
    for c in &evaluated {
        if let Some(b) = c.report.bound {
            if best.and_then(|x| x.report.bound).is_none_or(|cur| b < cur) {
                best = Some(c);
            }
        }
    }
    Ok(*best.unwrap_or(&evaluated[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent high-precision values for z = 0.2, f = rho = 0.8, alpha = 0.6.
    const MU_FIG3: f64 = 0.287_516_477_021_525_1;
    const SLOPE_L: f64 = 10.387_292_575_064_57;
    const SLOPE_G: f64 = 5.884_242_396_736_267;

    fn inputs(p: f64, gamma: f64, eps: f64, f: f64, rho: f64, alpha: f64) -> BoundInputs {
        BoundInputs {
            spec: LossSpec::new(p, gamma).unwrap(),
            epsilon: eps,
            inlier_frac: f,
            rho,
            alpha,
            r_x: 1.0,
        }
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu_general(0.0, 1.0, 1.0), 1.0);
        assert!((mu_general(0.2, 0.8, 0.8) - MU_FIG3).abs() < 1e-14);
        assert_eq!(mu_general(0.2, 0.5, 0.5), 0.0);
    }

    #[test]
    fn stability_examples() {
        assert!(stability_condition(&inputs(1.0, 1.0, 0.0, 1.0, 1.0, 0.5)));
        assert!(stability_condition(&inputs(1.0, 0.2, 1.0, 0.8, 0.8, 0.6)));
        for (z, f) in [(0.0, 1.0), (0.0, 0.5), (0.3, 1.0), (2.0, 0.9)] {
            assert!(!stability_condition(&inputs(1.0, 1.0, z, f, 0.0, 0.5)));
        }
    }

    #[test]
    fn bound_examples() {
        let r = error_bound(&inputs(2.0, 1.0, 0.0, 1.0, 1.0, 0.5)).unwrap();
        assert_eq!((r.mu, r.bound), (1.0, Some(0.0)));
        let l = error_bound(&inputs(1.0, 0.2, 1.0, 0.8, 0.8, 0.6)).unwrap();
        assert!((l.bound.unwrap() - SLOPE_L).abs() < 1e-12);
        let g = error_bound(&inputs(2.0, 0.2, 1.0, 0.8, 0.8, 0.6)).unwrap();
        assert!((g.bound.unwrap() - SLOPE_G).abs() < 1e-12);
        let v = error_bound(&inputs(1.0, 0.2, 1.0, 0.5, 0.5, 0.6)).unwrap();
        assert!(!v.condition_ok && v.bound.is_none() && v.mu == 0.0);
        assert!(error_bound(&inputs(1.0, 0.2, 1.0, 1.5, 0.5, 0.6)).is_err());
    }

    #[test]
    fn specializations_agree_with_general_path() {
        for &eps in &[0.0, 0.05, 0.3, 1.0, 1.6] {
            for &(f, rho) in &[(1.0, 1.0), (0.9, 0.8), (0.8, 0.8), (0.5, 0.5), (0.95, 0.3)] {
                for &gamma in &[0.1, 0.25, 0.5, 4.0] {
                    let gl = error_bound(&inputs(1.0, gamma, eps, f, rho, 0.6)).unwrap();
                    let l = bound_mce_l(gamma, eps, f, rho, 0.6, 1.0).unwrap();
                    let gg = error_bound(&inputs(2.0, gamma, eps, f, rho, 0.6)).unwrap();
                    let g = bound_mce_g(gamma, eps, f, rho, 0.6, 1.0).unwrap();
                    for (a, b) in [(gl, l), (gg, g)] {
                        assert_eq!(a.condition_ok, b.condition_ok);
                        match (a.bound, b.bound) {
                            (Some(x), Some(y)) => {
                                assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300))
                            }
                            (None, None) => {}
                            _ => panic!("condition mismatch"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mu_monotone_on_grid() {
        let k = 50;
        let at = |i: usize| i as f64 / (k - 1) as f64;
        for iz in 0..k {
            let z = 3.0 * at(iz);
            for i in 0..k {
                for j in 0..k {
                    let m = mu_general(z, at(i), at(j));
                    assert!((0.0..=1.0).contains(&m));
                    if i + 1 < k {
                        assert!(mu_general(z, at(i + 1), at(j)) >= m - 1e-14);
                    }
                    if j + 1 < k {
                        assert!(mu_general(z, at(i), at(j + 1)) >= m - 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn bound_linear_in_eps_at_fixed_z() {
        for (p, slope) in [(1.0, SLOPE_L), (2.0, SLOPE_G)] {
            for k in 1..=16 {
                let eps = 0.1 * k as f64;
                let gamma = 0.2 / eps.powf(p);
                let b = error_bound(&inputs(p, gamma, eps, 0.8, 0.8, 0.6))
                    .unwrap()
                    .bound
                    .unwrap();
                assert!((b / eps - slope).abs() < 1e-10, "p={p} eps={eps}");
            }
        }
    }

    #[test]
    fn bound_nonincreasing_in_mu() {
        let mut prev = f64::INFINITY;
        for k in 0..=40 {
            let rho = 0.6 + 0.01 * k as f64;
            let r = error_bound(&inputs(2.0, 0.5, 0.3, 0.95, rho, 0.6)).unwrap();
            if let Some(b) = r.bound {
                assert!(b <= prev);
                prev = b;
            }
        }
    }

    #[test]
    fn optimize_alpha_examples() {
        let spec = LossSpec::laplacian(0.5).unwrap();
        assert!(matches!(
            optimize_alpha(&spec, 0.05, 0.9, 1.0, &[]),
            Err(Error::EmptyGrid)
        ));
        let grid: Vec<(f64, f64)> = [0.2, 0.4, 0.6].iter().map(|&a| (a, 0.9)).collect();
        assert_eq!(
            optimize_alpha(&spec, 0.05, 0.9, 1.0, &grid).unwrap().alpha,
            0.6
        );
        assert_eq!(
            optimize_alpha(&spec, 0.05, 0.9, 1.0, &grid[..1])
                .unwrap()
                .alpha,
            0.2
        );
        let only = [(0.2, 0.1), (0.4, 0.95), (0.6, 0.1)];
        let c = optimize_alpha(&spec, 0.05, 0.9, 1.0, &only).unwrap();
        assert_eq!((c.alpha, c.report.condition_ok), (0.4, true));
        let none = [(0.3, 0.0), (0.5, 0.0)];
        let c = optimize_alpha(&spec, 0.05, 0.9, 1.0, &none).unwrap();
        assert_eq!((c.alpha, c.report.condition_ok), (0.3, false));
        let tie = [(0.5, 0.9), (0.5, 0.9)];
        assert_eq!(
            optimize_alpha(&spec, 0.05, 0.9, 1.0, &tie).unwrap().alpha,
            0.5
        );
    }
}
