//! Seeded synthetic regression data.
//!
//! Data follow `y_t = x_t^T theta + v_t` with `v_t = e_t + f_t`: dense noise
//! `e_t ~ U[-eps, eps]` on every sample and sparse outliers `f_t ~ N(mean, sd^2)`
//! on exactly `round(outlier_frac * N)` positions.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, Regressors};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Bound on the dense noise amplitude.
    pub epsilon: f64,
    pub outlier_frac: f64,
    pub outlier_mean: f64,
    pub outlier_sd: f64,
    /// Standard deviation of additive regressor noise (errors-in-variables).
    pub eiv_sd: f64,
    /// Flip each outlier's sign with probability 1/2.
    #[serde(default)]
    pub symmetric_outliers: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            outlier_frac: 0.0,
            outlier_mean: 50.0,
            outlier_sd: 10.0,
            eiv_sd: 0.0,
            symmetric_outliers: false,
        }
    }
}

impl NoiseModel {
    pub fn new(epsilon: f64, outlier_frac: f64) -> Self {
        Self {
            epsilon,
            outlier_frac,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.outlier_frac) {
            return bad("outlier_frac must lie in [0, 1)");
        }
        if !self.outlier_mean.is_finite() {
            return bad("outlier_mean must be finite");
        }
        if !(self.outlier_sd >= 0.0 && self.outlier_sd.is_finite()) {
            return bad("outlier_sd must be finite and >= 0");
        }
        if !(self.eiv_sd >= 0.0 && self.eiv_sd.is_finite()) {
            return bad("eiv_sd must be finite and >= 0");
        }
        Ok(())
    }

    pub fn outlier_count(&self, n_samples: usize) -> usize {
        (self.outlier_frac * n_samples as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub x: Regressors,
    pub y: Vec<f64>,
    pub theta_true: Option<Vec<f64>>,
    /// Noise sequence, stored so that `y_t - x_t^T theta_true - v_t == 0` exactly.
    pub v: Option<Vec<f64>>,
    pub outlier_mask: Option<Vec<bool>>,
    pub seed: Option<u64>,
    pub noise: Option<NoiseModel>,
}

impl RegressionDataset {
    /// Plain dataset without ground truth. Checks shapes and Assumption-free
    /// invariants: `N >= n >= 1` and no zero regressor.
    pub fn new(x: Regressors, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionError {
                expected: x.len(),
                found: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(t) = x.columns().position(|c| c.iter().all(|v| *v == 0.0)) {
            return Err(Error::ZeroRegressor(t));
        }
        Ok(Self {
            x,
            y,
            theta_true: None,
            v: None,
            outlier_mask: None,
            seed: None,
            noise: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Residuals `r_t = y_t - x_t^T theta`.
    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        self.x
            .columns()
            .zip(&self.y)
            .map(|(x, y)| y - dot(x, theta))
            .collect()
    }

    /// Replaces `y` by `y + X^T d`, keeping the noise record consistent.
    pub fn shifted(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for (t, x) in self.x.columns().enumerate() {
            out.y[t] += dot(x, d);
        }
        if let Some(theta) = &mut out.theta_true {
            for (a, b) in theta.iter_mut().zip(d) {
                *a += b;
            }
            out.v = Some(recompute_noise(&out.x, &out.y, theta));
        }
        out
    }
}

fn recompute_noise(x: &Regressors, y: &[f64], theta: &[f64]) -> Vec<f64> {
    x.columns().zip(y).map(|(c, y)| y - dot(c, theta)).collect()
}

fn check_sizes(theta0: &[f64], n_samples: usize) -> Result<()> {
    if theta0.is_empty() {
        return Err(Error::InvalidConfig("theta must be nonempty".into()));
    }
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("theta must be finite".into()));
    }
    if n_samples < theta0.len() {
        return Err(Error::InvalidConfig(format!(
            "need N >= n, got N = {n_samples}, n = {}",
            theta0.len()
        )));
    }
    Ok(())
}

/// Draws `v_t = e_t + f_t` and the outlier mask.
fn draw_noise(n_samples: usize, noise: &NoiseModel, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut dense_rng = rng::substream(seed, "datagen/dense", &[]);
    let eps = noise.epsilon;
    let mut v: Vec<f64> = (0..n_samples)
        .map(|_| {
            if eps > 0.0 {
                dense_rng.random_range(-eps..=eps)
            } else {
                0.0
            }
        })
        .collect();
    let k = noise.outlier_count(n_samples);
    let mut mask = vec![false; n_samples];
    let mut pos_rng = rng::substream(seed, "datagen/outlier-positions", &[]);
    let mut positions = index::sample(&mut pos_rng, n_samples, k).into_vec();
    positions.sort_unstable();
    let mut amp_rng = rng::substream(seed, "datagen/outlier-amplitudes", &[]);
    let mut sign_rng = rng::substream(seed, "datagen/outlier-signs", &[]);
    for t in positions {
        let mut f = noise.outlier_mean + noise.outlier_sd * rng::standard_normal(&mut amp_rng);
        if noise.symmetric_outliers && sign_rng.random_bool(0.5) {
            f = -f;
        }
        mask[t] = true;
        v[t] += f;
    }
    (v, mask)
}

fn assemble(
    x: Regressors,
    theta0: &[f64],
    raw_noise: Vec<f64>,
    mask: Vec<bool>,
    noise: &NoiseModel,
    seed: u64,
) -> RegressionDataset {
    let y: Vec<f64> = x
        .columns()
        .zip(&raw_noise)
        .map(|(c, v)| dot(c, theta0) + v)
        .collect();
    let v = recompute_noise(&x, &y, theta0);
    RegressionDataset {
        x,
        y,
        theta_true: Some(theta0.to_vec()),
        v: Some(v),
        outlier_mask: Some(mask),
        seed: Some(seed),
        noise: Some(noise.clone()),
    }
}

/// FIR data: `x_t = [u_t, u_{t-1}, ..., u_{t-n+1}]` with `u ~ N(0, 1)` i.i.d.,
/// warm-up inputs drawn from the same law. Applies EIV noise when
/// `noise.eiv_sd > 0`.
pub fn gen_fir_dataset(
    theta0: &[f64],
    n_samples: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<RegressionDataset> {
    check_sizes(theta0, n_samples)?;
    noise.validate()?;
    let n = theta0.len();
    let mut u_rng = rng::substream(seed, "datagen/input", &[]);
    // u[k] is u_{k-(n-1)}
    let u: Vec<f64> = (0..n_samples + n - 1)
        .map(|_| rng::standard_normal(&mut u_rng))
        .collect();
    let mut flat = Vec::with_capacity(n * n_samples);
    for t in 0..n_samples {
        let now = t + n - 1;
        flat.extend((0..n).map(|lag| u[now - lag]));
    }
    let mut x = Regressors::from_flat(n, flat)?;
    nudge_zero_columns(&mut x);
    let (v, mask) = draw_noise(n_samples, noise, seed);
    let ds = assemble(x, theta0, v, mask, noise, seed);
    if noise.eiv_sd > 0.0 {
        apply_eiv(&ds, noise.eiv_sd, seed)
    } else {
        Ok(ds)
    }
}

/// Static design with regressors drawn uniformly on the unit sphere (`r_x = 1`).
pub fn gen_unit_dataset(
    theta0: &[f64],
    n_samples: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<RegressionDataset> {
    check_sizes(theta0, n_samples)?;
    noise.validate()?;
    let n = theta0.len();
    let mut dir_rng = rng::substream(seed, "datagen/unit-regressors", &[]);
    let flat: Vec<f64> = (0..n_samples)
        .flat_map(|_| rng::unit_vector(&mut dir_rng, n))
        .collect();
    let x = Regressors::from_flat(n, flat)?;
    let (v, mask) = draw_noise(n_samples, noise, seed);
    let ds = assemble(x, theta0, v, mask, noise, seed);
    if noise.eiv_sd > 0.0 {
        apply_eiv(&ds, noise.eiv_sd, seed)
    } else {
        Ok(ds)
    }
}

// A Gaussian draw of exactly 0.0 in every coordinate has probability zero, but
// the zero-regressor invariant must hold regardless.
fn nudge_zero_columns(x: &mut Regressors) {
    for t in 0..x.len() {
        let c = x.column_mut(t);
        if c.iter().all(|v| *v == 0.0) {
            c[0] = f64::MIN_POSITIVE;
        }
    }
}

/// Errors-in-variables: `X <- X + W` with `W_ij ~ N(0, eiv_sd^2)`, `y` unchanged.
/// With known `theta`, the noise record becomes `v_t - w_t^T theta`.
pub fn apply_eiv(ds: &RegressionDataset, eiv_sd: f64, seed: u64) -> Result<RegressionDataset> {
    if !(eiv_sd >= 0.0 && eiv_sd.is_finite()) {
        return Err(Error::InvalidConfig(
            "eiv_sd must be finite and >= 0".into(),
        ));
    }
    if eiv_sd == 0.0 {
        return Ok(ds.clone());
    }
    let mut w_rng: StreamRng = rng::substream(seed, "datagen/eiv", &[]);
    let mut out = ds.clone();
    for t in 0..out.x.len() {
        for v in out.x.column_mut(t) {
            *v += eiv_sd * rng::standard_normal(&mut w_rng);
        }
    }
    nudge_zero_columns(&mut out.x);
    if let Some(theta) = &out.theta_true {
        out.v = Some(recompute_noise(&out.x, &out.y, theta));
    } else {
        out.v = None;
    }
    if let Some(noise) = &mut out.noise {
        noise.eiv_sd = eiv_sd;
    }
    Ok(out)
}

/// `(|{t : |v_t| <= eps}| / N, |{t : |v_t| > eps}|)`.
pub fn noise_statistics(ds: &RegressionDataset, epsilon: f64) -> Result<(f64, usize)> {
    let v = ds.v.as_ref().ok_or(Error::MissingNoiseRecord)?;
    if v.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inliers = v.iter().filter(|x| x.abs() <= epsilon).count();
    Ok((inliers as f64 / v.len() as f64, v.len() - inliers))
}

/// Nominal SNR in dB for unit-variance white input: `||theta||^2 / (eps^2 / 3)`.
pub fn snr_db(theta: &[f64], epsilon: f64) -> f64 {
    let signal = dot(theta, theta);
    if epsilon == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (signal / (epsilon * epsilon / 3.0)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ols_fit;
    use crate::numkit::dist2;

    const THETA: [f64; 3] = [0.5, -1.0, 0.2];

    #[test]
    fn noise_free_is_exact_and_ols_recovers() {
        let ds = gen_fir_dataset(&THETA, 300, &NoiseModel::new(0.0, 0.0), 3).unwrap();
        for (t, x) in ds.x.columns().enumerate() {
            assert_eq!(ds.y[t], dot(x, &THETA));
        }
        let fit = ols_fit(&ds).unwrap();
        assert!(dist2(&fit.theta, &THETA) < 1e-10);
    }

    #[test]
    fn exact_outlier_count() {
        let ds = gen_fir_dataset(&THETA, 300, &NoiseModel::new(0.05, 0.1), 1).unwrap();
        let mask = ds.outlier_mask.as_ref().unwrap();
        assert_eq!(mask.iter().filter(|m| **m).count(), 30);
    }

    #[test]
    fn dense_noise_bounded_and_inlier_fraction() {
        let eps = 0.05;
        let ds = gen_fir_dataset(&THETA, 300, &NoiseModel::new(eps, 0.1), 2).unwrap();
        let v = ds.v.as_ref().unwrap();
        let mask = ds.outlier_mask.as_ref().unwrap();
        for (vt, m) in v.iter().zip(mask) {
            if !m {
                assert!(vt.abs() <= eps);
            }
        }
        let (frac, out) = noise_statistics(&ds, eps).unwrap();
        assert!(frac >= 0.9 - 1e-12);
        assert_eq!(out, 30);
    }

    #[test]
    fn eq1_consistency_exact() {
        let ds = gen_fir_dataset(&THETA, 500, &NoiseModel::new(0.3, 0.2), 9).unwrap();
        let v = ds.v.as_ref().unwrap();
        for (t, x) in ds.x.columns().enumerate() {
            assert_eq!(ds.y[t] - dot(x, &THETA) - v[t], 0.0);
        }
    }

    #[test]
    fn fir_sliding_window() {
        let ds = gen_fir_dataset(&THETA, 50, &NoiseModel::default(), 4).unwrap();
        for t in 0..49 {
            let a = ds.x.column(t);
            let b = ds.x.column(t + 1);
            assert_eq!(&b[1..], &a[..2]);
        }
    }

    #[test]
    fn reproducible() {
        let nm = NoiseModel::new(0.1, 0.1);
        let a = gen_fir_dataset(&THETA, 100, &nm, 11).unwrap();
        let b = gen_fir_dataset(&THETA, 100, &nm, 11).unwrap();
        assert_eq!(a, b);
        let c = gen_fir_dataset(&THETA, 100, &nm, 12).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn invalid_configs() {
        assert!(gen_fir_dataset(&THETA, 2, &NoiseModel::default(), 0).is_err());
        assert!(gen_fir_dataset(&THETA, 10, &NoiseModel::new(-1.0, 0.0), 0).is_err());
        assert!(gen_fir_dataset(&THETA, 10, &NoiseModel::new(0.0, 1.0), 0).is_err());
        assert!(gen_fir_dataset(&[], 10, &NoiseModel::default(), 0).is_err());
    }

    #[test]
    fn symmetric_outliers_take_both_signs() {
        let nm = NoiseModel {
            symmetric_outliers: true,
            ..NoiseModel::new(0.0, 0.3)
        };
        let ds = gen_fir_dataset(&THETA, 400, &nm, 5).unwrap();
        let v = ds.v.unwrap();
        assert!(v.iter().any(|x| *x > 10.0) && v.iter().any(|x| *x < -10.0));
    }

    #[test]
    fn eiv_zero_is_identity() {
        let ds = gen_fir_dataset(&THETA, 100, &NoiseModel::new(0.1, 0.1), 1).unwrap();
        assert_eq!(apply_eiv(&ds, 0.0, 3).unwrap(), ds);
    }

    #[test]
    fn eiv_with_zero_theta_keeps_noise() {
        let ds = gen_fir_dataset(&[0.0, 0.0, 0.0], 200, &NoiseModel::new(0.1, 0.1), 1).unwrap();
        let e = apply_eiv(&ds, 0.5, 3).unwrap();
        assert_eq!(e.v, ds.v);
        assert_ne!(e.x, ds.x);
        assert_eq!(e.y, ds.y);
    }

    #[test]
    fn eiv_noise_spread_matches_theta_norm() {
        let ds = gen_fir_dataset(&THETA, 10_000, &NoiseModel::new(0.05, 0.0), 21).unwrap();
        let e = apply_eiv(&ds, 0.1, 22).unwrap();
        let d: Vec<f64> =
            e.v.as_ref()
                .unwrap()
                .iter()
                .zip(ds.v.as_ref().unwrap())
                .map(|(a, b)| a - b)
                .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        let expected = 0.1 * dot(&THETA, &THETA).sqrt();
        assert!((expected - 0.1136).abs() < 1e-4);
        assert!((sd - expected).abs() < 0.1 * expected, "sd = {sd}");
    }

    #[test]
    fn noise_statistics_examples() {
        let x = Regressors::from_flat(1, vec![1.0, 1.0, 1.0]).unwrap();
        let mut ds = RegressionDataset::new(x, vec![1.0, 1.0, 101.0]).unwrap();
        assert!(matches!(
            noise_statistics(&ds, 0.0),
            Err(Error::MissingNoiseRecord)
        ));
        ds.v = Some(vec![0.0, 0.0, 0.0]);
        assert_eq!(noise_statistics(&ds, 0.0).unwrap(), (1.0, 0));
        ds.v = Some(vec![0.0, 0.0, 100.0]);
        let (f, k) = noise_statistics(&ds, 0.0).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(k, 1);
    }

    #[test]
    fn mask_and_threshold_counts_agree() {
        for seed in 0..10 {
            let ds = gen_fir_dataset(&THETA, 300, &NoiseModel::new(0.05, 0.15), seed).unwrap();
            let (frac, _) = noise_statistics(&ds, 0.05).unwrap();
            let by_mask = ds
                .outlier_mask
                .as_ref()
                .unwrap()
                .iter()
                .filter(|m| !**m)
                .count() as f64
                / 300.0;
            assert!((frac - by_mask).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_regressor_rejected() {
        let x = Regressors::from_flat(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            RegressionDataset::new(x, vec![1.0, 2.0]),
            Err(Error::ZeroRegressor(1))
        ));
    }

    #[test]
    fn snr_examples() {
        assert!(snr_db(&THETA, 0.0).is_infinite());
        let s = snr_db(&THETA, 1.6);
        assert!(s > 1.0 && s < 3.0, "{s}");
    }
}
