//! The `|.|^p` loss family and the correntropy objective built on it.

use serde::{Deserialize, Serialize};

use crate::datagen::RegressionDataset;
use crate::error::{Error, Result};

/// Loss exponent `p >= 1` and kernel scale `gamma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    p: f64,
    gamma: f64,
}

impl LossSpec {
    pub fn new(p: f64, gamma: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "loss exponent p = {p} must be >= 1"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel scale gamma = {gamma} must be > 0"
            )));
        }
        Ok(Self { p, gamma })
    }

    /// Laplacian kernel, `p = 1`.
    pub fn laplacian(gamma: f64) -> Result<Self> {
        Self::new(1.0, gamma)
    }

    /// Gaussian kernel, `p = 2`.
    pub fn gaussian(gamma: f64) -> Result<Self> {
        Self::new(2.0, gamma)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Relaxed-triangle constant: `loss(a - b) >= alpha_ell * loss(a) - loss(b)`.
    pub fn alpha_ell(&self) -> f64 {
        2f64.powf(1.0 - self.p)
    }

    /// `|a|^p`
    #[inline]
    pub fn loss(&self, a: f64) -> f64 {
        let m = a.abs();
        if self.p == 1.0 {
            m
        } else if self.p == 2.0 {
            m * m
        } else {
            m.powf(self.p)
        }
    }

    /// `v^(1/p)` for `v >= 0`.
    pub fn loss_inverse(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::DomainError(format!(
                "loss inverse needs v >= 0, got {v}"
            )));
        }
        Ok(if self.p == 1.0 {
            v
        } else if self.p == 2.0 {
            v.sqrt()
        } else {
            v.powf(1.0 / self.p)
        })
    }

    /// `exp(-gamma * loss(y - yhat))`. Huge residuals underflow to exactly 0.
    #[inline]
    pub fn kernel(&self, y: f64, yhat: f64) -> f64 {
        self.weight(y - yhat)
    }

    /// Kernel value as a function of the residual.
    #[inline]
    pub fn weight(&self, residual: f64) -> f64 {
        (-self.gamma * self.loss(residual)).exp()
    }
}

pub fn loss(spec: &LossSpec, a: f64) -> f64 {
    spec.loss(a)
}

pub fn loss_inverse(spec: &LossSpec, v: f64) -> Result<f64> {
    spec.loss_inverse(v)
}

pub fn kernel(spec: &LossSpec, y: f64, yhat: f64) -> f64 {
    spec.kernel(y, yhat)
}

/// Sample correntropy `(1/N) sum_k exp(-gamma * loss(y_k - x_k^T theta))`.
pub fn sample_correntropy(spec: &LossSpec, ds: &RegressionDataset, theta: &[f64]) -> Result<f64> {
    check(ds, theta)?;
    Ok(objective_from_residuals(spec, &ds.residuals(theta)))
}

pub(crate) fn objective_from_residuals(spec: &LossSpec, r: &[f64]) -> f64 {
    r.iter().map(|&r| spec.weight(r)).sum::<f64>() / r.len() as f64
}

/// Gradient of [`sample_correntropy`] in `theta`:
/// `(gamma p / N) sum_k exp(-gamma |r_k|^p) |r_k|^(p-1) sign(r_k) x_k`.
///
/// For `p = 1` this is the subgradient element with `sign(0) = 0`.
pub fn correntropy_gradient(
    spec: &LossSpec,
    ds: &RegressionDataset,
    theta: &[f64],
) -> Result<Vec<f64>> {
    check(ds, theta)?;
    let n = ds.dim();
    let p = spec.p();
    let mut g = vec![0.0; n];
    for (x, y) in ds.x.columns().zip(&ds.y) {
        let r = y - crate::numkit::dot(x, theta);
        if r == 0.0 {
            continue;
        }
        let m = r.abs();
        let slope = if p == 1.0 { 1.0 } else { m.powf(p - 1.0) };
        let c = spec.weight(r) * slope * r.signum();
        for i in 0..n {
            g[i] += c * x[i];
        }
    }
    let scale = spec.gamma() * p / ds.len() as f64;
    g.iter_mut().for_each(|v| *v *= scale);
    Ok(g)
}

fn check(ds: &RegressionDataset, theta: &[f64]) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if theta.len() != ds.dim() {
        return Err(Error::DimensionError {
            expected: ds.dim(),
            found: theta.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_fir_dataset, NoiseModel};
    use crate::numkit::Regressors;
    use crate::rng;
    use rand::Rng;

    fn spec(p: f64, g: f64) -> LossSpec {
        LossSpec::new(p, g).unwrap()
    }

    #[test]
    fn loss_examples() {
        assert_eq!(spec(2.0, 1.0).loss(-3.0), 9.0);
        assert_eq!(spec(1.0, 1.0).loss(0.0), 0.0);
        assert!((spec(1.5, 1.0).loss(4.0) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn loss_inverse_examples() {
        assert_eq!(spec(2.0, 1.0).loss_inverse(9.0).unwrap(), 3.0);
        assert_eq!(spec(1.0, 1.0).loss_inverse(7.0).unwrap(), 7.0);
        assert!((spec(3.0, 1.0).loss_inverse(8.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            spec(2.0, 1.0).loss_inverse(-1.0),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn loss_inverse_round_trip() {
        let mut r = rng::substream(3, "test", &[]);
        for p in [1.0, 1.5, 2.0, 3.0, 4.5] {
            let s = spec(p, 1.0);
            for _ in 0..1000 {
                let v: f64 = r.random_range(0.0..1e6);
                let back = s.loss(s.loss_inverse(v).unwrap());
                assert!((back - v).abs() <= 1e-12 * v.max(1e-300));
            }
        }
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(spec(2.0, 0.7).kernel(1.3, 1.3), 1.0);
        assert!((spec(2.0, 0.25).kernel(2.0, 0.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((spec(1.0, 0.5).kernel(-4.0, 0.0) - 0.135_335_283_236_612_7).abs() < 1e-15);
        // underflow is the robustness mechanism
        assert_eq!(spec(2.0, 1.0).kernel(1e200, 0.0), 0.0);
    }

    #[test]
    fn kernel_strictly_decreasing_in_residual() {
        for p in [1.0, 1.5, 2.0, 3.0] {
            let s = spec(p, 0.3);
            let mut prev = s.weight(0.0);
            assert_eq!(prev, 1.0);
            for k in 1..200 {
                let w = s.weight(k as f64 * 0.05);
                assert!(w < prev);
                assert_eq!(w, s.weight(-(k as f64) * 0.05));
                prev = w;
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(LossSpec::new(0.5, 1.0).is_err());
        assert!(LossSpec::new(2.0, 0.0).is_err());
        assert!(LossSpec::new(f64::NAN, 1.0).is_err());
        assert_eq!(spec(1.0, 1.0).alpha_ell(), 1.0);
        assert_eq!(spec(2.0, 1.0).alpha_ell(), 0.5);
    }

    #[test]
    fn correntropy_examples() {
        let theta = [0.5, -1.0, 0.2];
        let ds = gen_fir_dataset(&theta, 50, &NoiseModel::default(), 1).unwrap();
        assert_eq!(
            sample_correntropy(&spec(2.0, 0.25), &ds, &theta).unwrap(),
            1.0
        );
        let g = correntropy_gradient(&spec(2.0, 0.25), &ds, &theta).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));

        // residuals (0, r) with kernel value 1/2
        let s = spec(2.0, 1.0);
        let r = (2f64.ln()).sqrt();
        let x = Regressors::from_flat(1, vec![1.0, 1.0]).unwrap();
        let ds = RegressionDataset::new(x, vec![0.0, r]).unwrap();
        assert!((sample_correntropy(&s, &ds, &[0.0]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn correntropy_matches_naive_sum() {
        let theta = [0.5, -1.0, 0.2];
        let ds = gen_fir_dataset(&theta, 200, &NoiseModel::new(0.5, 0.2), 8).unwrap();
        let probe = [0.4, -0.9, 0.3];
        for (p, g) in [(1.0, 0.5), (2.0, 0.25), (1.5, 0.1)] {
            let s = spec(p, g);
            let mut acc = 0.0;
            for t in 0..ds.len() {
                let x = ds.x.column(t);
                let yhat = x[0] * probe[0] + x[1] * probe[1] + x[2] * probe[2];
                acc += (-g * (ds.y[t] - yhat).abs().powf(p)).exp();
            }
            let v = sample_correntropy(&s, &ds, &probe).unwrap();
            assert!((v - acc / ds.len() as f64).abs() < 1e-14);
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = RegressionDataset {
            x: Regressors::from_flat(1, vec![]).unwrap(),
            y: vec![],
            theta_true: None,
            v: None,
            outlier_mask: None,
            seed: None,
            noise: None,
        };
        assert!(matches!(
            sample_correntropy(&spec(2.0, 1.0), &ds, &[0.0]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn single_point_gradient_by_hand() {
        let g = 0.3;
        let x = [1.5, -0.5];
        let ds = RegressionDataset::new(Regressors::from_flat(2, x.to_vec()).unwrap(), vec![2.0])
            .unwrap();
        let theta = [0.2, 0.4];
        let r = 2.0 - (1.5 * 0.2 - 0.5 * 0.4);
        let grad = correntropy_gradient(&spec(2.0, g), &ds, &theta).unwrap();
        for i in 0..2 {
            let expected = 2.0 * g * (-g * r * r).exp() * r * x[i];
            assert!((grad[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let theta0 = [0.5, -1.0, 0.2];
        let ds = gen_fir_dataset(&theta0, 60, &NoiseModel::new(1.0, 0.1), 4).unwrap();
        let mut r = rng::substream(17, "fd", &[]);
        for p in [1.5, 2.0, 3.0] {
            let s = spec(p, 0.4);
            for _ in 0..100 {
                let th: Vec<f64> = theta0
                    .iter()
                    .map(|v| v + r.random_range(-1.0..1.0))
                    .collect();
                let g = correntropy_gradient(&s, &ds, &th).unwrap();
                let h = 1e-6;
                for i in 0..3 {
                    let mut a = th.clone();
                    let mut b = th.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (sample_correntropy(&s, &ds, &a).unwrap()
                        - sample_correntropy(&s, &ds, &b).unwrap())
                        / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-5, "p={p} fd={fd} g={}", g[i]);
                }
            }
        }
    }

    #[test]
    fn laplacian_subgradient_uses_zero_sign() {
        let x = Regressors::from_flat(1, vec![1.0, 1.0]).unwrap();
        let ds = RegressionDataset::new(x, vec![0.0, 1.0]).unwrap();
        let g = correntropy_gradient(&spec(1.0, 1.0), &ds, &[0.0]).unwrap();
        assert!((g[0] - 0.5 * (-1f64).exp()).abs() < 1e-15);
    }
}
