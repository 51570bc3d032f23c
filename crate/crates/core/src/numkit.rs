//! Small dense linear algebra.
//!
//! Everything here targets `n <= ~20`: Cholesky solves, cyclic Jacobi
//! eigen-decomposition and a handful of vector helpers. Regressor matrices are
//! stored column-major as [`Regressors`] so that `x_t` is a contiguous slice.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Dense symmetric matrix with full row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * m.dim + i] = *v;
        }
        m
    }

    /// Builds from rows, rejecting anything that is not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::DimensionError {
                expected: 1,
                found: 0,
            });
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionError {
                    expected: dim,
                    found: row.len(),
                });
            }
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        for i in 0..dim {
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(Error::DomainError(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Adds `v` to entries (i, j) and (j, i) (once on the diagonal).
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] += v;
        if i != j {
            self.data[j * self.dim + i] += v;
        }
    }

    /// `self += w * x x^T`, touching only the lower triangle and mirroring.
    pub fn add_outer(&mut self, w: f64, x: &[f64]) {
        let n = self.dim;
        for i in 0..n {
            let wi = w * x[i];
            for (j, xj) in x.iter().enumerate().take(i + 1) {
                self.data[i * n + j] += wi * xj;
            }
        }
        self.mirror_lower();
    }

    fn mirror_lower(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..i {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += v;
        }
    }
}

/// Relative pivot floor of the Cholesky definiteness check. Exactly
/// rank-deficient Gram matrices leave pivots of a few `eps * scale` from rounding.
pub const PIVOT_FLOOR: f64 = 1e-13;

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
///
/// A pivot at or below `PIVOT_FLOOR * max|a_ii|` is treated as a failed
/// definiteness certificate.
pub fn solve_sym(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionError {
            expected: n,
            found: b.len(),
        });
    }
    let scale = (0..n).fold(0.0_f64, |m, i| m.max(a.get(i, i).abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let floor = PIVOT_FLOOR * scale;
    // lower-triangular factor, row-major
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) {
            return Err(Error::SingularMatrix);
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            z[i] -= l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    Ok(z)
}

/// Solves a general square system (row-major `a`) by LU with partial pivoting.
pub fn solve_general(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::DimensionError {
            expected: n * n,
            found: a.len(),
        });
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    if !(scale > 0.0) {
        return Err(Error::SingularMatrix);
    }
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if pval <= n as f64 * f64::EPSILON * scale {
            return Err(Error::SingularMatrix);
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= m[i * n + k] * x[k];
        }
        x[i] /= m[i * n + i];
    }
    Ok(x)
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigen-decomposition.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-14 * ||A||_F`.
pub fn eig_sym(a: &SymMatrix) -> SymEigen {
    const MAX_SWEEPS: usize = 100;
    let n = a.dim();
    let mut m = a.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let threshold = 1e-14 * a.frobenius();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    SymEigen {
        values: order.iter().map(|&i| m[i * n + i]).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
            .collect(),
    }
}

/// Smallest and largest eigenvalue.
pub fn eig_extremes(a: &SymMatrix) -> (f64, f64) {
    let e = eig_sym(a);
    (e.values[0], e.values[e.values.len() - 1])
}

/// Column-major `n x N` matrix; column `t` is the regressor `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressors {
    dim: usize,
    data: Vec<f64>,
}

impl Regressors {
    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionError {
                expected: 1,
                found: 0,
            });
        }
        let mut data = Vec::with_capacity(dim * columns.len());
        for c in columns {
            if c.len() != dim {
                return Err(Error::DimensionError {
                    expected: dim,
                    found: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(Self { dim, data })
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionError {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// Regressor dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn column(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn column_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// `X^T theta`, i.e. the predictions `x_t^T theta`.
    pub fn predict(&self, theta: &[f64]) -> Vec<f64> {
        self.columns().map(|x| dot(x, theta)).collect()
    }

    /// `sum_t w_t x_t x_t^T`; `None` weights means all ones.
    pub fn gram(&self, weights: Option<&[f64]>) -> SymMatrix {
        let n = self.dim;
        let mut g = SymMatrix::zeros(n);
        for (t, x) in self.columns().enumerate() {
            let w = weights.map_or(1.0, |w| w[t]);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let wi = w * x[i];
                for (j, xj) in x.iter().enumerate().take(i + 1) {
                    g.data[i * n + j] += wi * xj;
                }
            }
        }
        g.mirror_lower();
        g
    }

    /// Applies `q` (row-major `n x n`) to every column.
    pub fn transform(&self, q: &[f64]) -> Self {
        let n = self.dim;
        let mut data = Vec::with_capacity(self.data.len());
        for x in self.columns() {
            for i in 0..n {
                data.push(dot(&q[i * n..(i + 1) * n], x));
            }
        }
        Self { dim: n, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solve_identity_and_diagonal() {
        let x = solve_sym(&SymMatrix::identity(2), &[3.0, -1.0]).unwrap();
        assert_eq!(x, vec![3.0, -1.0]);
        let x = solve_sym(&SymMatrix::diag(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_two_by_two_by_substitution() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = solve_sym(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let back = a.mul_vec(&x);
        assert!((back[0] - 3.0).abs() < 1e-14 && (back[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_and_indefinite_rejected() {
        let a = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_sym(&a, &[1.0, 1.0]),
            Err(Error::SingularMatrix)
        ));
        let a = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_sym(&a, &[1.0, 1.0]),
            Err(Error::SingularMatrix)
        ));
        assert!(matches!(
            solve_sym(&SymMatrix::zeros(3), &[0.0; 3]),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn asymmetric_rows_rejected() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn eig_extremes_examples() {
        let (lo, hi) = eig_extremes(&SymMatrix::identity(3));
        assert_eq!((lo, hi), (1.0, 1.0));
        let (lo, hi) = eig_extremes(&SymMatrix::diag(&[0.5, 2.0]));
        assert_eq!((lo, hi), (0.5, 2.0));
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (lo, hi) = eig_extremes(&a);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvectors_satisfy_definition() {
        let a = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 3.0, 0.5],
            vec![-2.0, 0.5, 1.0],
        ])
        .unwrap();
        let e = eig_sym(&a);
        for (lam, v) in e.values.iter().zip(&e.vectors) {
            let av = a.mul_vec(v);
            for i in 0..3 {
                assert!((av[i] - lam * v[i]).abs() < 1e-12);
            }
            assert!((norm2(v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let a = [0.0, 2.0, 1.0, 1.0];
        let x = solve_general(&a, &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve_general(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_err());
    }

    fn spd_from(entries: &[f64], n: usize) -> SymMatrix {
        let mut a = SymMatrix::zeros(n);
        for row in entries.chunks_exact(n) {
            a.add_outer(1.0, row);
        }
        a.add_diagonal(1e-3);
        a
    }

    proptest! {
        #[test]
        fn spd_solve_residual(n in 1usize..8, seed in proptest::collection::vec(-3.0f64..3.0, 64), b in proptest::collection::vec(-10.0f64..10.0, 8)) {
            let a = spd_from(&seed[..n * n], n);
            let b = &b[..n];
            let x = solve_sym(&a, b).unwrap();
            let r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(u, v)| u - v).collect();
            let tol = 1e-10 * (a.frobenius() * norm2(&x) + norm2(b));
            prop_assert!(norm2(&r) <= tol);
        }

        #[test]
        fn rayleigh_sandwich_and_trace(n in 1usize..7, seed in proptest::collection::vec(-3.0f64..3.0, 49), etas in proptest::collection::vec(-1.0f64..1.0, 7 * 40)) {
            let a = spd_from(&seed[..n * n], n);
            let (lo, hi) = eig_extremes(&a);
            let slack = 1e-10 * hi.abs().max(1.0);
            for eta in etas.chunks_exact(7).map(|e| &e[..n]) {
                let nn = dot(eta, eta);
                if nn < 1e-12 { continue; }
                let q = dot(eta, &a.mul_vec(eta)) / nn;
                prop_assert!(lo - slack <= q && q <= hi + slack);
            }
            prop_assert!(a.trace() >= n as f64 * lo - slack);
            prop_assert!(a.trace() <= n as f64 * hi + slack);
        }
    }
}
