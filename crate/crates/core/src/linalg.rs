//! Minimal dense linear algebra for the small (3x3 to 5x5) symmetric systems
//! that arise in the covariance estimators. Gaussian elimination with partial
//! pivoting is ample at these sizes; no external solver is warranted.

use crate::error::{Error, Result};

/// Square row-major matrix of small fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    n: usize,
    a: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Mat::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n);
            m.a[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
    }

    /// Adds `scale * x xᵀ` to the matrix.
    pub fn add_outer(&mut self, x: &[f64], scale: f64) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let si = scale * x[i];
            for j in 0..n {
                self.a[i * n + j] += si * x[j];
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.a {
            *v *= k;
        }
    }

    pub fn add(&mut self, other: &Mat, k: f64) {
        debug_assert_eq!(self.n, other.n);
        for (v, w) in self.a.iter_mut().zip(&other.a) {
            *v += k * w;
        }
    }

    /// Replaces the matrix with (M + Mᵀ)/2.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self.a[i * n + j] + self.a[j * n + i]);
                self.a[i * n + j] = m;
                self.a[j * n + i] = m;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a[i * n + j] * x[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn mul_mat(&self, other: &Mat) -> Mat {
        let n = self.n;
        debug_assert_eq!(other.n, n);
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * other.a[k * n + j];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Solves A x = b by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Singular {
                    context: "linear solve".to_string(),
                    cond: f64::INFINITY,
                });
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in (col + 1)..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                context: "linear solve".to_string(),
                cond: f64::INFINITY,
            });
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Mat> {
        let n = self.n;
        let mut inv = Mat::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv.a[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        Ok(inv)
    }

    /// Frobenius-norm condition estimate ‖A‖_F · ‖A⁻¹‖_F; infinite when the
    /// matrix is not invertible.
    pub fn condition_estimate(&self) -> f64 {
        match self.inverse() {
            Ok(inv) => self.frobenius_norm() * inv.frobenius_norm(),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn to_array3(&self) -> [[f64; 3]; 3] {
        assert_eq!(self.n, 3);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = self.get(i, j);
            }
        }
        out
    }

    pub fn to_array4(&self) -> [[f64; 4]; 4] {
        assert_eq!(self.n, 4);
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = self.get(i, j);
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_recovers_known_solution() {
        let a = Mat::from_rows(&[&[4.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 2.0]]);
        let x_true = [1.0, -2.0, 3.0];
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_relative_eq!(xi, ti, max_relative = 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = Mat::from_rows(&[&[2.0, 0.5, 0.1], &[0.5, 1.5, -0.2], &[0.1, -0.2, 0.8]]);
        let inv = a.inverse().unwrap();
        let prod = a.mul_mat(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod.get(i, j), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(a.solve(&[1.0, 1.0]).is_err());
        assert!(!a.condition_estimate().is_finite());
    }

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut a = Mat::from_rows(&[&[1.0, 2.0], &[4.0, 3.0]]);
        a.symmetrize();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
    }
}
