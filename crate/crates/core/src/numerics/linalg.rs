use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry are rejected.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("cholesky input is not symmetric".into()));
        }
        let n = a.rows();
        let max_diag = a.diag().iter().fold(0.0_f64, |m, v| m.max(*v));
        let tol = PIVOT_TOLERANCE * max_diag;
        let mut l = Matrix::zeros(n, n);
        // Left-looking column variant: column j of L from column j of A
        // minus contributions of the columns already computed.
        let mut work = vec![0.0; n];
        for j in 0..n {
            let seg = &mut work[j..];
            for (i, w) in seg.iter_mut().enumerate() {
                *w = a[(j + i, j)];
            }
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk != 0.0 {
                    axpy(-ljk, &l.col(k)[j..], seg);
                }
            }
            let pivot = seg[0];
            if !(pivot > tol) {
                return Err(Error::NotPositiveDefinite {
                    index: j + 1,
                    pivot,
                });
            }
            let d = pivot.sqrt();
            let col = &mut l.col_mut(j)[j..];
            col[0] = d;
            for i in 1..col.len() {
                col[i] = seg[i] / d;
            }
        }
        Ok(Cholesky { factor: l })
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn into_factor(self) -> Matrix {
        self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for j in 0..n {
            x[j] /= self.factor[(j, j)];
            let xj = x[j];
            if xj != 0.0 {
                let col = &self.factor.col(j)[j + 1..];
                for (xi, lij) in x[j + 1..].iter_mut().zip(col) {
                    *xi -= lij * xj;
                }
            }
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for j in (0..n).rev() {
            let col = &self.factor.col(j)[j + 1..];
            let s = dot(col, &x[j + 1..]);
            x[j] = (x[j] - s) / self.factor[(j, j)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "rhs of length {} for a system of size {}",
                b.len(),
                self.dim()
            )));
        }
        Ok(self.solve_upper(&self.solve_lower(b)))
    }

    /// Explicit inverse; only for small systems.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve_upper(&self.solve_lower(&e));
            inv.col_mut(j).copy_from_slice(&col);
        }
        inv
    }
}

pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    Cholesky::new(a).map(Cholesky::into_factor)
}

/// Least-squares solution of `x β ≈ y` by Householder QR.
pub fn ols_solve(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::Dimension(format!("{} responses for {n} rows", y.len())));
    }
    if n < p {
        return Err(Error::RankDeficient(format!(
            "{n} rows cannot determine {p} coefficients"
        )));
    }
    let mut a = x.clone();
    let mut rhs = y.to_vec();
    let mut rdiag = vec![0.0; p];
    let scale = x.max_abs();
    for k in 0..p {
        let col = &a.col(k)[k..];
        let alpha = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha <= 1e-13 * scale * (n as f64).sqrt() {
            return Err(Error::RankDeficient(format!("column {} is linearly dependent", k + 1)));
        }
        let alpha = if col[0] > 0.0 { -alpha } else { alpha };
        // Householder vector v = x - alpha e1, stored in place.
        {
            let c = &mut a.col_mut(k)[k..];
            c[0] -= alpha;
        }
        let v: Vec<f64> = a.col(k)[k..].to_vec();
        let vnorm2 = dot(&v, &v);
        rdiag[k] = alpha;
        if vnorm2 > 0.0 {
            for j in k + 1..p {
                let c = &mut a.col_mut(j)[k..];
                let s = 2.0 * dot(&v, c) / vnorm2;
                axpy(-s, &v, c);
            }
            let s = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
            axpy(-s, &v, &mut rhs[k..]);
        }
    }
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in k + 1..p {
            s -= a[(k, j)] * beta[j];
        }
        beta[k] = s / rdiag[k];
    }
    Ok(beta)
}
