use super::linalg::Cholesky;
use super::matrix::Matrix;
use super::rng::RngState;
use crate::error::{Error, Result};

/// Draws rows `x = L g` with `g ~ N(0, I)` and `L` the Cholesky factor of `Σ`.
///
/// The factor is computed once. Each row of `L` is only multiplied from its
/// first structurally nonzero column on, which keeps sparse-profile
/// covariances (identity, single pair, blocks) at O(p) per row.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    factor: Matrix,
    row_start: Vec<usize>,
    // Row-major copy of the lower triangle for cache-friendly row products.
    rows: Vec<Vec<f64>>,
}

impl MvnSampler {
    pub fn new(sigma: &Matrix) -> Result<Self> {
        let factor = Cholesky::new(sigma)?.into_factor();
        let p = factor.rows();
        let mut row_start = Vec::with_capacity(p);
        let mut rows = Vec::with_capacity(p);
        for i in 0..p {
            let start = (0..=i).find(|&k| factor[(i, k)] != 0.0).unwrap_or(i);
            row_start.push(start);
            rows.push((start..=i).map(|k| factor[(i, k)]).collect());
        }
        Ok(MvnSampler {
            factor,
            row_start,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    /// `L g` for a single standard-normal vector.
    pub fn transform(&self, g: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let start = self.row_start[i];
            *o = self.rows[i]
                .iter()
                .zip(&g[start..=i])
                .map(|(l, z)| l * z)
                .sum();
        }
    }

    /// Coordinates `idx` of `L g`.
    pub fn transform_at(&self, g: &[f64], idx: &[usize], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(idx) {
            let start = self.row_start[i];
            *o = self.rows[i]
                .iter()
                .zip(&g[start..=i])
                .map(|(l, z)| l * z)
                .sum();
        }
    }

    /// `n` rows; the variates are consumed row by row from the stream.
    pub fn sample(&self, rng: RngState, n: usize) -> Result<Matrix> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        let p = self.dim();
        let mut gen = rng.generator();
        let mut out = Matrix::zeros(n, p);
        let mut g = vec![0.0; p];
        let mut x = vec![0.0; p];
        for i in 0..n {
            gen.fill_normal(&mut g);
            self.transform(&g, &mut x);
            for (j, v) in x.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }
}

pub fn sample_mvn(rng: RngState, n: usize, sigma: &Matrix) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    MvnSampler::new(sigma)?.sample(rng, n)
}

/// `n` i.i.d. draws from `N(0, sd²)`.
pub fn sample_normal(rng: RngState, n: usize, sd: f64) -> Vec<f64> {
    let mut gen = rng.generator();
    (0..n).map(|_| sd * gen.standard_normal()).collect()
}
