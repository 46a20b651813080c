use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Column-centered, unit-variance copy of a design.
///
/// Means and scales are kept so coefficients fitted on the standardized
/// columns can be mapped back to the original scale.
#[derive(Debug, Clone)]
pub struct Standardized {
    n: usize,
    p: usize,
    data: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl Standardized {
    pub fn new(x: &Matrix) -> Result<Self> {
        let (n, p) = (x.rows(), x.cols());
        let mut data = Vec::with_capacity(n * p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut sq_norms = Vec::with_capacity(p);
        for j in 0..p {
            let col = x.col(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            let magnitude = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if !(sd > 1e-12 * magnitude.max(f64::MIN_POSITIVE)) || sd == 0.0 {
                return Err(Error::ZeroVariance(j));
            }
            let start = data.len();
            data.extend(col.iter().map(|v| (v - m) / sd));
            let c = &data[start..];
            sq_norms.push(dot(c, c) / n as f64);
            means.push(m);
            scales.push(sd);
        }
        Ok(Standardized {
            n,
            p,
            data,
            means,
            scales,
            sq_norms,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// `‖x̃_j‖²/n`, one up to rounding.
    #[inline]
    pub fn sq_norm(&self, j: usize) -> f64 {
        self.sq_norms[j]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }
}

/// Centered copy of `y` together with its mean.
pub fn center(y: &[f64]) -> (Vec<f64>, f64) {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - m).collect(), m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_variance_columns() {
        let x = Matrix::from_rows(&[vec![1., 10.], vec![2., 30.], vec![3., 20.]]).unwrap();
        let s = Standardized::new(&x).unwrap();
        for j in 0..2 {
            let c = s.col(j);
            assert!(c.iter().sum::<f64>().abs() < 1e-12);
            assert!((s.sq_norm(j) - 1.0).abs() < 1e-12);
        }
        assert!((s.means()[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_rejected() {
        let x = Matrix::from_rows(&[vec![1., 5.], vec![2., 5.], vec![3., 5.]]).unwrap();
        assert!(matches!(Standardized::new(&x), Err(Error::ZeroVariance(1))));
    }
}
