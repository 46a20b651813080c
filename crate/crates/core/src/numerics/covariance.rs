use serde::{Deserialize, Serialize};

use super::linalg::Cholesky;
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Structure of a design covariance. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovarianceSpec {
    Identity { p: usize },
    /// Unit diagonal plus one symmetric off-diagonal pair.
    SinglePair { p: usize, pair: (usize, usize), rho: f64 },
    /// `Σ_{jk} = rho^{|j-k|}`.
    Toeplitz { p: usize, rho: f64 },
    /// Equicorrelated blocks with unit diagonal; blocks are disjoint index sets,
    /// coordinates outside every block are independent.
    BlockDiagonal { p: usize, blocks: Vec<Vec<usize>>, rho: f64 },
    Explicit { matrix: Matrix },
}

impl CovarianceSpec {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Identity { p }
            | CovarianceSpec::SinglePair { p, .. }
            | CovarianceSpec::Toeplitz { p, .. }
            | CovarianceSpec::BlockDiagonal { p, .. } => *p,
            CovarianceSpec::Explicit { matrix } => matrix.rows(),
        }
    }

    /// Same structure at a different dimension; explicit matrices cannot be resized.
    pub fn with_dim(&self, p: usize) -> Result<CovarianceSpec> {
        Ok(match self {
            CovarianceSpec::Identity { .. } => CovarianceSpec::Identity { p },
            CovarianceSpec::SinglePair { pair, rho, .. } => CovarianceSpec::SinglePair {
                p,
                pair: *pair,
                rho: *rho,
            },
            CovarianceSpec::Toeplitz { rho, .. } => CovarianceSpec::Toeplitz { p, rho: *rho },
            CovarianceSpec::BlockDiagonal { blocks, rho, .. } => CovarianceSpec::BlockDiagonal {
                p,
                blocks: blocks.clone(),
                rho: *rho,
            },
            CovarianceSpec::Explicit { matrix } if matrix.rows() == p => self.clone(),
            CovarianceSpec::Explicit { .. } => {
                return Err(Error::InvalidArgument(
                    "an explicit covariance cannot change dimension".into(),
                ))
            }
        })
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|rho| must be < 1, got {rho}")));
    }
    Ok(())
}

pub fn build_covariance(spec: &CovarianceSpec) -> Result<Matrix> {
    let p = spec.dim();
    if p == 0 {
        return Err(Error::InvalidArgument("covariance dimension must be >= 1".into()));
    }
    match spec {
        CovarianceSpec::Identity { .. } => Ok(Matrix::identity(p)),
        CovarianceSpec::SinglePair { pair: (a, b), rho, .. } => {
            check_rho(*rho)?;
            if *a >= p || *b >= p || a == b {
                return Err(Error::InvalidArgument(format!(
                    "pair ({a}, {b}) invalid for dimension {p}"
                )));
            }
            let mut m = Matrix::identity(p);
            m[(*a, *b)] = *rho;
            m[(*b, *a)] = *rho;
            Ok(m)
        }
        CovarianceSpec::Toeplitz { rho, .. } => {
            check_rho(*rho)?;
            let mut m = Matrix::zeros(p, p);
            for j in 0..p {
                for k in 0..p {
                    m[(j, k)] = rho.powi(j.abs_diff(k) as i32);
                }
            }
            Ok(m)
        }
        CovarianceSpec::BlockDiagonal { blocks, rho, .. } => {
            let mut m = Matrix::identity(p);
            let mut seen = vec![false; p];
            for block in blocks {
                // Equicorrelation is SPD iff -1/(b-1) < rho < 1.
                let b = block.len() as f64;
                if b > 1.0 && !(*rho > -1.0 / (b - 1.0) && *rho < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "rho {rho} is not positive definite for a block of size {}",
                        block.len()
                    )));
                }
                for &j in block {
                    if j >= p || seen[j] {
                        return Err(Error::InvalidArgument(format!(
                            "block index {j} out of range or repeated"
                        )));
                    }
                    seen[j] = true;
                }
                for &j in block {
                    for &k in block {
                        if j != k {
                            m[(j, k)] = *rho;
                        }
                    }
                }
            }
            Ok(m)
        }
        CovarianceSpec::Explicit { matrix } => {
            if !matrix.is_symmetric(1e-12) {
                return Err(Error::InvalidArgument("explicit covariance is not symmetric".into()));
            }
            Cholesky::new(matrix)?;
            Ok(matrix.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toeplitz_entries() {
        let id = build_covariance(&CovarianceSpec::Toeplitz { p: 3, rho: 0.0 }).unwrap();
        assert_eq!(id, Matrix::identity(3));
        let t = build_covariance(&CovarianceSpec::Toeplitz { p: 3, rho: 0.8 }).unwrap();
        assert!((t[(0, 2)] - 0.64).abs() < 1e-15);
        assert!(t.is_symmetric(0.0));
    }

    #[test]
    fn single_pair_entries() {
        // Pair (3, 4) in one-based indexing.
        let m = build_covariance(&CovarianceSpec::SinglePair {
            p: 5,
            pair: (2, 3),
            rho: 0.8,
        })
        .unwrap();
        assert_eq!(m[(2, 3)], 0.8);
        assert_eq!(m[(3, 2)], 0.8);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m.diag(), vec![1.0; 5]);
    }

    #[test]
    fn block_diagonal_structure() {
        let m = build_covariance(&CovarianceSpec::BlockDiagonal {
            p: 5,
            blocks: vec![vec![0, 1], vec![2, 3, 4]],
            rho: 0.5,
        })
        .unwrap();
        assert_eq!(m[(0, 1)], 0.5);
        assert_eq!(m[(2, 4)], 0.5);
        assert_eq!(m[(1, 2)], 0.0);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(build_covariance(&CovarianceSpec::Toeplitz { p: 3, rho: 1.0 }).is_err());
        assert!(build_covariance(&CovarianceSpec::Identity { p: 0 }).is_err());
        let bad = Matrix::from_rows(&[vec![1., 2.], vec![2., 1.]]).unwrap();
        match build_covariance(&CovarianceSpec::Explicit { matrix: bad }) {
            Err(Error::NotPositiveDefinite { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
