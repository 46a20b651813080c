//! Dense linear algebra, covariance constructors and seeded Gaussian sampling.

pub mod covariance;
pub mod linalg;
pub mod matrix;
pub mod normal;
pub mod rng;
pub mod sampling;

pub use covariance::{build_covariance, CovarianceSpec};
pub use linalg::{cholesky, ols_solve, Cholesky};
pub use matrix::{axpy, check_vector, dot, mean, norm1, norm2, norm_inf, Matrix};
pub use normal::{normal_cdf, normal_quantile, normal_sf, two_sided_p_value};
pub use rng::{hash_words, splitmix64, Generator, RngState};
pub use sampling::{sample_mvn, sample_normal, MvnSampler};
