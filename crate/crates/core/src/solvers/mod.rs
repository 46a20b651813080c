//! Penalized regression engines.
//!
//! All Lasso-type solvers center the response and standardize the columns
//! internally; coefficients are reported on the original scale together
//! with the implied intercept.

pub mod basis_pursuit;
pub mod cv;
pub mod lasso;
pub mod sqrt_lasso;
pub mod standardize;

pub use basis_pursuit::{basis_pursuit, min_norm_solution, BasisPursuitOptions, BasisPursuitSolution};
pub use cv::{cv_lambda, cv_lambda_with, log_grid, CvOptions, LambdaPath};
pub use lasso::{lambda_max, lasso_cd, lasso_cd_traced, soft_threshold, LassoOptions, LassoSolution};
pub use sqrt_lasso::{sqrt_lasso, SqrtLassoOptions, SqrtLassoSolution};
pub use standardize::Standardized;
