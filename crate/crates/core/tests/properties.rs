//! Invariants of the numerics, solvers and inference pipeline.

use proptest::prelude::*;

use hdinfer::inference::{fit_desparsified, InferenceConfig, NodewiseMethod, NodewiseOptions};
use hdinfer::numerics::{
    build_covariance, normal_cdf, normal_quantile, ols_solve, sample_mvn, Cholesky, CovarianceSpec, Matrix, RngState,
};
use hdinfer::oracle::sparsity::verify_sparsity_bounds;
use hdinfer::parallel::Execution;
use hdinfer::solvers::{lambda_max, lasso_cd, soft_threshold, LassoOptions};

fn design(seed: u64, n: usize, p: usize, rho: f64) -> Matrix {
    let sigma = build_covariance(&CovarianceSpec::Toeplitz { p, rho }).unwrap();
    sample_mvn(RngState::new(seed, 0), n, &sigma).unwrap()
}

fn response(seed: u64, x: &Matrix) -> Vec<f64> {
    let mut gen = RngState::new(seed, 7).generator();
    let p = x.cols();
    let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { gen.standard_normal() } else { 0.0 }).collect();
    let f = x.mul_vec(&beta).unwrap();
    f.iter().map(|v| v + 0.5 * gen.standard_normal()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn kkt(x: &Matrix, y: &[f64], beta: &[f64], intercept: f64, lambda: f64) -> f64 {
    let n = x.rows();
    let fitted = x.mul_vec(beta).unwrap();
    let r: Vec<f64> = (0..n).map(|i| y[i] - intercept - fitted[i]).collect();
    (0..x.cols())
        .map(|j| {
            let c = x.col(j);
            let m = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            let g = 2.0 * c.iter().zip(&r).map(|(a, b)| (a - m) / sd * b).sum::<f64>() / n as f64;
            if beta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cholesky_reconstructs_and_solves(seed in any::<u64>(), k in 1usize..9) {
        let mut gen = RngState::new(seed, 0).generator();
        let b: Vec<f64> = (0..k * k).map(|_| gen.standard_normal()).collect();
        let mut a = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                a[(i, j)] = (0..k).map(|w| b[i * k + w] * b[j * k + w]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        let chol = Cholesky::new(&a).unwrap();
        let l = chol.factor();
        let llt = l.matmul(&l.transpose()).unwrap();
        prop_assert!(llt.sub(&a).unwrap().max_abs() <= 1e-10 * a.max_abs());
        let rhs: Vec<f64> = (0..k).map(|_| gen.standard_normal()).collect();
        let sol = chol.solve(&rhs).unwrap();
        let back = a.mul_vec(&sol).unwrap();
        prop_assert!(close(&back, &rhs, 1e-9));
    }

    #[test]
    fn quantile_inverts_cdf(u in 1e-12f64..(1.0 - 1e-12)) {
        let q = normal_quantile(u).unwrap();
        // Independent inversion by bisection.
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < u { lo = mid } else { hi = mid }
        }
        prop_assert!((q - 0.5 * (lo + hi)).abs() <= 1e-9 * q.abs().max(1.0));
    }

    #[test]
    fn soft_threshold_is_prox_of_abs(z in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = soft_threshold(z, t);
        // Minimizer of ½(b − z)² + t|b|, checked against neighbours.
        let obj = |b: f64| 0.5 * (b - z).powi(2) + t * b.abs();
        prop_assert!(obj(s) <= obj(s + 1e-4) + 1e-12 && obj(s) <= obj(s - 1e-4) + 1e-12);
    }

    #[test]
    fn lasso_satisfies_kkt(seed in any::<u64>(), n in 15usize..60, p in 3usize..80, frac in 0.02f64..0.95) {
        let x = design(seed, n, p, 0.4);
        let y = response(seed, &x);
        let lambda = frac * lambda_max(&x, &y).unwrap();
        let fit = lasso_cd(&x, &y, lambda, &LassoOptions::default()).unwrap();
        let sd = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        prop_assert!(kkt(&x, &y, &fit.beta, fit.intercept, lambda) <= 1.5e-6 * sd.max(1.0));
    }

    #[test]
    fn lasso_scales_with_response(seed in any::<u64>(), c in 0.1f64..20.0) {
        let x = design(seed, 40, 25, 0.3);
        let y = response(seed, &x);
        let lambda = 0.2 * lambda_max(&x, &y).unwrap();
        let opts = LassoOptions::tight();
        let a = lasso_cd(&x, &y, lambda, &opts).unwrap();
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let b = lasso_cd(&x, &cy, c * lambda, &opts).unwrap();
        let scaled: Vec<f64> = a.beta.iter().map(|v| c * v).collect();
        prop_assert!(close(&b.beta, &scaled, 1e-8));
    }

    #[test]
    fn lasso_is_covariant_in_column_scale(seed in any::<u64>(), j in 0usize..20, a in 0.05f64..30.0) {
        let x = design(seed, 40, 20, 0.5);
        let y = response(seed, &x);
        let lambda = 0.1 * lambda_max(&x, &y).unwrap();
        let opts = LassoOptions::tight();
        let base = lasso_cd(&x, &y, lambda, &opts).unwrap();
        let mut xs = x.clone();
        xs.col_mut(j).iter_mut().for_each(|v| *v *= a);
        let fit = lasso_cd(&xs, &y, lambda, &opts).unwrap();
        let mut want = base.beta.clone();
        want[j] /= a;
        prop_assert!(close(&fit.beta, &want, 1e-7));
    }

    #[test]
    fn lasso_is_permutation_equivariant(seed in any::<u64>()) {
        let (n, p) = (35, 18);
        let x = design(seed, n, p, 0.5);
        let y = response(seed, &x);
        let lambda = 0.15 * lambda_max(&x, &y).unwrap();
        let opts = LassoOptions::tight();
        let base = lasso_cd(&x, &y, lambda, &opts).unwrap();
        let mut perm: Vec<usize> = (0..p).collect();
        RngState::new(seed, 3).generator().shuffle(&mut perm);
        let fit = lasso_cd(&x.select_columns(&perm), &y, lambda, &opts).unwrap();
        let want: Vec<f64> = perm.iter().map(|&k| base.beta[k]).collect();
        prop_assert!(close(&fit.beta, &want, 1e-7));
    }

    #[test]
    fn unpenalized_lasso_is_ols(seed in any::<u64>(), p in 2usize..10) {
        let n = 30;
        let x = design(seed, n, p, 0.3);
        let y = response(seed, &x);
        let fit = lasso_cd(&x, &y, 0.0, &LassoOptions::tight()).unwrap();
        // OLS with an intercept column.
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        cols.extend((0..p).map(|j| x.col(j).to_vec()));
        let ols = ols_solve(&Matrix::from_columns(&cols).unwrap(), &y).unwrap();
        prop_assert!(close(&fit.beta, &ols[1..], 1e-8));
        prop_assert!((fit.intercept - ols[0]).abs() <= 1e-8 * ols[0].abs().max(1.0));
    }

    #[test]
    fn sparsity_bounds_hold_for_any_gamma(seed in any::<u64>(), p in 2usize..12, r in 0.05f64..1.0) {
        let mut gen = RngState::new(seed, 0).generator();
        let rho = 0.9 * gen.uniform();
        let sigma = build_covariance(&CovarianceSpec::Toeplitz { p, rho }).unwrap();
        let gamma: Vec<f64> = (0..p).map(|_| if gen.uniform() < 0.5 { gen.standard_normal() } else { 0.0 }).collect();
        let report = verify_sparsity_bounds(&sigma, &gamma, r, None).unwrap();
        prop_assert!(report.all_hold(), "{:?}", report.checks);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn desparsified_fit_ignores_location(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let (n, p) = (40, 30);
        let x = design(seed, n, p, 0.4);
        let y = response(seed, &x);
        let config = InferenceConfig {
            lambda: Some(0.1),
            lambda_x: Some(0.2),
            execution: Execution::Sequential,
            ..Default::default()
        };
        let base = fit_desparsified(&x, &y, &config).unwrap();
        let mut xs = x.clone();
        for j in 0..p {
            let s = shift * (j as f64 - 3.0);
            xs.col_mut(j).iter_mut().for_each(|v| *v += s);
        }
        let ys: Vec<f64> = y.iter().map(|v| v + 3.0 * shift).collect();
        let moved = fit_desparsified(&xs, &ys, &config).unwrap();
        prop_assert!(close(&moved.b_hat, &base.b_hat, 1e-7));
    }

    #[test]
    fn sqrt_nodewise_runs_on_random_designs(seed in any::<u64>()) {
        let x = design(seed, 50, 40, 0.5);
        let y = response(seed, &x);
        let config = InferenceConfig {
            lambda: Some(0.1),
            nodewise: NodewiseOptions::with_method(NodewiseMethod::SqrtLasso),
            execution: Execution::Sequential,
            ..Default::default()
        };
        let fit = fit_desparsified(&x, &y, &config).unwrap();
        prop_assert!(fit.b_hat.iter().all(|v| v.is_finite()));
        prop_assert!(fit.nodewise.iter().all(|f| f.zx_inner > 0.0));
    }
}
