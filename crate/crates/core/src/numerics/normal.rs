use libm::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value `2 (1 - Φ(|z|))`.
pub fn two_sided_p_value(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}

// Acklam's rational approximation, relative error 1.15e-9 before refinement.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549671007887792e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Quantile for `0 < u <= 0.5`.
fn lower_quantile(u: f64) -> f64 {
    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // One Halley step against the accurate CDF.
    let e = normal_cdf(x) - u;
    let step = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - step / (1.0 + 0.5 * x * step)
}

/// Inverse standard normal CDF.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1), got {u}"
        )));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    // 1 - u is exact for u in [0.5, 1), so the reflection is exact too.
    Ok(if u < 0.5 {
        lower_quantile(u)
    } else {
        -lower_quantile(1.0 - u)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_and_domain() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(bad).is_err());
        }
    }

    #[test]
    fn p_values() {
        assert_eq!(two_sided_p_value(0.0), 1.0);
        assert!((two_sided_p_value(1.959963984540054) - 0.05).abs() < 1e-12);
    }
}
