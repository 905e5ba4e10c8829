use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: u32, d2: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let (a, b) = (d1 as f64, d2 as f64);
    let z = a * x / (a * x + b);
    beta_reg(a / 2.0, b / 2.0, z)
}

/// Upper-`alpha` point of the F distribution: the `x` with `P(F > x) = alpha`.
///
/// Inverts the regularized incomplete beta function by bisection on the
/// beta-scale variable `z = d1 x / (d1 x + d2)`.
pub fn f_quantile(alpha: f64, d1: u32, d2: u32) -> Result<f64> {
    if d1 < 1 || d2 < 1 {
        return Err(Error::InvalidArgument(format!("F degrees of freedom must be >= 1, got ({d1}, {d2})")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (a, b) = (d1 as f64 / 2.0, d2 as f64 / 2.0);
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut z = 0.5;
    for _ in 0..200 {
        z = 0.5 * (lo + hi);
        let c = beta_reg(a, b, z);
        if c == target {
            break;
        }
        if c < target {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= f64::EPSILON * z {
            break;
        }
    }
    Ok(d2 as f64 * z / (d1 as f64 * (1.0 - z)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// F density integrated by composite Simpson on a substituted variable.
    /// Independent of the incomplete beta routine.
    fn cdf_by_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
        let ln_beta =
            statrs::function::gamma::ln_gamma(d1 / 2.0) + statrs::function::gamma::ln_gamma(d2 / 2.0) - statrs::function::gamma::ln_gamma((d1 + d2) / 2.0);
        let dens = |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * t.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * t / d2).ln() - ln_beta).exp()
        };
        // t = u^2 removes the t^(d1/2-1) endpoint singularity for d1 >= 1.
        let n = 20_000;
        let umax = x.sqrt();
        let h = umax / n as f64;
        let g = |u: f64| 2.0 * u * dens(u * u);
        let mut s = g(0.0) + g(umax);
        for i in 1..n {
            let u = i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(u);
        }
        s * h / 3.0
    }

    #[test]
    fn upper_five_percent_2_28() {
        let q = f_quantile(0.05, 2, 28).unwrap();
        assert!((q - 3.340).abs() < 0.01, "{q}");
        assert!((cdf_by_quadrature(q, 2.0, 28.0) - 0.95).abs() < 1e-6);
    }

    #[test]
    fn median_of_f_1_1_is_one() {
        let q = f_quantile(0.5, 1, 1).unwrap();
        assert!((q - 1.0).abs() < 1e-12, "{q}");
    }

    #[test]
    fn alpha_near_one_goes_to_zero() {
        let q = f_quantile(1.0 - 1e-9, 3, 10).unwrap();
        assert!(q < 1e-3);
    }

    #[test]
    fn monotone_in_alpha() {
        let mut prev = f64::INFINITY;
        for a in [0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
            let q = f_quantile(a, 4, 38).unwrap();
            assert!(q < prev);
            prev = q;
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(f_quantile(0.05, 0, 3).is_err());
        assert!(f_quantile(1.5, 1, 3).is_err());
    }

    #[test]
    fn round_trips_through_cdf() {
        for &(a, d1, d2) in &[(0.05, 4, 38), (0.01, 1, 5), (0.2, 10, 3), (0.5, 2, 2)] {
            let q = f_quantile(a, d1, d2).unwrap();
            assert!((f_cdf(q, d1, d2) - (1.0 - a)).abs() < 1e-6);
        }
    }
}
