use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the seven toy calibration problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: u32,
    pub tau_ranges: Vec<(f64, f64)>,
    pub x_ranges: Vec<(f64, f64)>,
    pub tau_star: Vec<f64>,
    pub noise_variance: f64,
    /// Whether the field data carry the function's discrepancy term.
    pub has_bias: bool,
    pub n_computer: usize,
    pub n_experimental: usize,
}

impl TestFunction {
    pub fn q(&self) -> usize {
        self.tau_ranges.len()
    }
    pub fn p(&self) -> usize {
        self.x_ranges.len()
    }

    pub fn eval(&self, tau: &[f64], x: &[f64]) -> Result<f64> {
        eval_test_function(self.id, tau, x)
    }

    /// Discrepancy `b(x)`; zero for the exact problems.
    pub fn bias(&self, x: &[f64]) -> f64 {
        match self.id {
            6 => x[1] * (5.0 * x[1]).sin(),
            7 => (10.0 * x[0] * x[0] + 4.0 * x[1] * x[1]) / (50.0 * x[0] * x[1] + 10.0),
            _ => 0.0,
        }
    }
}

pub const TEST_FUNCTION_IDS: [u32; 7] = [1, 2, 3, 4, 5, 6, 7];

pub fn test_function(id: u32) -> Result<TestFunction> {
    let f = |tau_ranges: &[(f64, f64)], x_ranges: &[(f64, f64)], tau_star: &[f64], noise_variance: f64, n: usize| TestFunction {
        id,
        tau_ranges: tau_ranges.to_vec(),
        x_ranges: x_ranges.to_vec(),
        tau_star: tau_star.to_vec(),
        noise_variance,
        has_bias: id >= 6,
        n_computer: n,
        n_experimental: n,
    };
    Ok(match id {
        1 => f(&[(0.0, 5.0), (0.0, 4.0)], &[(-3.0, 3.0), (-3.0, 3.0), (0.0, 6.0)], &[2.0, 2.0], 1.0, 30),
        2 => f(&[(0.0, 5.0), (0.0, 4.0), (1.0, 5.0)], &[(-3.0, 4.0), (-3.0, 3.0), (0.0, 6.0), (1.0, 5.0)], &[2.0, 1.0, 3.0], 1.0, 30),
        3 => f(&[(0.0, 4.0), (1.0, 4.0)], &[(-0.5, 1.5), (-0.5, 0.5), (-0.5, 1.5), (-0.5, 0.5)], &[2.0, 3.0], 0.1, 30),
        4 => f(
            &[(5.0, 8.0), (1.0, 3.0)],
            &[(6370.0, 115600.0), (990.0, 1110.0), (700.0, 820.0), (100.0, 50000.0), (0.05, 0.15), (1120.0, 1680.0), (9855.0, 12045.0), (63.1, 116.0)],
            &[2.0 * std::f64::consts::PI, 2.0],
            2.0,
            30,
        ),
        5 => f(&[(0.0, 5.0), (0.0, 5.0), (0.0, 7.0), (0.0, 5.0)], &[(0.0, 3.0), (0.0, 3.0), (0.0, 2.0), (0.0, 2.0)], &[1.0, 2.0, 3.0, 2.0], 4.0, 30),
        6 => f(&[(1.0, 8.0), (1.0, 8.0)], &[(0.0, 1.0), (0.0, 1.0)], &[4.0, 4.0], 0.02 * 0.02, 20),
        7 => f(&[(0.1, 5.0), (0.1, 5.0), (0.1, 5.0)], &[(0.0, 1.0), (0.0, 1.0)], &[2.0, 1.0, 3.0], 0.25, 20),
        _ => return Err(Error::UnknownTestFunction(id)),
    })
}

fn domain(id: u32, what: &str) -> Error {
    Error::InvalidArgument(format!("test function {id}: {what}"))
}

/// Code output `Y(tau, x)` of a test function.
pub fn eval_test_function(id: u32, tau: &[f64], x: &[f64]) -> Result<f64> {
    let spec = test_function(id)?;
    if tau.len() != spec.q() {
        return Err(Error::dim("test function tau", spec.q(), tau.len()));
    }
    if x.len() != spec.p() {
        return Err(Error::dim("test function x", spec.p(), x.len()));
    }
    let t = tau;
    let v = match id {
        1 => t[0] * (t[1] + x[0]).exp() + t[0] * x[1] * x[1] - t[1] * x[2] * x[2],
        2 => {
            if !(x[3] > 0.0) {
                return Err(domain(id, "x4 must be positive"));
            }
            t[0] * (t[1] + x[0] + t[2]).exp() + t[0] * t[2] * x[1] * x[1] - t[1] * x[2] * x[2] - t[2] * x[3].ln()
        }
        3 => t[0] * (x[0] + x[1]).abs().exp() + t[1] * (x[2] + 1.2 * x[3] + 1.0) / 2.5 + 3.0 * t[1] * (x[1] + x[2]).cos(),
        4 => {
            if !(x[3] > 0.0 && x[4] > 0.0) || x[3] == x[4] {
                return Err(domain(id, "x4/x5 must be positive and different from 1"));
            }
            let lr = (x[3] / x[4]).ln();
            let denom = lr * (1.0 + t[1] * x[0] * x[5] / (lr * x[1] * x[1] * x[6]) + x[0] / x[7]);
            t[0] * x[0] * (x[1] - x[2]) / denom
        }
        5 => {
            use std::f64::consts::PI;
            t[0] * x[0] * x[0] + t[1] * x[1] + t[2] * (x[2] * PI).cos() + t[3] * (x[3] * PI).sin()
        }
        6 => t[0] * x[0] * x[0] + t[1] * x[1],
        7 => {
            let (x1, x2) = (x[0], x[1]);
            if x1 < 0.0 || x2 < 0.0 {
                return Err(domain(id, "inputs must be nonnegative"));
            }
            let a = 1.0 - (-1.0 / (2.0 * x2)).exp();
            let num = 100.0 * t[0] * x1.powi(3) + 1900.0 * x1 * x1 + 2092.0 * x1 + 60.0;
            let den = 100.0 * t[1] * x1.powi(3) + 500.0 * x1 * x1 + 4.0 * x1 + 20.0;
            let e = t[2] / 10.0;
            a * num / den + 5.0 * (-t[0]).exp() * x1.powf(e) / (100.0 * (x2.powf(2.0 + e) + 1.0))
        }
        _ => unreachable!("id validated above"),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(id, "value is not finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test1_reference_value() {
        let v = eval_test_function(1, &[2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((v - 14.778_112_2).abs() < 1e-7);
    }

    #[test]
    fn test6_reference_value() {
        assert_eq!(eval_test_function(6, &[4.0, 4.0], &[1.0, 1.0]).unwrap(), 8.0);
    }

    #[test]
    fn test2_log_domain() {
        assert!(eval_test_function(2, &[2.0, 1.0, 3.0], &[0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(eval_test_function(2, &[2.0, 1.0, 3.0], &[0.0, 0.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn unknown_id() {
        assert_eq!(eval_test_function(9, &[], &[]).unwrap_err(), Error::UnknownTestFunction(9));
    }

    #[test]
    fn default_run_counts() {
        for id in 1..=5 {
            let f = test_function(id).unwrap();
            assert_eq!((f.n_computer, f.n_experimental), (30, 30));
            assert!(!f.has_bias);
        }
        for id in 6..=7 {
            let f = test_function(id).unwrap();
            assert_eq!((f.n_computer, f.n_experimental), (20, 20));
        }
    }
}
