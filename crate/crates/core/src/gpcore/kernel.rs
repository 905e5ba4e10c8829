use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian correlation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// One `theta` shared by every coordinate (Model 1).
    CommonTheta,
    /// One `theta_i` per coordinate (Model 2).
    SeparableTheta,
}

/// Surrogate model choice exposed to callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    Model1,
    Model2,
}

impl Model {
    pub fn kernel_kind(self) -> KernelKind {
        match self {
            Model::Model1 => KernelKind::CommonTheta,
            Model::Model2 => KernelKind::SeparableTheta,
        }
    }

    pub fn theta_len(self, d: usize) -> usize {
        match self {
            Model::Model1 => 1,
            Model::Model2 => d,
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Model1 => write!(f, "model1"),
            Model::Model2 => write!(f, "model2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub theta: Vec<f64>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, theta: Vec<f64>) -> Result<Self> {
        if kind == KernelKind::CommonTheta && theta.len() != 1 {
            return Err(Error::dim("common-theta kernel", 1, theta.len()));
        }
        let k = Self { kind, theta };
        k.check_theta()?;
        Ok(k)
    }

    /// Model 1 kernel. Panics on negative `theta`.
    pub fn common(theta: f64) -> Self {
        Self::new(KernelKind::CommonTheta, vec![theta]).expect("theta must be nonnegative")
    }

    fn check_theta(&self) -> Result<()> {
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("kernel parameters must be finite".into()));
        }
        if self.theta.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidArgument("theta must be nonnegative".into()));
        }
        Ok(())
    }

    /// Checks the parameter vector against input dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        self.check_theta()?;
        if self.kind == KernelKind::SeparableTheta && self.theta.len() != d {
            return Err(Error::dim("separable-theta kernel", d, self.theta.len()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn correlation_slices(&self, t: &[f64], u: &[f64]) -> f64 {
        let s: f64 = match self.kind {
            KernelKind::CommonTheta => self.theta[0] * t.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            KernelKind::SeparableTheta => t.iter().zip(u).zip(&self.theta).map(|((a, b), th)| th * (a - b) * (a - b)).sum(),
        };
        (-s).exp()
    }
}

/// `exp(-sum_i theta_i |t_i - u_i|^2)`.
pub fn kernel_eval(spec: &KernelSpec, t: &[f64], u: &[f64]) -> Result<f64> {
    if t.len() != u.len() {
        return Err(Error::dim("kernel arguments", t.len(), u.len()));
    }
    spec.validate(t.len())?;
    Ok(spec.correlation_slices(t, u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_correlate_fully() {
        let k = KernelSpec::new(KernelKind::SeparableTheta, vec![3.0, 0.1]).unwrap();
        assert_eq!(kernel_eval(&k, &[0.4, 2.0], &[0.4, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn unit_distance_common_theta() {
        let v = kernel_eval(&KernelSpec::common(1.0), &[0.0], &[1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn separable_with_equal_thetas_matches_common() {
        let c = 0.7;
        let sep = KernelSpec::new(KernelKind::SeparableTheta, vec![c; 3]).unwrap();
        let com = KernelSpec::common(c);
        let (t, u) = ([0.1, 0.5, 0.9], [0.3, 0.2, 0.4]);
        let a = kernel_eval(&sep, &t, &u).unwrap();
        let b = kernel_eval(&com, &t, &u).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn negative_theta_rejected() {
        assert!(KernelSpec::new(KernelKind::CommonTheta, vec![-0.1]).is_err());
    }

    #[test]
    fn symmetric() {
        let k = KernelSpec::new(KernelKind::SeparableTheta, vec![1.0, 4.0]).unwrap();
        let a = kernel_eval(&k, &[0.1, 0.2], &[0.8, -0.3]).unwrap();
        let b = kernel_eval(&k, &[0.8, -0.3], &[0.1, 0.2]).unwrap();
        assert_eq!(a, b);
    }
}
