//! Tuning-parameter estimation: ANLS, separated MLE, full MLE, the Max-min
//! iteration, constant bias correction, and F-based confidence regions.
//!
//! All methods take a [`CalibrationDataset`](crate::CalibrationDataset); the
//! search box for `tau` is its `tau_bounds`.

mod full_mle;
mod maxmin;
mod region;
mod search;
mod smle;

use serde::{Deserialize, Serialize};

use crate::datamodel::ExperimentalData;
use crate::error::{Error, Result};
use crate::gpcore::{predict, FitOptions, FittedGP, PredictorVariant};
use crate::optimizer::MinimizeOptions;

pub use full_mle::{full_mle, full_neg2loglik};
pub use maxmin::{anls, maxmin, ExperimentalRows, MaxMinConfig, StopReason, StopRule};
pub use region::{confidence_region, region_threshold, ConfidenceRegion, GridSpec, RegionMode, RegionPoint};
pub use smle::{conditional_moments, smle, ConditionalMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Anls,
    Smle,
    FullMle,
    MaxMin,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Anls => "ANLS",
            Method::Smle => "SMLE",
            Method::FullMle => "FullMLE",
            Method::MaxMin => "MaxMin",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Constant multiplicative and additive correction `rho * yhat + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrection {
    pub rho: f64,
    pub delta: f64,
}

impl BiasCorrection {
    pub const IDENTITY: Self = Self { rho: 1.0, delta: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub tau: Vec<f64>,
    pub rss_p: f64,
}

/// Result of one tuning run.
///
/// `rss_p` is the residual sum of squares at `tau_hat` computed with
/// `fitted_gp` and `predictor_variant` (and `bias` when present); the last
/// trace entry repeats `(tau_hat, rss_p)`.
#[derive(Debug, Clone)]
pub struct TuningEstimate {
    pub tau_hat: Vec<f64>,
    pub rss_p: f64,
    pub method: Method,
    pub predictor_variant: PredictorVariant,
    pub bias: Option<BiasCorrection>,
    pub iteration_trace: Vec<TraceEntry>,
    pub fitted_gp: FittedGP,
    /// Set by Max-min only.
    pub stop_reason: Option<StopReason>,
    /// Number of random perturbations applied by Max-min.
    pub fluctuations: usize,
    /// Whether RSS_P was minimized with the experimental rows of the combined
    /// fit moved to each candidate `tau` (see [`ExperimentalRows`]).
    pub rows_follow_tau: bool,
}

impl TuningEstimate {
    pub fn iterations(&self) -> usize {
        self.iteration_trace.last().map_or(0, |e| e.iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub fit: FitOptions,
    /// Number of starts for every RSS_P (and likelihood-in-tau) minimization.
    pub tau_multistart: usize,
    pub minimize: MinimizeOptions,
    pub seed: u64,
    /// Estimate `(rho, delta)` jointly with `tau`.
    pub bias_correction: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { fit: FitOptions::default(), tau_multistart: 10, minimize: MinimizeOptions::default(), seed: 0x0C0D_E7A0, bias_correction: false }
    }
}

/// `sum_i (y_Ei - (rho * yhat(tau, x_Ei) + delta))^2`.
pub fn rss_p(tau: &[f64], fitted: &FittedGP, variant: PredictorVariant, exp: &ExperimentalData, bias: Option<BiasCorrection>) -> Result<f64> {
    let q = tau.len();
    if q + exp.p() != fitted.dim() {
        return Err(Error::dim("tau plus experimental inputs", fitted.dim(), q + exp.p()));
    }
    let b = bias.unwrap_or(BiasCorrection::IDENTITY);
    let mut x0 = tau.to_vec();
    x0.resize(fitted.dim(), 0.0);
    let mut total = 0.0;
    for i in 0..exp.n() {
        for (k, v) in exp.x_inputs().row(i).iter().enumerate() {
            x0[q + k] = *v;
        }
        let yhat = predict(fitted, &x0, variant)?;
        let r = exp.responses()[i] - (b.rho * yhat + b.delta);
        total += r * r;
    }
    Ok(total)
}

/// `100 (anls - maxmin) / anls`.
pub fn relative_improvement(rss_anls_mean: f64, rss_maxmin_mean: f64) -> Result<f64> {
    if !(rss_anls_mean > 0.0) {
        return Err(Error::InvalidArgument("ANLS mean RSS_P must be positive".into()));
    }
    Ok(100.0 * (rss_anls_mean - rss_maxmin_mean) / rss_anls_mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_improvement_arithmetic() {
        assert_eq!(relative_improvement(2.0, 1.0).unwrap(), 50.0);
        assert_eq!(relative_improvement(3.5, 3.5).unwrap(), 0.0);
        assert!(relative_improvement(0.0, 1.0).is_err());
    }
}
