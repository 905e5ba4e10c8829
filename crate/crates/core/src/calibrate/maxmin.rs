use serde::{Deserialize, Serialize};

use super::search::{RssMinimum, RssSearch, TauSpace, TAG_FLUCTUATION, TAG_INITIAL, TAG_STEP4};
use super::{rss_p, BiasCorrection, CalibrationOptions, Method, TraceEntry, TuningEstimate};
use crate::datamodel::CalibrationDataset;
use crate::error::{Error, Result};
use crate::gpcore::{fit_mle, FittedGP, Model, PredictorVariant, Training};
use crate::optimizer::{derive_stream_id, rng_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Rule 1 only.
    MaxIter,
    /// Rules 1 and 2.
    MinImprovement,
    /// Rules 1 and 3.
    MinRelImprovement,
    /// Rules 1, 2 and 3.
    All,
}

/// Where the experimental rows of the combined surrogate sit while Step 4
/// searches over `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentalRows {
    /// At the candidate `tau`, so that `x0` and `X_E` share the same tuning
    /// columns; hyperparameters and `beta` stay at their Step 3 values.
    FollowCandidate,
    /// At the `tau` used in Step 3.
    FixedAtStep3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxIterations,
    MinImprovement,
    MinRelImprovement,
    /// Step 4 returned the `tau` it started from, so further iterations would
    /// repeat the same fit and the same minimum.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxMinConfig {
    pub max_iterations: usize,
    pub ftol: f64,
    pub maxagain: usize,
    pub fluctuation_enabled: bool,
    pub predictor_variant: PredictorVariant,
    pub stop_rule: StopRule,
    pub experimental_rows: ExperimentalRows,
    /// Largest per-coordinate change of `tau`, relative to the box width,
    /// treated as no change. Negative disables the stationary stop.
    pub xtol: f64,
}

impl Default for MaxMinConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            ftol: 1e-4,
            maxagain: 7,
            fluctuation_enabled: false,
            predictor_variant: PredictorVariant::B,
            stop_rule: StopRule::All,
            experimental_rows: ExperimentalRows::FollowCandidate,
            xtol: 1e-4,
        }
    }
}

impl MaxMinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ftol > 0.0) {
            return Err(Error::InvalidArgument("ftol must be positive".into()));
        }
        if self.maxagain < 1 {
            return Err(Error::InvalidArgument("maxagain must be at least 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if self.predictor_variant == PredictorVariant::C {
            return Err(Error::InvalidArgument("Step 4 predictor must be B or CgB".into()));
        }
        Ok(())
    }
}

pub(super) fn search<'a>(space: &'a TauSpace, data: &CalibrationDataset, opts: &'a CalibrationOptions) -> RssSearch<'a> {
    let y = data.experimental().responses();
    // delta must reach offsets of the order of the response level, not just its spread.
    let spread = if y.len() > 1 { y.variance().sqrt() } else { 0.0 } + y.mean().abs();
    RssSearch {
        space,
        bias: opts.bias_correction,
        delta_scale: if spread > 0.0 { spread } else { 1.0 },
        n_starts: opts.tau_multistart,
        minimize: &opts.minimize,
        seed: opts.seed,
    }
}

/// Steps 1 and 2: computer-only MLE, then RSS_P minimization with variant C.
fn initial_stage(data: &CalibrationDataset, model: Model, opts: &CalibrationOptions) -> Result<(FittedGP, RssMinimum)> {
    let fitted = fit_mle(data, model, &Training::ComputerOnly, &opts.fit)?;
    let space = TauSpace::of(data);
    let exp = data.experimental();
    let found = search(&space, data, opts).run(|tau, b| rss_p(tau, &fitted, PredictorVariant::C, exp, b).unwrap_or(f64::INFINITY), &[], &[TAG_INITIAL])?;
    Ok((fitted, found))
}

fn single_stage(method: Method, fitted: FittedGP, found: RssMinimum) -> TuningEstimate {
    TuningEstimate {
        iteration_trace: vec![TraceEntry { iteration: 1, tau: found.tau.clone(), rss_p: found.value }],
        tau_hat: found.tau,
        rss_p: found.value,
        method,
        predictor_variant: PredictorVariant::C,
        bias: found.bias,
        fitted_gp: fitted,
        stop_reason: None,
        fluctuations: 0,
        rows_follow_tau: false,
    }
}

/// Approximate nonlinear least squares: treat the computer-data surrogate as
/// the true code and minimize RSS_P over `tau`.
pub fn anls(data: &CalibrationDataset, model: Model, opts: &CalibrationOptions) -> Result<TuningEstimate> {
    let (fitted, found) = initial_stage(data, model, opts)?;
    Ok(single_stage(Method::Anls, fitted, found))
}

fn step4_rss(fitted: &FittedGP, cfg: &MaxMinConfig, data: &CalibrationDataset, tau: &[f64], b: Option<BiasCorrection>) -> Result<f64> {
    let exp = data.experimental();
    match (cfg.predictor_variant, cfg.experimental_rows) {
        (PredictorVariant::B, ExperimentalRows::FollowCandidate) => {
            let moved = fitted.recondition_at(tau)?;
            rss_p(tau, &moved, PredictorVariant::B, exp, b)
        }
        (v, _) => rss_p(tau, fitted, v, exp, b),
    }
}

/// The Max-min iteration.
///
/// Steps 1-2 are shared with [`anls`] (same code path and RNG streams), so a
/// run with `max_iterations = 1` reproduces ANLS exactly. Each later
/// iteration refits the combined-data MLE at the current `tau` (Step 3) and
/// re-minimizes RSS_P with the configured predictor (Step 4). The returned
/// estimate is the final iterate.
pub fn maxmin(data: &CalibrationDataset, model: Model, cfg: &MaxMinConfig, opts: &CalibrationOptions) -> Result<TuningEstimate> {
    cfg.validate()?;
    let (fit_c, first) = initial_stage(data, model, opts)?;
    let mut est = single_stage(Method::MaxMin, fit_c, first);
    if cfg.max_iterations == 1 {
        est.stop_reason = Some(StopReason::MaxIterations);
        return Ok(est);
    }

    let space = TauSpace::of(data);
    let widths = space.widths();
    let searcher = search(&space, data, opts);
    let mut fluct_rng = rng_stream(opts.seed, derive_stream_id(&[TAG_FLUCTUATION]));
    let use_rule2 = matches!(cfg.stop_rule, StopRule::MinImprovement | StopRule::All);
    let use_rule3 = matches!(cfg.stop_rule, StopRule::MinRelImprovement | StopRule::All);

    let mut tau = est.tau_hat.clone();
    let mut bias = est.bias;
    let mut step3_tau = tau.clone();
    let mut prev = est.rss_p;
    let mut running_min = est.rss_p;
    let (mut again2, mut again3) = (0usize, 0usize);
    let mut perturbed = false;
    let mut last_fit: Option<FittedGP> = None;
    let mut stop = StopReason::MaxIterations;

    for iteration in 2..=cfg.max_iterations {
        let fail = |source: Error, trace: &[TraceEntry]| Error::Calibration { iteration, trace: trace.to_vec(), source: Box::new(source) };
        let fitted = fit_mle(data, model, &Training::Combined(step3_tau.clone()), &opts.fit).map_err(|e| fail(e, &est.iteration_trace))?;

        let mut warm = vec![(tau.clone(), bias)];
        if perturbed {
            warm.push((step3_tau.clone(), bias));
        }
        let found = searcher
            .run(|t, b| step4_rss(&fitted, cfg, data, t, b).unwrap_or(f64::INFINITY), &warm, &[TAG_STEP4, iteration as u64])
            .map_err(|e| fail(e, &est.iteration_trace))?;

        let stationary =
            cfg.xtol >= 0.0 && !perturbed && found.tau.iter().zip(&tau).zip(&widths).all(|((a, b), w)| (a - b).abs() <= cfg.xtol * w.max(f64::MIN_POSITIVE));

        let rss = found.value;
        again2 = if rss > prev - cfg.ftol { again2 + 1 } else { 0 };
        let rel = if prev > 0.0 { (rss - prev) / prev } else { 0.0 };
        again3 = if rel > -cfg.ftol { again3 + 1 } else { 0 };

        est.iteration_trace.push(TraceEntry { iteration, tau: found.tau.clone(), rss_p: rss });
        tau = found.tau;
        bias = found.bias;
        last_fit = Some(fitted);

        perturbed = false;
        step3_tau = tau.clone();
        if cfg.fluctuation_enabled && rss > running_min + cfg.ftol {
            for t in step3_tau.iter_mut() {
                let sd = (0.1 * t.abs()).max(0.3);
                *t += sd * fluct_rng.normal();
            }
            space.clamp(&mut step3_tau);
            perturbed = true;
            est.fluctuations += 1;
        }
        running_min = running_min.min(rss);
        prev = rss;

        if use_rule2 && again2 >= cfg.maxagain {
            stop = StopReason::MinImprovement;
            break;
        }
        if use_rule3 && again3 >= cfg.maxagain {
            stop = StopReason::MinRelImprovement;
            break;
        }
        if stationary && !perturbed {
            stop = StopReason::Stationary;
            break;
        }
    }

    let fitted = last_fit.expect("at least one Step 3 ran");
    let final_fit = match (cfg.predictor_variant, cfg.experimental_rows) {
        (PredictorVariant::B, ExperimentalRows::FollowCandidate) => fitted.recondition_at(&tau)?,
        _ => fitted,
    };
    est.rss_p = est.iteration_trace.last().expect("trace is non-empty").rss_p;
    est.tau_hat = tau;
    est.bias = bias;
    est.fitted_gp = final_fit;
    est.predictor_variant = cfg.predictor_variant;
    est.stop_reason = Some(stop);
    est.rows_follow_tau = cfg.predictor_variant == PredictorVariant::B && cfg.experimental_rows == ExperimentalRows::FollowCandidate;
    Ok(est)
}
