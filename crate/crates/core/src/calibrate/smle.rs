use nalgebra::{Cholesky, DMatrix, DVector};

use super::search::{TauSpace, TAG_SMLE};
use super::{rss_p, CalibrationOptions, Method, TraceEntry, TuningEstimate};
use crate::datamodel::{cross_covariance, regression_basis, CalibrationDataset, JITTER};
use crate::design::unit_lhs;
use crate::error::{Error, Result};
use crate::gpcore::{fit_mle, KernelSpec, Model, PredictorVariant, Training};
use crate::optimizer::{derive_stream_id, minimize, rng_stream, OptProblem};

/// Moments of the experimental responses given the computer responses, on
/// the correlation scale (`sigma2 = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    /// `F_E beta + R_CE' R_CC^{-1} (y_C - F_C beta)`.
    pub mean: DVector<f64>,
    /// `R_EE + gamma_E I - R_CE' R_CC^{-1} R_CE`.
    pub cov: DMatrix<f64>,
}

/// Conditional mean and covariance of `y_E | y_C` for a common `beta`.
/// Jitter enters both self-covariance diagonals.
pub fn conditional_moments(
    kernel: &KernelSpec,
    beta: &DVector<f64>,
    xc: &DMatrix<f64>,
    yc: &DVector<f64>,
    xe: &DMatrix<f64>,
    gamma_e: f64,
) -> Result<ConditionalMoments> {
    let d = xc.ncols();
    kernel.validate(d)?;
    if xe.ncols() != d {
        return Err(Error::dim("experimental input columns", d, xe.ncols()));
    }
    if beta.len() != d + 1 {
        return Err(Error::dim("beta", d + 1, beta.len()));
    }
    if yc.len() != xc.nrows() {
        return Err(Error::dim("computer responses", xc.nrows(), yc.len()));
    }
    if !(gamma_e >= 0.0) {
        return Err(Error::InvalidArgument("gamma_E must be nonnegative".into()));
    }
    let mut rcc = cross_covariance(xc, xc, kernel, 1.0)?;
    for i in 0..rcc.nrows() {
        rcc[(i, i)] += JITTER;
    }
    let l = Cholesky::new(rcc).ok_or(Error::NotPositiveDefinite)?.unpack();
    let resid = yc - regression_basis(xc) * beta;
    let w = l.solve_lower_triangular(&resid).ok_or(Error::NotPositiveDefinite)?;
    let alpha = l.tr_solve_lower_triangular(&w).ok_or(Error::NotPositiveDefinite)?;
    Ok(moments_from_factor(kernel, beta, xc, &l, &alpha, xe, gamma_e))
}

fn moments_from_factor(
    kernel: &KernelSpec,
    beta: &DVector<f64>,
    xc: &DMatrix<f64>,
    l_cc: &DMatrix<f64>,
    alpha_c: &DVector<f64>,
    xe: &DMatrix<f64>,
    gamma_e: f64,
) -> ConditionalMoments {
    let rce = cross_covariance(xc, xe, kernel, 1.0).expect("dimensions checked");
    let mean = regression_basis(xe) * beta + rce.transpose() * alpha_c;
    let w = l_cc.solve_lower_triangular(&rce).expect("factor checked");
    let mut cov = cross_covariance(xe, xe, kernel, 1.0).expect("dimensions checked") - w.transpose() * w;
    for i in 0..cov.nrows() {
        cov[(i, i)] += gamma_e + JITTER;
    }
    ConditionalMoments { mean, cov }
}

/// `n_E log sigma2_{E|C} + log |V_{E|C}|`.
fn conditional_neg2loglik(m: &ConditionalMoments, ye: &DVector<f64>) -> f64 {
    let n = ye.len() as f64;
    let cov = (&m.cov + m.cov.transpose()) * 0.5;
    let Some(chol) = Cholesky::new(cov) else {
        return f64::INFINITY;
    };
    let l = chol.l();
    let Some(w) = l.solve_lower_triangular(&(ye - &m.mean)) else {
        return f64::INFINITY;
    };
    let s2 = w.norm_squared() / n;
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let v = n * s2.max(f64::MIN_POSITIVE).ln() + log_det;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Separated MLE: hyperparameters from the computer data, then `(tau,
/// gamma_E)` from the conditional likelihood of the experimental data.
/// RSS_P is reported with the computer-only predictor. Bias correction does
/// not apply to this method.
pub fn smle(data: &CalibrationDataset, model: Model, opts: &CalibrationOptions) -> Result<TuningEstimate> {
    let fitted = fit_mle(data, model, &Training::ComputerOnly, &opts.fit)?;
    let space = TauSpace::of(data);
    let q = space.q();
    let exp = data.experimental();
    let scaling = fitted.input_scaling();
    let rs = fitted.response_scaling();
    let ye = exp.responses().map(|v| (v - rs.center) / rs.scale);
    let xc = fitted.scaled_inputs();
    let gls = fitted.gls();
    let mut xe = DMatrix::zeros(exp.n(), q + exp.p());
    for i in 0..exp.n() {
        for k in 0..exp.p() {
            xe[(i, q + k)] = scaling.apply_coord(q + k, exp.x_inputs()[(i, k)]);
        }
    }

    let (glo, ghi) = (opts.fit.gamma_bounds.0.ln(), opts.fit.gamma_bounds.1.ln());
    let objective = |p: &[f64]| -> f64 {
        let tau = space.tau(&p[..q]);
        let mut xe = xe.clone();
        for i in 0..xe.nrows() {
            for (j, t) in tau.iter().enumerate() {
                xe[(i, j)] = scaling.apply_coord(j, *t);
            }
        }
        let m = moments_from_factor(fitted.kernel(), fitted.beta(), xc, &gls.l, &gls.alpha, &xe, p[q].exp());
        conditional_neg2loglik(&m, &ye)
    };

    let n_starts = opts.tau_multistart.max(1);
    let mut rng = rng_stream(opts.seed, derive_stream_id(&[TAG_SMLE]));
    let unit = unit_lhs(n_starts, q + 1, &mut rng);
    let (slo, shi) = (1e-6f64.ln().max(glo), 0f64.min(ghi));
    let starts: Vec<Vec<f64>> = (0..n_starts)
        .map(|i| {
            let mut p: Vec<f64> = unit.row(i).iter().take(q).copied().collect();
            p.push(slo + (shi - slo) * unit[(i, q)]);
            p
        })
        .collect();
    let mut lower = vec![0.0; q];
    let mut upper = vec![1.0; q];
    lower.push(glo);
    upper.push(ghi);
    let res = minimize(&OptProblem::new(objective, lower, upper, starts), &opts.minimize)?;
    let tau = space.tau(&res.argmin[..q]);

    let rss = rss_p(&tau, &fitted, PredictorVariant::C, exp, None)?;
    Ok(TuningEstimate {
        iteration_trace: vec![TraceEntry { iteration: 1, tau: tau.clone(), rss_p: rss }],
        tau_hat: tau,
        rss_p: rss,
        method: Method::Smle,
        predictor_variant: PredictorVariant::C,
        bias: None,
        fitted_gp: fitted,
        stop_reason: None,
        fluctuations: 0,
        rows_follow_tau: false,
    })
}
