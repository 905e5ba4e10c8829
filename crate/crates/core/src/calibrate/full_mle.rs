use nalgebra::DMatrix;

use super::search::{TauSpace, TAG_FULL};
use super::{rss_p, CalibrationOptions, Method, TraceEntry, TuningEstimate};
use crate::datamodel::{assemble_combined, regression_basis, CalibrationDataset, VarianceRatios};
use crate::design::unit_lhs;
use crate::error::Result;
use crate::gpcore::{correlation_matrix, hyperparameter_starts, FittedGP, Gls, KernelSpec, Model, PredictorVariant, ResponseScaling, Training};
use crate::optimizer::{derive_stream_id, minimize, rng_stream, OptProblem};

/// Full MLE: the combined-data likelihood maximized jointly over `tau`,
/// `theta` and `gamma_E`. RSS_P is reported with the resulting combined fit
/// (variant B). Bias correction does not apply to this method.
pub fn full_mle(data: &CalibrationDataset, model: Model, opts: &CalibrationOptions) -> Result<TuningEstimate> {
    let space = TauSpace::of(data);
    let q = space.q();
    let scaling = data.input_scaling();
    let mid: Vec<f64> = space.tau(&vec![0.5; q]);
    let base = assemble_combined(data.computer(), data.experimental(), &mid)?;
    let n_c = base.n_computer;
    let response = ResponseScaling::from_responses(&base.y);
    let y = base.y.map(|v| (v - response.center) / response.scale);
    let x0 = scaling.apply(&base.x);
    let d = x0.ncols();
    let n_theta = model.theta_len(d);
    let kind = model.kernel_kind();

    let place = |tau: &[f64]| -> DMatrix<f64> {
        let mut x = x0.clone();
        for i in n_c..x.nrows() {
            for (j, t) in tau.iter().enumerate() {
                x[(i, j)] = scaling.apply_coord(j, *t);
            }
        }
        x
    };
    let unpack = |p: &[f64]| -> (Vec<f64>, KernelSpec, f64) {
        let tau = space.tau(&p[..q]);
        let theta = p[q..q + n_theta].iter().map(|v| v.exp()).collect();
        (tau, KernelSpec { kind, theta }, p[q + n_theta].exp())
    };
    let objective = |p: &[f64]| -> f64 {
        let (tau, kernel, gamma) = unpack(p);
        let x = place(&tau);
        let f = regression_basis(&x);
        let c = correlation_matrix(&x, n_c, &kernel, VarianceRatios::experimental(gamma));
        Gls::solve(c, &f, &y).map_or(f64::INFINITY, |g| g.neg2loglik())
    };

    let n_starts = opts.fit.multistart.max(opts.tau_multistart).max(1);
    let hyper = hyperparameter_starts(n_theta, true, &crate::gpcore::FitOptions { multistart: n_starts, ..opts.fit.clone() }, n_theta + 1);
    let mut rng = rng_stream(opts.seed, derive_stream_id(&[TAG_FULL]));
    let unit = unit_lhs(n_starts, q, &mut rng);
    let starts: Vec<Vec<f64>> = (0..n_starts).map(|i| unit.row(i).iter().copied().chain(hyper[i % hyper.len()].iter().copied()).collect()).collect();
    let (tlo, thi) = (opts.fit.theta_bounds.0.ln(), opts.fit.theta_bounds.1.ln());
    let (glo, ghi) = (opts.fit.gamma_bounds.0.ln(), opts.fit.gamma_bounds.1.ln());
    let mut lower = vec![0.0; q];
    let mut upper = vec![1.0; q];
    lower.extend(std::iter::repeat_n(tlo, n_theta));
    upper.extend(std::iter::repeat_n(thi, n_theta));
    lower.push(glo);
    upper.push(ghi);

    let res = minimize(&OptProblem::new(objective, lower, upper, starts), &opts.minimize)?;
    let (tau, kernel, gamma) = unpack(&res.argmin);
    let x = place(&tau);
    let fitted = FittedGP::assemble(kernel, gamma, None, None, Training::Combined(tau.clone()), scaling.clone(), response, x, y, n_c, None)?;
    let rss = rss_p(&tau, &fitted, PredictorVariant::B, data.experimental(), None)?;
    Ok(TuningEstimate {
        iteration_trace: vec![TraceEntry { iteration: 1, tau: tau.clone(), rss_p: rss }],
        tau_hat: tau,
        rss_p: rss,
        method: Method::FullMle,
        predictor_variant: PredictorVariant::B,
        bias: None,
        fitted_gp: fitted,
        stop_reason: None,
        fluctuations: 0,
        rows_follow_tau: true,
    })
}

/// `-2 log L` of the combined data at a given `(tau, kernel, gamma_E)`, on the
/// same standardized scale the estimator uses.
pub fn full_neg2loglik(data: &CalibrationDataset, tau: &[f64], kernel: &KernelSpec, gamma_e: f64) -> Result<f64> {
    let base = assemble_combined(data.computer(), data.experimental(), tau)?;
    let response = ResponseScaling::from_responses(&base.y);
    let y = base.y.map(|v| (v - response.center) / response.scale);
    let x = data.input_scaling().apply(&base.x);
    kernel.validate(x.ncols())?;
    let c = correlation_matrix(&x, base.n_computer, kernel, VarianceRatios::experimental(gamma_e));
    Ok(Gls::solve(c, &regression_basis(&x), &y)?.neg2loglik())
}
