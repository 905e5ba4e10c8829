use codetune_core::bench::{generate_toy_data, test_function};
use codetune_core::calibrate::{
    anls, confidence_region, full_mle, full_neg2loglik, maxmin, region_threshold, rss_p, smle, BiasCorrection, CalibrationOptions, GridSpec, MaxMinConfig,
    RegionMode, StopReason, TuningEstimate,
};
use codetune_core::gpcore::{fit_mle, predict, FitOptions, Model, PredictorVariant, Training};
use codetune_core::optimizer::f_quantile;
use codetune_core::{CalibrationDataset, ComputerData, ExperimentalData};
use nalgebra::{DMatrix, DVector};

fn code(t: f64, x: f64) -> f64 {
    (-t * x).exp() + x
}

/// One tuning input on `[0.2, 2]`, one control input on `[0, 1]`, computer
/// runs on a full grid.
fn grid_dataset(per_axis: usize, ye: impl Fn(f64) -> f64, n_e: usize) -> CalibrationDataset {
    let n = per_axis * per_axis;
    let t = DMatrix::from_fn(n, 1, |i, _| 0.2 + 1.8 * (i / per_axis) as f64 / (per_axis - 1) as f64);
    let x = DMatrix::from_fn(n, 1, |i, _| (i % per_axis) as f64 / (per_axis - 1) as f64);
    let y = DVector::from_fn(n, |i, _| code(t[(i, 0)], x[(i, 0)]));
    let xe = DMatrix::from_fn(n_e, 1, |i, _| (i as f64 + 0.5) / n_e as f64);
    let yev = DVector::from_fn(n_e, |i, _| ye(xe[(i, 0)]));
    CalibrationDataset::new(ComputerData::new(t, x, y).unwrap(), ExperimentalData::new(xe, yev).unwrap(), None).unwrap()
}

fn quick() -> CalibrationOptions {
    CalibrationOptions { fit: FitOptions { multistart: 4, ..Default::default() }, tau_multistart: 6, ..Default::default() }
}

fn reevaluate(est: &TuningEstimate, data: &CalibrationDataset) -> f64 {
    rss_p(&est.tau_hat, &est.fitted_gp, est.predictor_variant, data.experimental(), est.bias).unwrap()
}

fn check_invariants(est: &TuningEstimate, data: &CalibrationDataset) {
    let again = reevaluate(est, data);
    assert!((again - est.rss_p).abs() <= 1e-10 * est.rss_p.abs().max(1e-300), "{} {again} vs {}", est.method, est.rss_p);
    let last = est.iteration_trace.last().expect("trace non-empty");
    assert_eq!(last.tau, est.tau_hat);
    assert_eq!(last.rss_p, est.rss_p);
}

#[test]
fn rss_p_vanishes_on_own_predictions() {
    let data = generate_toy_data(6, 15, 8, 11).unwrap();
    let fit = fit_mle(&data, Model::Model1, &Training::ComputerOnly, &FitOptions::default()).unwrap();
    let tau0 = [3.0, 5.0];
    let exp = data.experimental();
    let preds = DVector::from_fn(exp.n(), |i, _| {
        let mut x0 = tau0.to_vec();
        x0.extend(exp.x_inputs().row(i).iter());
        predict(&fit, &x0, PredictorVariant::C).unwrap()
    });
    let own = exp.with_responses(preds).unwrap();
    assert_eq!(rss_p(&tau0, &fit, PredictorVariant::C, &own, None).unwrap(), 0.0);
    let plain = rss_p(&tau0, &fit, PredictorVariant::C, exp, None).unwrap();
    let ident = rss_p(&tau0, &fit, PredictorVariant::C, exp, Some(BiasCorrection::IDENTITY)).unwrap();
    assert_eq!(plain, ident);
}

#[test]
fn rss_p_three_point_hand_sum() {
    let data = generate_toy_data(6, 15, 3, 12).unwrap();
    let fit = fit_mle(&data, Model::Model1, &Training::ComputerOnly, &FitOptions::default()).unwrap();
    let tau = [4.5, 2.5];
    let exp = data.experimental();
    let bias = BiasCorrection { rho: 1.3, delta: -0.4 };
    let r = |i: usize| {
        let x0 = [tau[0], tau[1], exp.x_inputs()[(i, 0)], exp.x_inputs()[(i, 1)]];
        exp.responses()[i] - (1.3 * predict(&fit, &x0, PredictorVariant::C).unwrap() - 0.4)
    };
    let hand = r(0) * r(0) + r(1) * r(1) + r(2) * r(2);
    let got = rss_p(&tau, &fit, PredictorVariant::C, exp, Some(bias)).unwrap();
    assert!((got - hand).abs() <= 1e-12 * hand);
}

#[test]
fn every_method_reports_a_reproducible_rss() {
    let data = generate_toy_data(6, 14, 10, 5).unwrap();
    let o = quick();
    check_invariants(&anls(&data, Model::Model1, &o).unwrap(), &data);
    check_invariants(&smle(&data, Model::Model1, &o).unwrap(), &data);
    check_invariants(&full_mle(&data, Model::Model1, &o).unwrap(), &data);
    let mm = maxmin(&data, Model::Model1, &MaxMinConfig::default(), &o).unwrap();
    check_invariants(&mm, &data);
    let cgb = MaxMinConfig { predictor_variant: PredictorVariant::CgB, ..Default::default() };
    check_invariants(&maxmin(&data, Model::Model2, &cgb, &o).unwrap(), &data);
    let biased = CalibrationOptions { bias_correction: true, ..o };
    let est = anls(&data, Model::Model1, &biased).unwrap();
    assert!(est.bias.is_some());
    check_invariants(&est, &data);
}

#[test]
fn maxmin_trace_and_stopping() {
    let data = generate_toy_data(1, 20, 15, 8).unwrap();
    let cfg = MaxMinConfig::default();
    let est = maxmin(&data, Model::Model1, &cfg, &quick()).unwrap();
    assert!(est.iterations() <= cfg.max_iterations);
    assert_eq!(est.iteration_trace.len(), est.iterations());
    assert_eq!(est.iteration_trace[0].iteration, 1);
    assert_eq!(est.fluctuations, 0);
    // Rule 2 allows at most maxagain consecutive iterations without an ftol gain.
    let mut streak = 0;
    for w in est.iteration_trace.windows(2) {
        streak = if w[1].rss_p > w[0].rss_p - cfg.ftol { streak + 1 } else { 0 };
        assert!(streak <= cfg.maxagain);
    }
    let stop = est.stop_reason.unwrap();
    if stop == StopReason::MaxIterations {
        assert_eq!(est.iterations(), cfg.max_iterations);
    }

    let only_rule1 = MaxMinConfig { max_iterations: 3, xtol: -1.0, stop_rule: codetune_core::calibrate::StopRule::MaxIter, ..cfg };
    let three = maxmin(&data, Model::Model1, &only_rule1, &quick()).unwrap();
    assert_eq!(three.iterations(), 3);
    assert_eq!(three.stop_reason, Some(StopReason::MaxIterations));
}

#[test]
fn maxmin_rejects_bad_config() {
    let data = generate_toy_data(6, 12, 8, 1).unwrap();
    for cfg in [
        MaxMinConfig { ftol: 0.0, ..Default::default() },
        MaxMinConfig { maxagain: 0, ..Default::default() },
        MaxMinConfig { predictor_variant: PredictorVariant::C, ..Default::default() },
    ] {
        assert!(maxmin(&data, Model::Model1, &cfg, &quick()).is_err());
    }
}

#[test]
fn affine_bias_is_recovered() {
    let data = grid_dataset(9, |x| 2.0 * code(1.0, x) + 3.0, 15);
    let opts = CalibrationOptions { bias_correction: true, tau_multistart: 12, ..Default::default() };
    let est = anls(&data, Model::Model2, &opts).unwrap();
    let b = est.bias.unwrap();
    assert!((b.rho - 2.0).abs() < 1e-2 && (b.delta - 3.0).abs() < 1e-2, "{b:?} tau {:?}", est.tau_hat);
    assert!((est.tau_hat[0] - 1.0).abs() < 2e-2);
}

#[test]
fn anls_ignores_experimental_order() {
    let data = generate_toy_data(6, 14, 10, 21).unwrap();
    let exp = data.experimental();
    let n = exp.n();
    let perm: Vec<usize> = (0..n).rev().collect();
    let xe = DMatrix::from_fn(n, exp.p(), |i, j| exp.x_inputs()[(perm[i], j)]);
    let ye = DVector::from_fn(n, |i, _| exp.responses()[perm[i]]);
    let shuffled = CalibrationDataset::new(data.computer().clone(), ExperimentalData::new(xe, ye).unwrap(), Some(data.tau_bounds().to_vec())).unwrap();
    let a = anls(&data, Model::Model1, &quick()).unwrap();
    let b = anls(&shuffled, Model::Model1, &quick()).unwrap();
    assert!((a.rss_p - b.rss_p).abs() <= 1e-9 * a.rss_p);
    for (x, y) in a.tau_hat.iter().zip(&b.tau_hat) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn anls_minimum_dominates_truth_on_surrogate_data() {
    let base = grid_dataset(7, |x| code(1.0, x), 10);
    let fit = fit_mle(&base, Model::Model1, &Training::ComputerOnly, &FitOptions::default()).unwrap();
    let exp = base.experimental();
    let on_surrogate = DVector::from_fn(exp.n(), |i, _| predict(&fit, &[1.0, exp.x_inputs()[(i, 0)]], PredictorVariant::C).unwrap());
    let data = CalibrationDataset::new(base.computer().clone(), exp.with_responses(on_surrogate).unwrap(), None).unwrap();
    let est = anls(&data, Model::Model1, &CalibrationOptions::default()).unwrap();
    let at_truth = rss_p(&[1.0], &est.fitted_gp, PredictorVariant::C, data.experimental(), None).unwrap();
    assert!(est.rss_p <= at_truth + 1e-12);
}

#[test]
fn full_mle_without_tuning_inputs_is_plain_fit() {
    let n = 12;
    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
    let y = DVector::from_fn(n, |i, _| (4.0 * x[(i, 0)]).sin());
    let xe = DMatrix::from_fn(6, 1, |i, _| (i as f64 + 0.3) / 6.0);
    let ye = DVector::from_fn(6, |i, _| (4.0 * xe[(i, 0)]).sin() + 0.01 * (i as f64).cos());
    let data =
        CalibrationDataset::new(ComputerData::new(DMatrix::zeros(n, 0), x, y).unwrap(), ExperimentalData::new(xe.clone(), ye.clone()).unwrap(), Some(vec![]))
            .unwrap();
    let est = full_mle(&data, Model::Model1, &quick()).unwrap();
    assert!(est.tau_hat.is_empty());
    let hand: f64 = (0..6).map(|i| (ye[i] - predict(&est.fitted_gp, &[xe[(i, 0)]], PredictorVariant::B).unwrap()).powi(2)).sum();
    assert!((est.rss_p - hand).abs() <= 1e-12 * hand.max(1e-300));
}

#[test]
fn full_mle_minimum_dominates_truth() {
    let data = generate_toy_data(6, 14, 10, 3).unwrap();
    let est = full_mle(&data, Model::Model1, &quick()).unwrap();
    let k = est.fitted_gp.kernel();
    let g = est.fitted_gp.gamma_e();
    let at_hat = full_neg2loglik(&data, &est.tau_hat, k, g).unwrap();
    let at_star = full_neg2loglik(&data, &test_function(6).unwrap().tau_star, k, g).unwrap();
    assert!(at_hat <= at_star + 1e-9);
    assert!((at_hat - est.fitted_gp.neg2loglik()).abs() < 1e-8 * at_hat.abs().max(1.0));
}

#[test]
fn region_threshold_matches_table_case() {
    let (thr, f) = region_threshold(0.1546, 4, 42, 0.05).unwrap();
    assert_eq!(f, f_quantile(0.05, 4, 38).unwrap());
    assert!((thr - 0.1546 * (1.0 + 4.0 / 38.0 * f)).abs() <= 1e-15);
    let (near_one, _) = region_threshold(0.1546, 4, 42, 1.0 - 1e-9).unwrap();
    assert!((near_one - 0.1546).abs() < 1e-6);
    assert!(region_threshold(1.0, 4, 4, 0.05).is_err());
}

#[test]
fn confidence_region_contains_estimate() {
    let data = generate_toy_data(7, 16, 12, 9).unwrap();
    let est = anls(&data, Model::Model1, &quick()).unwrap();
    for mode in [RegionMode::Slice, RegionMode::Profile] {
        let grid = GridSpec { points_per_axis: 5, ranges: None, mode };
        let region = confidence_region(&est, data.experimental(), 0.05, (0, 2), &grid).unwrap();
        let own = region.grid.iter().find(|p| p.tau_i == est.tau_hat[0] && p.tau_j == est.tau_hat[2]).expect("tau_hat on the lattice");
        assert!(own.inside);
        assert!(region.grid.iter().all(|p| p.inside == (p.rss_p <= region.threshold)));
    }
    let bad = GridSpec { points_per_axis: 1, ..Default::default() };
    assert!(confidence_region(&est, data.experimental(), 0.05, (0, 1), &bad).is_err());
    assert!(confidence_region(&est, data.experimental(), 0.05, (1, 1), &GridSpec::default()).is_err());
}
