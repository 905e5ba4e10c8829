use std::path::Path;

use codetune_core::calibrate::{
    anls, confidence_region, full_mle, maxmin, smle, CalibrationOptions, ConfidenceRegion, GridSpec, MaxMinConfig, Method, TuningEstimate,
};
use codetune_core::gpcore::predict;
use codetune_core::{CalibrationDataset, ExperimentalData};
use serde_json::{json, Map, Value};

use super::{fit_options, gp_summary, path_of};
use crate::config::{parse_method, parse_model, parse_region_mode, parse_rows, parse_stop_rule, parse_variant, RunConfig};
use crate::csvio::{read_computer, read_experimental, write_table};
use crate::error::CliError;

pub(super) fn maxmin_config(cfg: &RunConfig, variant: &str) -> Result<MaxMinConfig, CliError> {
    Ok(MaxMinConfig {
        max_iterations: cfg.get("max_iterations")?,
        ftol: cfg.get("ftol")?,
        maxagain: cfg.get("maxagain")?,
        fluctuation_enabled: cfg.flag("fluctuation")?,
        predictor_variant: parse_variant(variant)?,
        stop_rule: parse_stop_rule(cfg.raw("stop_rule"))?,
        experimental_rows: parse_rows(cfg.raw("experimental_rows"))?,
        xtol: cfg.get("xtol")?,
    })
}

pub(super) fn calibration_options(cfg: &RunConfig, bias: bool) -> Result<CalibrationOptions, CliError> {
    Ok(CalibrationOptions {
        fit: fit_options(cfg)?,
        tau_multistart: cfg.get("tau_multistart")?,
        seed: cfg.get("seed")?,
        bias_correction: bias,
        ..CalibrationOptions::default()
    })
}

fn tau_bounds(cfg: &RunConfig) -> Result<Option<Vec<(f64, f64)>>, CliError> {
    let lo: Vec<f64> = cfg.list("tau_lower")?;
    let hi: Vec<f64> = cfg.list("tau_upper")?;
    match (lo.is_empty(), hi.is_empty()) {
        (true, true) => Ok(None),
        (false, false) if lo.len() == hi.len() => Ok(Some(lo.into_iter().zip(hi).collect())),
        _ => Err(CliError::config("tau_lower and tau_upper must both be set with equal lengths")),
    }
}

/// Predictions and residuals at every computer and experimental row, using
/// the estimate's own surrogate and predictor.
fn residuals(est: &TuningEstimate, data: &CalibrationDataset) -> Result<Vec<Value>, CliError> {
    let mut rows = Vec::new();
    let comp = data.computer();
    let inputs = comp.inputs();
    for i in 0..comp.n() {
        let x0: Vec<f64> = inputs.row(i).iter().copied().collect();
        let pred = predict(&est.fitted_gp, &x0, est.predictor_variant)?;
        let y = comp.responses()[i];
        rows.push(json!({"source": "C", "row": i + 1, "observed": y, "predicted": pred, "residual": y - pred}));
    }
    let exp = data.experimental();
    let (rho, delta) = est.bias.map_or((1.0, 0.0), |b| (b.rho, b.delta));
    for i in 0..exp.n() {
        let mut x0 = est.tau_hat.clone();
        x0.extend(exp.x_inputs().row(i).iter());
        let pred = rho * predict(&est.fitted_gp, &x0, est.predictor_variant)? + delta;
        let y = exp.responses()[i];
        rows.push(json!({"source": "E", "row": i + 1, "observed": y, "predicted": pred, "residual": y - pred}));
    }
    Ok(rows)
}

fn region(cfg: &RunConfig, est: &TuningEstimate, exp: &ExperimentalData, alpha: f64) -> Result<ConfidenceRegion, CliError> {
    let pair: Vec<usize> = cfg.list("pair")?;
    let (i, j) = match pair.as_slice() {
        [i, j] if *i >= 1 && *j >= 1 => (i - 1, j - 1),
        _ => return Err(CliError::config("pair must be two 1-based tau indices, e.g. 1,2")),
    };
    let grid = GridSpec { points_per_axis: cfg.get("grid_points")?, ranges: None, mode: parse_region_mode(cfg.raw("region_mode"))? };
    Ok(confidence_region(est, exp, alpha, (i, j), &grid)?)
}

pub fn run(cfg: &RunConfig) -> Result<Map<String, Value>, CliError> {
    let model = parse_model(cfg.raw("model"))?;
    let method = parse_method(cfg.raw("method"))?;
    let opts = calibration_options(cfg, cfg.flag("bias")?)?;
    let mm = maxmin_config(cfg, cfg.raw("variant"))?;
    let computer = read_computer(&path_of(cfg, "computer")?)?;
    let exp = read_experimental(&path_of(cfg, "experimental")?)?;
    let data = CalibrationDataset::new(computer, exp, tau_bounds(cfg)?)?;

    let est = match method {
        Method::Anls => anls(&data, model, &opts)?,
        Method::Smle => smle(&data, model, &opts)?,
        Method::FullMle => full_mle(&data, model, &opts)?,
        Method::MaxMin => maxmin(&data, model, &mm, &opts)?,
    };

    let mut out = Map::new();
    out.insert(
        "results".into(),
        json!({
            "method": est.method.label(),
            "model": format!("{model:?}"),
            "tau_hat": est.tau_hat,
            "rss_p": est.rss_p,
            "predictor_variant": format!("{:?}", est.predictor_variant),
            "bias": est.bias.map(|b| json!({"rho": b.rho, "delta": b.delta})),
            "iterations": est.iterations(),
            "stop_reason": est.stop_reason.map(|s| format!("{s:?}")),
            "fluctuations": est.fluctuations,
            "tau_bounds": data.tau_bounds(),
            "surrogate": gp_summary(&est.fitted_gp),
        }),
    );
    out.insert("trace".into(), json!(est.iteration_trace));

    if let Some(alpha) = cfg.opt("alpha") {
        let alpha: f64 = alpha.parse().map_err(|_| CliError::config(format!("key 'alpha': cannot parse '{alpha}'")))?;
        let r = region(cfg, &est, data.experimental(), alpha)?;
        let names = [format!("tau_{}", r.pair.0 + 1), format!("tau_{}", r.pair.1 + 1)];
        if let Some(path) = cfg.opt("region_csv") {
            let headers = [names[0].clone(), names[1].clone(), "rss_p".into(), "inside".into(), "threshold".into()];
            let rows = r.grid.iter().map(|p| vec![p.tau_i, p.tau_j, p.rss_p, f64::from(u8::from(p.inside)), r.threshold]);
            write_table(Path::new(path), &headers, rows)?;
        }
        out.insert(
            "region".into(),
            json!({
                "alpha": r.alpha,
                "pair": [r.pair.0 + 1, r.pair.1 + 1],
                "mode": format!("{:?}", r.mode),
                "rss_hat": r.rss_hat,
                "f_value": r.f_value,
                "threshold": r.threshold,
                "columns": [names[0], names[1], "rss_p", "inside"],
                "grid": r.grid.iter().map(|p| json!([p.tau_i, p.tau_j, p.rss_p, p.inside])).collect::<Vec<_>>(),
            }),
        );
    }
    out.insert("residuals".into(), json!(residuals(&est, &data)?));
    Ok(out)
}
