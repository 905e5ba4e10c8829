use codetune_core::gpcore::{fit_mle, fit_points};
use codetune_core::{CalibrationDataset, InputScaling, Training};
use serde_json::{json, Map, Value};

use super::{fit_options, gp_summary, path_of};
use crate::config::{parse_model, RunConfig};
use crate::csvio::{read_computer, read_experimental};
use crate::error::CliError;

/// Computer-only fit, or a combined fit when `tau` places the experimental rows.
pub fn run(cfg: &RunConfig) -> Result<Map<String, Value>, CliError> {
    let model = parse_model(cfg.raw("model"))?;
    let opts = fit_options(cfg)?;
    let computer = read_computer(&path_of(cfg, "computer")?)?;
    let tau: Vec<f64> = cfg.list("tau")?;

    let fitted = match cfg.opt("experimental") {
        None if !tau.is_empty() => return Err(CliError::config("a combined fit (tau set) needs an experimental file")),
        None => {
            let x = computer.inputs();
            fit_points(&x, computer.responses(), InputScaling::from_points(&x), model, &opts)?
        }
        Some(_) if tau.is_empty() => return Err(CliError::config("experimental data given without tau; set tau for a combined fit")),
        Some(path) => {
            let exp = read_experimental(path.as_ref())?;
            let data = CalibrationDataset::new(computer, exp, None)?;
            fit_mle(&data, model, &Training::Combined(tau), &opts)?
        }
    };
    let mut out = Map::new();
    out.insert("results".into(), json!({ "model": format!("{model:?}"), "fit": gp_summary(&fitted) }));
    Ok(out)
}
