mod benchmark;
mod calibrate;
mod design;
mod fit;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use codetune_core::{FitOptions, FittedGP, KernelKind, Training};
use serde_json::{json, Map, Value};

use crate::config::{Command, RunConfig};
use crate::error::CliError;

pub use report::show;

/// Runs one configured subcommand and writes its report.
pub fn run(cfg: &RunConfig, command: Command) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let body = match command {
        Command::Fit => fit::run(cfg)?,
        Command::Calibrate => calibrate::run(cfg)?,
        Command::Benchmark => benchmark::run(cfg)?,
        Command::Design => design::run(cfg)?,
    };
    let mut doc = Map::new();
    doc.insert("command".into(), json!(command.name()));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("config".into(), json!(cfg.echo()));
    doc.extend(body);
    doc.insert("wall_seconds".into(), json!(start.elapsed().as_secs_f64()));
    let out = PathBuf::from(cfg.raw("out"));
    write_json(&out, &Value::Object(doc))?;
    Ok(out)
}

fn write_json(path: &Path, doc: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| CliError::new("io", e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn fit_options(cfg: &RunConfig) -> Result<FitOptions, CliError> {
    Ok(FitOptions { multistart: cfg.get("fit_multistart")?, seed: cfg.get("seed")?, ..FitOptions::default() })
}

fn path_of(cfg: &RunConfig, key: &str) -> Result<PathBuf, CliError> {
    cfg.opt(key).map(PathBuf::from).ok_or_else(|| CliError::config(format!("key '{key}' is required")))
}

/// Hyperparameters as a named list: theta, beta_0..beta_d, sigma2, gamma_E.
fn gp_parameters(gp: &FittedGP) -> Value {
    let k = gp.kernel();
    let mut rows = Vec::new();
    match k.kind {
        KernelKind::CommonTheta => rows.push(json!({"name": "theta", "value": k.theta[0]})),
        KernelKind::SeparableTheta => {
            for (i, t) in k.theta.iter().enumerate() {
                rows.push(json!({"name": format!("theta_{}", i + 1), "value": t}));
            }
        }
    }
    for (i, b) in gp.beta().iter().enumerate() {
        rows.push(json!({"name": format!("beta_{i}"), "value": b}));
    }
    rows.push(json!({"name": "sigma2", "value": gp.sigma2()}));
    rows.push(json!({"name": "gamma_E", "value": gp.gamma_e()}));
    Value::Array(rows)
}

fn gp_summary(gp: &FittedGP) -> Value {
    let training = match gp.training() {
        Training::ComputerOnly => json!({"kind": "computer"}),
        Training::Combined(tau) => json!({"kind": "combined", "tau": tau}),
    };
    let rs = gp.response_scaling();
    json!({
        "parameters": gp_parameters(gp),
        "neg2loglik": gp.neg2loglik(),
        "sigma2_response_units": gp.sigma2_response(),
        "training": training,
        "n_computer": gp.n_computer(),
        "n_experimental": gp.n_experimental(),
        "response_scaling": {"center": rs.center, "scale": rs.scale},
        "note": "theta, beta and sigma2 refer to inputs scaled to [0,1] and standardized responses",
    })
}
