use std::fmt::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.6}"),
        None => v.to_string(),
    }
}

fn parameters(out: &mut String, fit: &Value) {
    let _ = writeln!(out, "  -2 log-likelihood: {}", num(&fit["neg2loglik"]));
    for p in fit["parameters"].as_array().into_iter().flatten() {
        let _ = writeln!(out, "  {:<10} {}", p["name"].as_str().unwrap_or("?"), num(&p["value"]));
    }
}

/// Human-readable rendering of a stored report.
pub fn render(doc: &Value) -> Result<String, CliError> {
    let command = doc["command"].as_str().ok_or_else(|| CliError::parse("report has no command field"))?;
    let r = &doc["results"];
    let mut out = String::new();
    let _ = writeln!(out, "codetune {command} report (version {})", doc["version"].as_str().unwrap_or("?"));
    if let Some(cfg) = doc["config"].as_object() {
        let _ = writeln!(out, "config:");
        for (k, v) in cfg {
            let _ = writeln!(out, "  {k} = {}", v.as_str().unwrap_or(""));
        }
    }
    match command {
        "fit" => {
            let _ = writeln!(out, "fit ({}):", r["model"].as_str().unwrap_or("?"));
            parameters(&mut out, &r["fit"]);
        }
        "calibrate" => {
            let _ = writeln!(out, "method: {}", r["method"].as_str().unwrap_or("?"));
            let _ = writeln!(out, "tau_hat: {}", r["tau_hat"]);
            let _ = writeln!(out, "rss_p: {}", num(&r["rss_p"]));
            if !r["bias"].is_null() {
                let _ = writeln!(out, "bias: rho {} delta {}", num(&r["bias"]["rho"]), num(&r["bias"]["delta"]));
            }
            let _ = writeln!(out, "iterations: {}  stop: {}", r["iterations"], r["stop_reason"]);
            if let Some(trace) = doc["trace"].as_array() {
                for t in trace {
                    let _ = writeln!(out, "  iter {:>3}  rss_p {}  tau {}", t["iteration"], num(&t["rss_p"]), t["tau"]);
                }
            }
            if let Some(reg) = doc.get("region") {
                let inside = reg["grid"].as_array().map_or(0, |g| g.iter().filter(|p| p[3] == Value::Bool(true)).count());
                let _ =
                    writeln!(out, "region: alpha {} pair {} threshold {} ({inside} lattice points inside)", reg["alpha"], reg["pair"], num(&reg["threshold"]));
            }
            let _ = writeln!(out, "surrogate:");
            parameters(&mut out, &r["surrogate"]);
        }
        "benchmark" => {
            out.push_str(r["table_text"].as_str().unwrap_or(""));
            let failures = doc["failures"].as_array().map_or(0, Vec::len);
            let _ = writeln!(out, "failed runs: {failures}");
        }
        "design" => {
            let _ = writeln!(out, "design: {} ({} stages)", r["design_csv"].as_str().unwrap_or("?"), r["stages"]);
            let _ = writeln!(out, "stage sizes: {}", r["stage_sizes"]);
            let _ = writeln!(out, "imse/sigma2: {}", r["imse_history"]);
            let _ = writeln!(out, "mmse/sigma2: {}", r["mmse_history"]);
        }
        other => return Err(CliError::parse(format!("unknown report command '{other}'"))),
    }
    if let Some(w) = doc["wall_seconds"].as_f64() {
        let _ = writeln!(out, "wall time: {w:.2} s");
    }
    Ok(out)
}

pub fn show(path: &Path, raw_json: bool) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    if raw_json {
        return serde_json::to_string_pretty(&doc).map_err(|e| CliError::parse(e.to_string()));
    }
    render(&doc)
}
