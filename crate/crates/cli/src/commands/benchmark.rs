use codetune_core::bench::{run_benchmark, test_function, BenchmarkMatrix, BenchmarkReport, CellSummary};
use codetune_core::calibrate::Method;
use serde_json::{json, Map, Value};

use super::calibrate::{calibration_options, maxmin_config};
use crate::config::{parse_method, parse_model, parse_variant, RunConfig};
use crate::error::CliError;

pub const COLUMNS: [&str; 10] =
    ["Function", "Model", "Method", "Variant", "Bias", "Runs", "Average distance to the true value (SD)", "Average estimate (SD)", "MSE", "RI (%)"];

fn with_sd(mean: f64, sd: Option<f64>) -> String {
    match sd {
        Some(sd) => format!("{mean:.3} ({sd:.3})"),
        None => format!("{mean:.3} (-)"),
    }
}

fn row(s: &CellSummary) -> Vec<String> {
    let c = &s.cell;
    let estimate = s.mean_tau.iter().enumerate().map(|(i, m)| with_sd(*m, s.sd_tau.as_ref().map(|v| v[i]))).collect::<Vec<_>>().join(", ");
    let variant = if c.method == Method::MaxMin { format!("{:?}", c.variant) } else { "-".into() };
    let runs = if s.failures > 0 { format!("{} (+{} failed)", s.runs, s.failures) } else { s.runs.to_string() };
    vec![
        c.function_id.to_string(),
        format!("{:?}", c.model),
        c.method.label().to_string(),
        variant,
        if c.bias_correction { "yes".into() } else { "no".into() },
        runs,
        if s.runs > 0 { with_sd(s.mean_distance, s.sd_distance) } else { "-".into() },
        estimate,
        if s.runs > 0 { format!("{:.4}", s.mse) } else { "-".into() },
        s.relative_improvement.map_or("-".into(), |r| format!("{r:.1}")),
    ]
}

/// Fixed-width text rendering of the summary table.
pub fn render(rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string();
    let mut out = vec![line(&COLUMNS)];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        out.push(line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out.join("\n") + "\n"
}

fn matrix(cfg: &RunConfig) -> Result<BenchmarkMatrix, CliError> {
    let ids: Vec<u32> = cfg.list("functions")?;
    // Fail on a bad id before any dataset is generated.
    for &id in &ids {
        test_function(id)?;
    }
    let methods = cfg.raw("methods").split(',').map(|m| parse_method(m.trim())).collect::<Result<Vec<_>, _>>()?;
    let models = cfg.raw("models").split(',').map(|m| parse_model(m.trim())).collect::<Result<Vec<_>, _>>()?;
    let mut m = BenchmarkMatrix::new(ids, methods, models);
    m.variants = cfg.raw("variants").split(',').map(|v| parse_variant(v.trim())).collect::<Result<_, _>>()?;
    m.bias_flags = cfg
        .raw("bias_flags")
        .split(',')
        .map(|b| match b.trim() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(CliError::config(format!("key 'bias_flags': expected booleans, got '{other}'"))),
        })
        .collect::<Result<_, _>>()?;
    let (n_c, n_e): (usize, usize) = (cfg.get("n_c")?, cfg.get("n_e")?);
    m.sizes = match (n_c, n_e) {
        (0, 0) => None,
        (c, e) if c > 0 && e > 0 => Some((c, e)),
        _ => return Err(CliError::config("n_c and n_e must both be zero or both positive")),
    };
    m.maxmin = maxmin_config(cfg, "b")?;
    m.calibration = calibration_options(cfg, false)?;
    m.validate()?;
    Ok(m)
}

pub fn table(report: &BenchmarkReport) -> Vec<Vec<String>> {
    report.summaries.iter().map(row).collect()
}

pub fn run(cfg: &RunConfig) -> Result<Map<String, Value>, CliError> {
    let m = matrix(cfg)?;
    let report = run_benchmark(&m, cfg.get("repetitions")?, cfg.get("seed")?)?;
    let rows = table(&report);
    let text = render(&rows);
    print!("{text}");

    let mut out = Map::new();
    out.insert(
        "results".into(),
        json!({
            "columns": COLUMNS,
            "rows": rows,
            "table_text": text,
            "summaries": report.summaries,
        }),
    );
    out.insert("runs".into(), json!(report.records));
    out.insert("failures".into(), json!(report.failures));
    Ok(out)
}
