use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use codetune_core::bench::test_function;
use codetune_core::design::{run_sequential, DesignSpec, LhsScheme, SequentialConfig};
use serde_json::{json, Map, Value};

use super::{fit_options, gp_summary};
use crate::config::{parse_model, RunConfig};
use crate::csvio::write_table;
use crate::error::CliError;

type Simulator = Box<dyn FnMut(&[f64]) -> Result<f64, String>>;

/// Runs `program` once for a design row: the row goes to stdin as one CSV
/// line, the first non-empty stdout line must be the response.
pub fn call_simulator(program: &str, row: &[f64]) -> Result<f64, String> {
    let mut parts = program.split_whitespace();
    let exe = parts.next().ok_or("empty simulator command")?;
    let mut child = Command::new(exe)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start '{exe}': {e}"))?;
    let line = row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
    if let Some(mut stdin) = child.stdin.take() {
        // A simulator that exits without reading stdin is judged by its output.
        let _ = writeln!(stdin, "{line}");
    }
    let out = child.wait_with_output().map_err(|e| format!("'{exe}': {e}"))?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() {
        let stderr = String::from_utf8_lossy(&out.stderr);
        return Err(format!("'{exe}' exited with {} on row [{line}]; stderr: {}", out.status, stderr.trim()));
    }
    let first = stdout.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    first.parse().map_err(|_| format!("'{exe}' printed '{first}' for row [{line}], expected a number"))
}

fn parse_ranges(raw: &str) -> Result<Vec<(f64, f64)>, CliError> {
    raw.split(',')
        .map(|r| {
            let (lo, hi) = r.trim().split_once(':').ok_or_else(|| CliError::config(format!("range '{r}' must be lo:hi")))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::config(format!("range '{r}': bad number '{s}'")));
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect()
}

pub fn run(cfg: &RunConfig) -> Result<Map<String, Value>, CliError> {
    let builtin =
        cfg.opt("test_function").map(|s| s.parse::<u32>().map_err(|_| CliError::config(format!("key 'test_function': cannot parse '{s}'")))).transpose()?;
    let program = cfg.opt("simulator").map(str::to_string);
    let (ranges, headers, simulator): (_, Vec<String>, Simulator) = match (builtin, program) {
        (Some(id), None) => {
            let f = test_function(id)?;
            let q = f.q();
            let mut ranges = f.tau_ranges.clone();
            ranges.extend(&f.x_ranges);
            let mut headers: Vec<String> = (1..=q).map(|i| format!("t{i}")).collect();
            headers.extend((1..=f.p()).map(|i| format!("x{i}")));
            (ranges, headers, Box::new(move |row: &[f64]| f.eval(&row[..q], &row[q..]).map_err(|e| e.to_string())))
        }
        (None, Some(program)) => {
            let ranges = parse_ranges(cfg.opt("ranges").ok_or_else(|| CliError::config("a simulator needs ranges"))?)?;
            let headers = (1..=ranges.len()).map(|i| format!("z{i}")).collect();
            (ranges, headers, Box::new(move |row: &[f64]| call_simulator(&program, row)))
        }
        _ => return Err(CliError::config("set exactly one of test_function and simulator")),
    };

    let scheme = match cfg.raw("scheme") {
        "random" => LhsScheme::RandomLhs,
        "maximin" => LhsScheme::MaximinLhs { candidates: 100 },
        other => return Err(CliError::config(format!("unknown scheme '{other}'"))),
    };
    let mut sc = SequentialConfig::new(DesignSpec::new(cfg.get("n_initial")?, ranges, scheme)?);
    sc.stage_size = cfg.get("stage_size")?;
    sc.max_stages = cfg.get("max_stages")?;
    sc.target_mmse = cfg.get("target_mmse")?;
    sc.model = parse_model(cfg.raw("model"))?;
    sc.weight_points = cfg.get("weight_points")?;
    sc.pool_size = cfg.get("pool_size")?;
    sc.optimize_initial = cfg.flag("optimize_initial")?;
    sc.fit = fit_options(cfg)?;
    sc.seed = cfg.get("seed")?;

    let state = run_sequential(&sc, simulator)?;
    let design_out = cfg.raw("design_out");
    let mut columns = headers;
    columns.push("y".into());
    let rows = (0..state.design.nrows()).map(|i| {
        let mut r: Vec<f64> = state.design.row(i).iter().copied().collect();
        r.push(state.responses[i]);
        r
    });
    write_table(Path::new(design_out), &columns, rows)?;

    let mut out = Map::new();
    out.insert(
        "results".into(),
        json!({
            "design_csv": design_out,
            "columns": columns,
            "stages": state.stages(),
            "stage_sizes": state.stage_sizes,
            "imse_history": state.imse_history,
            "mmse_history": state.mmse_history,
            "target_mmse": state.target_mmse,
            "surrogate": gp_summary(&state.fitted),
        }),
    );
    Ok(out)
}
