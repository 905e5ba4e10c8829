//! Flat `key = value` run configuration.
//!
//! Values come from three layers: the built-in default, a config file and
//! command-line overrides, later layers winning. Every key belongs to a set of
//! subcommands; a key outside that set is rejected, as is any unknown key.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use codetune_core::calibrate::{ExperimentalRows, Method, RegionMode, StopRule};
use codetune_core::{Model, PredictorVariant};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Calibrate,
    Benchmark,
    Design,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Calibrate => "calibrate",
            Command::Benchmark => "benchmark",
            Command::Design => "design",
        }
    }
}

use Command::*;

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub commands: &'static [Command],
    pub doc: &'static str,
}

const ALL: &[Command] = &[Fit, Calibrate, Benchmark, Design];
const CAL: &[Command] = &[Calibrate];
const MAXMIN: &[Command] = &[Calibrate, Benchmark];
const DATA: &[Command] = &[Fit, Calibrate];
const DES: &[Command] = &[Design];

pub const KEYS: &[Key] = &[
    Key { name: "seed", default: "2024", commands: ALL, doc: "base seed for every random stream" },
    Key { name: "out", default: "codetune-report.json", commands: ALL, doc: "report path" },
    Key { name: "model", default: "model1", commands: &[Fit, Calibrate, Design], doc: "model1 (shared theta) or model2 (theta per input)" },
    Key { name: "fit_multistart", default: "8", commands: ALL, doc: "likelihood multistart count" },
    Key { name: "computer", default: "", commands: DATA, doc: "computer CSV, header t1..tq,x1..xp,y" },
    Key { name: "experimental", default: "", commands: DATA, doc: "experimental CSV, header x1..xp,y" },
    Key { name: "tau", default: "", commands: &[Fit], doc: "tau for the experimental rows of a combined fit" },
    Key { name: "tau_lower", default: "", commands: CAL, doc: "tau search box lower bounds; empty uses the T column ranges" },
    Key { name: "tau_upper", default: "", commands: CAL, doc: "tau search box upper bounds" },
    Key { name: "method", default: "anls", commands: CAL, doc: "anls, smle, fullmle or maxmin" },
    Key { name: "bias", default: "false", commands: CAL, doc: "estimate rho and delta in RSS_P" },
    Key { name: "tau_multistart", default: "10", commands: MAXMIN, doc: "RSS_P search multistart count" },
    Key { name: "variant", default: "b", commands: CAL, doc: "Max-min Step 4 predictor: b or cgb" },
    Key { name: "max_iterations", default: "20", commands: MAXMIN, doc: "Max-min iteration cap" },
    Key { name: "ftol", default: "1e-4", commands: MAXMIN, doc: "Max-min improvement tolerance" },
    Key { name: "maxagain", default: "7", commands: MAXMIN, doc: "non-improving iterations before stopping" },
    Key { name: "xtol", default: "1e-4", commands: MAXMIN, doc: "stationary-stop tolerance; negative disables it" },
    Key { name: "stop_rule", default: "all", commands: MAXMIN, doc: "maxiter, improvement, relative or all" },
    Key { name: "fluctuation", default: "false", commands: MAXMIN, doc: "perturb tau when Max-min stalls" },
    Key { name: "experimental_rows", default: "follow", commands: MAXMIN, doc: "Step 4 X_E rows: follow or fixed" },
    Key { name: "alpha", default: "", commands: CAL, doc: "confidence level for a region grid; empty skips it" },
    Key { name: "pair", default: "1,2", commands: CAL, doc: "1-based tau indices of the region grid" },
    Key { name: "grid_points", default: "21", commands: CAL, doc: "region lattice points per axis" },
    Key { name: "region_mode", default: "slice", commands: CAL, doc: "slice or profile" },
    Key { name: "region_csv", default: "", commands: CAL, doc: "optional CSV side file for the region grid" },
    Key { name: "functions", default: "1", commands: &[Benchmark], doc: "test function ids" },
    Key { name: "methods", default: "anls,smle,maxmin", commands: &[Benchmark], doc: "methods to compare" },
    Key { name: "models", default: "model1", commands: &[Benchmark], doc: "models to compare" },
    Key { name: "variants", default: "b", commands: &[Benchmark], doc: "Max-min predictor variants" },
    Key { name: "bias_flags", default: "false", commands: &[Benchmark], doc: "bias-correction settings to compare" },
    Key { name: "repetitions", default: "30", commands: &[Benchmark], doc: "datasets per cell" },
    Key { name: "n_c", default: "0", commands: &[Benchmark], doc: "computer runs per dataset; 0 uses the function default" },
    Key { name: "n_e", default: "0", commands: &[Benchmark], doc: "experimental runs per dataset; 0 uses the function default" },
    Key { name: "test_function", default: "", commands: DES, doc: "builtin test function id used as simulator" },
    Key { name: "simulator", default: "", commands: DES, doc: "executable reading one CSV row, printing one number" },
    Key { name: "ranges", default: "", commands: DES, doc: "design region as lo:hi,lo:hi,...; required with simulator" },
    Key { name: "n_initial", default: "10", commands: DES, doc: "first-stage design size" },
    Key { name: "scheme", default: "random", commands: DES, doc: "first-stage LHS: random or maximin" },
    Key { name: "stage_size", default: "10", commands: DES, doc: "points added per later stage" },
    Key { name: "max_stages", default: "5", commands: DES, doc: "stage cap" },
    Key { name: "target_mmse", default: "0", commands: DES, doc: "stop when MMSE/sigma2 reaches this; inf allowed" },
    Key { name: "weight_points", default: "1000", commands: DES, doc: "uniform points for IMSE and MMSE" },
    Key { name: "pool_size", default: "500", commands: DES, doc: "candidate pool per augmentation" },
    Key { name: "optimize_initial", default: "false", commands: DES, doc: "exchange-optimize the first stage" },
    Key { name: "design_out", default: "design.csv", commands: DES, doc: "design CSV path" },
];

fn key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Effective settings for one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    command: Command,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let values = KEYS.iter().filter(|k| k.commands.contains(&command)).map(|k| (k.name.to_string(), k.default.to_string())).collect();
        Self { command, values }
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<(), CliError> {
        let known = key(name).ok_or_else(|| CliError::config(format!("unknown key '{name}'")))?;
        if !known.commands.contains(&self.command) {
            return Err(CliError::config(format!("key '{name}' does not apply to {}", self.command.name())));
        }
        self.values.insert(name.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Reads `key = value` lines. A JSON report is accepted too: its config
    /// echo is replayed, which makes every report a config file.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if text.trim_start().starts_with('{') {
            let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
            let echo =
                doc.get("config").and_then(|c| c.as_object()).ok_or_else(|| CliError::parse(format!("{}: report has no config object", path.display())))?;
            for (k, v) in echo {
                let v = v.as_str().ok_or_else(|| CliError::parse(format!("{}: config value for '{k}' is not a string", path.display())))?;
                self.set(k, v)?;
            }
            return Ok(());
        }
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::parse(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            self.set(k.trim(), v).map_err(|e| e.context(format!("{}:{}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Applies `--key value` and `--key=value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(a) = it.next() {
            let body = a.strip_prefix("--").ok_or_else(|| CliError::config(format!("expected --key value, got '{a}'")))?;
            let (k, v) = match body.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| CliError::config(format!("--{body} needs a value")))?;
                    (body.to_string(), v.clone())
                }
            };
            self.set(&k.replace('-', "_"), &v)?;
        }
        Ok(())
    }

    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("key '{name}' not registered for {}", self.command.name()))
    }

    pub fn opt(&self, name: &str) -> Option<&str> {
        Some(self.raw(name)).filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError> {
        parse_value(name, self.raw(name))
    }

    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(name);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',').map(|v| parse_value(name, v.trim())).collect()
    }

    pub fn flag(&self, name: &str) -> Result<bool, CliError> {
        match self.raw(name).to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            other => Err(CliError::config(format!("key '{name}': expected a boolean, got '{other}'"))),
        }
    }
}

fn parse_value<T: FromStr>(name: &str, raw: &str) -> Result<T, CliError> {
    raw.parse().map_err(|_| CliError::config(format!("key '{name}': cannot parse '{raw}'")))
}

pub fn parse_model(s: &str) -> Result<Model, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "model1" | "1" => Ok(Model::Model1),
        "model2" | "2" => Ok(Model::Model2),
        _ => Err(CliError::config(format!("unknown model '{s}'"))),
    }
}

pub fn parse_method(s: &str) -> Result<Method, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "anls" => Ok(Method::Anls),
        "smle" => Ok(Method::Smle),
        "fullmle" | "full_mle" => Ok(Method::FullMle),
        "maxmin" | "max-min" => Ok(Method::MaxMin),
        _ => Err(CliError::config(format!("unknown method '{s}'"))),
    }
}

pub fn parse_variant(s: &str) -> Result<PredictorVariant, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "b" => Ok(PredictorVariant::B),
        "cgb" => Ok(PredictorVariant::CgB),
        "c" => Ok(PredictorVariant::C),
        _ => Err(CliError::config(format!("unknown predictor variant '{s}'"))),
    }
}

pub fn parse_stop_rule(s: &str) -> Result<StopRule, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "maxiter" => Ok(StopRule::MaxIter),
        "improvement" => Ok(StopRule::MinImprovement),
        "relative" => Ok(StopRule::MinRelImprovement),
        "all" => Ok(StopRule::All),
        _ => Err(CliError::config(format!("unknown stop rule '{s}'"))),
    }
}

pub fn parse_rows(s: &str) -> Result<ExperimentalRows, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "follow" => Ok(ExperimentalRows::FollowCandidate),
        "fixed" => Ok(ExperimentalRows::FixedAtStep3),
        _ => Err(CliError::config(format!("unknown experimental_rows '{s}'"))),
    }
}

pub fn parse_region_mode(s: &str) -> Result<RegionMode, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "slice" => Ok(RegionMode::Slice),
        "profile" => Ok(RegionMode::Profile),
        _ => Err(CliError::config(format!("unknown region_mode '{s}'"))),
    }
}
