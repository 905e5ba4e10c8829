//! Toy calibration problems, seeded data generation and the repetition
//! harness that compares tuning methods across random designs.

mod data;
mod functions;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    anls, full_mle, maxmin, relative_improvement, smle, BiasCorrection, CalibrationOptions, MaxMinConfig, Method, StopReason, TuningEstimate,
};
use crate::datamodel::CalibrationDataset;
use crate::error::{Error, Result};
use crate::gpcore::{Model, PredictorVariant};
use crate::optimizer::derive_stream_id;

pub use data::{dataset_hash, default_sizes, generate_toy_data, generate_toy_data_with, ToyDataOptions};
pub use functions::{eval_test_function, test_function, TestFunction, TEST_FUNCTION_IDS};

/// Euclidean distance between an estimate and the truth.
pub fn distance(tau_hat: &[f64], tau_star: &[f64]) -> Result<f64> {
    if tau_hat.len() != tau_star.len() {
        return Err(Error::dim("distance", tau_star.len(), tau_hat.len()));
    }
    Ok(tau_hat.iter().zip(tau_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Cross product of settings to run. `variants` only affects Max-min; the
/// other methods always report with their own predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMatrix {
    pub function_ids: Vec<u32>,
    pub methods: Vec<Method>,
    pub models: Vec<Model>,
    pub variants: Vec<PredictorVariant>,
    pub bias_flags: Vec<bool>,
    /// `(n_C, n_E)`; `None` uses each function's defaults.
    pub sizes: Option<(usize, usize)>,
    pub data: ToyDataOptions,
    pub maxmin: MaxMinConfig,
    pub calibration: CalibrationOptions,
}

impl BenchmarkMatrix {
    pub fn new(function_ids: Vec<u32>, methods: Vec<Method>, models: Vec<Model>) -> Self {
        Self {
            function_ids,
            methods,
            models,
            variants: vec![PredictorVariant::B],
            bias_flags: vec![false],
            sizes: None,
            data: ToyDataOptions::default(),
            maxmin: MaxMinConfig::default(),
            calibration: CalibrationOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Error::InvalidArgument(format!("benchmark matrix has no {what}"));
        if self.function_ids.is_empty() {
            return Err(empty("function ids"));
        }
        if self.methods.is_empty() {
            return Err(empty("methods"));
        }
        if self.models.is_empty() {
            return Err(empty("models"));
        }
        if self.variants.is_empty() {
            return Err(empty("variants"));
        }
        if self.bias_flags.is_empty() {
            return Err(empty("bias flags"));
        }
        for &id in &self.function_ids {
            test_function(id)?;
        }
        if self.methods.contains(&Method::MaxMin) {
            for &v in &self.variants {
                MaxMinConfig { predictor_variant: v, ..self.maxmin }.validate()?;
            }
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &function_id in &self.function_ids {
            for &model in &self.models {
                for &bias_correction in &self.bias_flags {
                    for &method in &self.methods {
                        let variants: Vec<PredictorVariant> = match method {
                            Method::MaxMin => self.variants.clone(),
                            Method::Anls => vec![PredictorVariant::C],
                            Method::Smle => vec![PredictorVariant::C],
                            Method::FullMle => vec![PredictorVariant::B],
                        };
                        for variant in variants {
                            out.push(Cell { function_id, method, model, variant, bias_correction });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One column of the comparison: everything except the repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub function_id: u32,
    pub method: Method,
    pub model: Model,
    pub variant: PredictorVariant,
    pub bias_correction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub repetition: usize,
    pub dataset_seed: u64,
    pub dataset_hash: String,
    pub tau_hat: Vec<f64>,
    pub distance: f64,
    pub rss_p: f64,
    pub bias: Option<BiasCorrection>,
    pub iterations: usize,
    pub stop_reason: Option<StopReason>,
    /// Running-minimum RSS_P of every iteration, for trace checks.
    pub trace_rss: Vec<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub cell: Cell,
    pub repetition: usize,
    pub error_class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub runs: usize,
    pub failures: usize,
    pub mean_distance: f64,
    /// Sample SD (divisor `n - 1`); `None` with fewer than two runs.
    pub sd_distance: Option<f64>,
    /// Per-coordinate mean of `tau_hat`.
    pub mean_tau: Vec<f64>,
    pub sd_tau: Option<Vec<f64>>,
    /// Distance of the mean estimate to `tau*`.
    pub distance_of_mean: f64,
    /// `distance_of_mean^2 + sum_i var(tau_hat_i)`.
    pub mse: f64,
    pub mean_rss_p: f64,
    /// Relative improvement of this Max-min cell over ANLS on the same
    /// datasets, in percent.
    pub relative_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub matrix: BenchmarkMatrix,
    pub repetitions: usize,
    pub base_seed: u64,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub summaries: Vec<CellSummary>,
}

impl BenchmarkReport {
    pub fn summary(&self, cell: &Cell) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| &s.cell == cell)
    }

    pub fn records_for<'a>(&'a self, cell: &'a Cell) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| &r.cell == cell)
    }
}

/// Seed of dataset `rep` for a test function; independent of the methods,
/// models and variants so that every cell sees the same data.
pub fn dataset_seed(base_seed: u64, function_id: u32, rep: usize) -> u64 {
    derive_stream_id(&[base_seed, function_id as u64, rep as u64])
}

/// Runs one method on one dataset.
pub fn run_method(data: &CalibrationDataset, cell: &Cell, maxmin_cfg: &MaxMinConfig, opts: &CalibrationOptions) -> Result<TuningEstimate> {
    let opts = CalibrationOptions { bias_correction: cell.bias_correction, ..opts.clone() };
    match cell.method {
        Method::Anls => anls(data, cell.model, &opts),
        Method::Smle => smle(data, cell.model, &opts),
        Method::FullMle => full_mle(data, cell.model, &opts),
        Method::MaxMin => maxmin(data, cell.model, &MaxMinConfig { predictor_variant: cell.variant, ..*maxmin_cfg }, &opts),
    }
}

/// Runs every cell of `matrix` over `repetitions` seeded datasets.
///
/// Runs execute on the current rayon pool; results are independent of the
/// scheduling because each run derives its own seeds.
pub fn run_benchmark(matrix: &BenchmarkMatrix, repetitions: usize, base_seed: u64) -> Result<BenchmarkReport> {
    matrix.validate()?;
    if repetitions < 1 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let cells = matrix.cells();

    let datasets: Vec<(u32, usize, u64, Result<CalibrationDataset>)> = matrix
        .function_ids
        .iter()
        .flat_map(|&id| (0..repetitions).map(move |rep| (id, rep)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(id, rep)| {
            let seed = dataset_seed(base_seed, id, rep);
            let f = test_function(id).expect("validated");
            let (nc, ne) = matrix.sizes.unwrap_or_else(|| default_sizes(&f));
            (id, rep, seed, generate_toy_data_with(id, nc, ne, seed, &matrix.data))
        })
        .collect();

    let jobs: Vec<(&Cell, usize)> = cells.iter().flat_map(|c| (0..repetitions).map(move |r| (c, r))).collect();
    let outcomes: Vec<std::result::Result<RunRecord, RunFailure>> = jobs
        .into_par_iter()
        .map(|(cell, rep)| {
            let (_, _, seed, data) =
                datasets.iter().find(|(id, r, _, _)| *id == cell.function_id && *r == rep).expect("dataset generated for every function and repetition");
            let failure = |e: &Error| RunFailure { cell: *cell, repetition: rep, error_class: e.class().to_string(), message: e.to_string() };
            let data = data.as_ref().map_err(failure)?;
            let opts = CalibrationOptions { seed: derive_stream_id(&[*seed, 0xCA1]), ..matrix.calibration.clone() };
            let start = Instant::now();
            let est = run_method(data, cell, &matrix.maxmin, &opts).map_err(|e| failure(&e))?;
            let wall_seconds = start.elapsed().as_secs_f64();
            let f = test_function(cell.function_id).expect("validated");
            let mut running = f64::INFINITY;
            let trace_rss = est
                .iteration_trace
                .iter()
                .map(|e| {
                    running = running.min(e.rss_p);
                    running
                })
                .collect();
            Ok(RunRecord {
                cell: *cell,
                repetition: rep,
                dataset_seed: *seed,
                dataset_hash: dataset_hash(data),
                distance: distance(&est.tau_hat, &f.tau_star).map_err(|e| failure(&e))?,
                tau_hat: est.tau_hat.clone(),
                rss_p: est.rss_p,
                bias: est.bias,
                iterations: est.iterations(),
                stop_reason: est.stop_reason,
                trace_rss,
                wall_seconds,
            })
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let mut summaries: Vec<CellSummary> = cells.iter().map(|c| summarize(c, &records, &failures)).collect();
    attach_relative_improvement(&mut summaries, &records);
    Ok(BenchmarkReport { matrix: matrix.clone(), repetitions, base_seed, records, failures, summaries })
}

fn mean_sd(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let m = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, None);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, Some(var.sqrt()))
}

/// Aggregates the records of one cell.
pub fn summarize(cell: &Cell, records: &[RunRecord], failures: &[RunFailure]) -> CellSummary {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| &r.cell == cell).collect();
    let f = test_function(cell.function_id).expect("validated");
    let q = f.q();
    let dists: Vec<f64> = mine.iter().map(|r| r.distance).collect();
    let (mean_distance, sd_distance) = mean_sd(&dists);
    let per_coord: Vec<(f64, Option<f64>)> = (0..q).map(|k| mean_sd(&mine.iter().map(|r| r.tau_hat[k]).collect::<Vec<_>>())).collect();
    let mean_tau: Vec<f64> = per_coord.iter().map(|p| p.0).collect();
    let sd_tau: Option<Vec<f64>> = per_coord.iter().map(|p| p.1).collect();
    let distance_of_mean = distance(&mean_tau, &f.tau_star).unwrap_or(f64::NAN);
    let var_sum: f64 = sd_tau.as_ref().map_or(0.0, |s| s.iter().map(|v| v * v).sum());
    let (mean_rss_p, _) = mean_sd(&mine.iter().map(|r| r.rss_p).collect::<Vec<_>>());
    CellSummary {
        cell: *cell,
        runs: mine.len(),
        failures: failures.iter().filter(|x| &x.cell == cell).count(),
        mean_distance,
        sd_distance,
        mean_tau,
        sd_tau,
        distance_of_mean,
        mse: distance_of_mean * distance_of_mean + var_sum,
        mean_rss_p,
        relative_improvement: None,
    }
}

/// RI is computed over the repetitions where both ANLS and the Max-min cell
/// succeeded, so the two means are paired.
fn attach_relative_improvement(summaries: &mut [CellSummary], records: &[RunRecord]) {
    for s in summaries.iter_mut().filter(|s| s.cell.method == Method::MaxMin) {
        let anls_cell = Cell { method: Method::Anls, variant: PredictorVariant::C, ..s.cell };
        let mut pairs = Vec::new();
        for r in records.iter().filter(|r| r.cell == s.cell) {
            if let Some(a) = records.iter().find(|a| a.cell == anls_cell && a.repetition == r.repetition) {
                pairs.push((a.rss_p, r.rss_p));
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len() as f64;
        let a = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let m = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        s.relative_improvement = relative_improvement(a, m).ok();
    }
}
