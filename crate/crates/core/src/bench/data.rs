use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::functions::{test_function, TestFunction};
use crate::datamodel::{CalibrationDataset, ComputerData, ExperimentalData};
use crate::design::{lhs, DesignSpec, LhsScheme};
use crate::error::{Error, Result};
use crate::optimizer::{derive_stream_id, rng_stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyDataOptions {
    /// Replaces the function's field-noise variance.
    pub noise_variance: Option<f64>,
    /// Adds the function's discrepancy `b(x)` to the field data.
    pub include_bias: bool,
}

impl Default for ToyDataOptions {
    fn default() -> Self {
        Self { noise_variance: None, include_bias: true }
    }
}

/// Simulated calibration data with the function's default settings.
pub fn generate_toy_data(id: u32, n_c: usize, n_e: usize, seed: u64) -> Result<CalibrationDataset> {
    generate_toy_data_with(id, n_c, n_e, seed, &ToyDataOptions::default())
}

/// Computer inputs `(T, x)` and field inputs `x` from independent random
/// LHS draws over the declared ranges; `y_C = Y(T, x)` and
/// `y_E = Y(tau*, x) + b(x) + e` with `e ~ N(0, sigma_e^2)`.
pub fn generate_toy_data_with(id: u32, n_c: usize, n_e: usize, seed: u64, opts: &ToyDataOptions) -> Result<CalibrationDataset> {
    let f = test_function(id)?;
    if n_c < 1 || n_e < 1 {
        return Err(Error::InvalidArgument("toy data sizes must be at least 1".into()));
    }
    let noise = opts.noise_variance.unwrap_or(f.noise_variance);
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
    }
    let (q, p) = (f.q(), f.p());

    let comp_ranges: Vec<(f64, f64)> = f.tau_ranges.iter().chain(&f.x_ranges).copied().collect();
    let comp = lhs(&DesignSpec::new(n_c, comp_ranges, LhsScheme::RandomLhs)?, &mut rng_stream(seed, derive_stream_id(&[id as u64, 1])))?;
    let xe = lhs(&DesignSpec::new(n_e, f.x_ranges.clone(), LhsScheme::RandomLhs)?, &mut rng_stream(seed, derive_stream_id(&[id as u64, 2])))?;
    let mut noise_rng = rng_stream(seed, derive_stream_id(&[id as u64, 3]));

    let t = comp.columns(0, q).into_owned();
    let x = comp.columns(q, p).into_owned();
    let yc = (0..n_c).map(|i| f.eval(&row(&t, i), &row(&x, i))).collect::<Result<Vec<f64>>>()?;
    let sd = noise.sqrt();
    let ye = (0..n_e)
        .map(|i| {
            let xi = row(&xe, i);
            let b = if opts.include_bias { f.bias(&xi) } else { 0.0 };
            Ok(f.eval(&f.tau_star, &xi)? + b + sd * noise_rng.normal())
        })
        .collect::<Result<Vec<f64>>>()?;

    let computer = ComputerData::new(t, x, DVector::from_vec(yc))?;
    let experimental = ExperimentalData::new(xe, DVector::from_vec(ye))?;
    CalibrationDataset::new(computer, experimental, None)
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Hex SHA-256 over every number of the dataset, in a fixed order.
pub fn dataset_hash(data: &CalibrationDataset) -> String {
    let mut h = Sha256::new();
    let c = data.computer();
    let e = data.experimental();
    for m in [c.t_inputs(), c.x_inputs(), e.x_inputs()] {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_le_bytes());
        }
    }
    for v in c.responses().iter().chain(e.responses().iter()) {
        h.update(v.to_le_bytes());
    }
    for (lo, hi) in data.tau_bounds() {
        h.update(lo.to_le_bytes());
        h.update(hi.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Per-function defaults for `n_C`, `n_E`.
pub fn default_sizes(f: &TestFunction) -> (usize, usize) {
    (f.n_computer, f.n_experimental)
}
