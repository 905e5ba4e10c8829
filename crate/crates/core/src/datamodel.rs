//! Calibration data containers and assembly of the stacked design and
//! covariance matrices for the combined computer + experimental data.
//!
//! Rows are always ordered computer-first: indices `0..n_C` of every combined
//! matrix belong to the simulator runs, `n_C..n_B` to the field observations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpcore::KernelSpec;

/// Diagonal jitter, relative to the process variance, added to every
/// self-covariance matrix before factorization.
pub const JITTER: f64 = 1e-10;

/// Simulator runs: tuning inputs `T`, control inputs `x`, deterministic responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputerData {
    t_inputs: DMatrix<f64>,
    x_inputs: DMatrix<f64>,
    responses: DVector<f64>,
}

impl ComputerData {
    pub fn new(t_inputs: DMatrix<f64>, x_inputs: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        let n = responses.len();
        if n == 0 {
            return Err(Error::InvalidData("computer data needs at least one row".into()));
        }
        if t_inputs.nrows() != n {
            return Err(Error::dim("computer T rows", n, t_inputs.nrows()));
        }
        if x_inputs.nrows() != n {
            return Err(Error::dim("computer x rows", n, x_inputs.nrows()));
        }
        if !all_finite(t_inputs.iter()) || !all_finite(x_inputs.iter()) || !all_finite(responses.iter()) {
            return Err(Error::InvalidData("computer data contains non-finite values".into()));
        }
        Ok(Self { t_inputs, x_inputs, responses })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }
    pub fn q(&self) -> usize {
        self.t_inputs.ncols()
    }
    pub fn p(&self) -> usize {
        self.x_inputs.ncols()
    }
    pub fn t_inputs(&self) -> &DMatrix<f64> {
        &self.t_inputs
    }
    pub fn x_inputs(&self) -> &DMatrix<f64> {
        &self.x_inputs
    }
    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    /// The `n_C x (q+p)` input matrix `[T | x]`.
    pub fn inputs(&self) -> DMatrix<f64> {
        hcat(&self.t_inputs, &self.x_inputs)
    }
}

/// Field observations: control inputs and noisy responses. The tuning
/// columns are unknown and filled from a candidate `tau` on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalData {
    x_inputs: DMatrix<f64>,
    responses: DVector<f64>,
}

impl ExperimentalData {
    pub fn new(x_inputs: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        if x_inputs.nrows() != responses.len() {
            return Err(Error::dim("experimental x rows", responses.len(), x_inputs.nrows()));
        }
        if !all_finite(x_inputs.iter()) || !all_finite(responses.iter()) {
            return Err(Error::InvalidData("experimental data contains non-finite values".into()));
        }
        Ok(Self { x_inputs, responses })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }
    pub fn p(&self) -> usize {
        self.x_inputs.ncols()
    }
    pub fn x_inputs(&self) -> &DMatrix<f64> {
        &self.x_inputs
    }
    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    /// Same inputs, responses replaced (used for permutation and synthetic checks).
    pub fn with_responses(&self, responses: DVector<f64>) -> Result<Self> {
        Self::new(self.x_inputs.clone(), responses)
    }
}

/// Paired computer and experimental data with the tuning-parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    computer: ComputerData,
    experimental: ExperimentalData,
    tau_bounds: Vec<(f64, f64)>,
}

impl CalibrationDataset {
    /// Builds a dataset. When `tau_bounds` is `None`, the search box is the
    /// range of each `T` column of the computer data.
    pub fn new(computer: ComputerData, experimental: ExperimentalData, tau_bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let q = computer.q();
        if experimental.p() != computer.p() {
            return Err(Error::dim("experimental x columns", computer.p(), experimental.p()));
        }
        if experimental.n() < q + 1 {
            return Err(Error::InvalidData(format!("need at least q+1 = {} experimental rows, got {}", q + 1, experimental.n())));
        }
        let tau_bounds = match tau_bounds {
            Some(b) => {
                if b.len() != q {
                    return Err(Error::dim("tau bounds", q, b.len()));
                }
                for (i, &(lo, hi)) in b.iter().enumerate() {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::InvalidData(format!("tau bound {} must satisfy lower < upper", i + 1)));
                    }
                }
                b
            }
            None => (0..q)
                .map(|j| {
                    let col = computer.t_inputs().column(j);
                    let (lo, hi) = (col.min(), col.max());
                    if lo < hi {
                        Ok((lo, hi))
                    } else {
                        Err(Error::InvalidData(format!("T column {} is constant; supply tau bounds", j + 1)))
                    }
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self { computer, experimental, tau_bounds })
    }

    pub fn computer(&self) -> &ComputerData {
        &self.computer
    }
    pub fn experimental(&self) -> &ExperimentalData {
        &self.experimental
    }
    pub fn tau_bounds(&self) -> &[(f64, f64)] {
        &self.tau_bounds
    }
    pub fn q(&self) -> usize {
        self.computer.q()
    }
    pub fn p(&self) -> usize {
        self.computer.p()
    }

    /// Input standardization: tau columns from the tau box, control columns
    /// from the min/max over both data sources.
    pub fn input_scaling(&self) -> InputScaling {
        let mut lower = Vec::with_capacity(self.q() + self.p());
        let mut upper = Vec::with_capacity(self.q() + self.p());
        for &(lo, hi) in &self.tau_bounds {
            lower.push(lo);
            upper.push(hi);
        }
        for j in 0..self.p() {
            let c = self.computer.x_inputs().column(j);
            let e = self.experimental.x_inputs().column(j);
            let mut lo = c.min();
            let mut hi = c.max();
            if !e.is_empty() {
                lo = lo.min(e.min());
                hi = hi.max(e.max());
            }
            lower.push(lo);
            upper.push(hi);
        }
        InputScaling::from_bounds(&lower, &upper)
    }
}

/// Noise-to-process variance ratios for the two data sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatios {
    pub gamma_c: f64,
    pub gamma_e: f64,
}

impl VarianceRatios {
    pub fn experimental(gamma_e: f64) -> Self {
        Self { gamma_c: 0.0, gamma_e }
    }
}

/// Affine map of each input coordinate onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
}

impl InputScaling {
    pub fn identity(d: usize) -> Self {
        Self { lower: vec![0.0; d], width: vec![1.0; d] }
    }

    /// Degenerate (zero-width) coordinates get width 1.
    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Self {
        let width = lower.iter().zip(upper).map(|(l, u)| if u > l { u - l } else { 1.0 }).collect();
        Self { lower: lower.to_vec(), width }
    }

    /// Column-wise min/max of a point set.
    pub fn from_points(x: &DMatrix<f64>) -> Self {
        let lower: Vec<f64> = x.column_iter().map(|c| c.min()).collect();
        let upper: Vec<f64> = x.column_iter().map(|c| c.max()).collect();
        Self::from_bounds(&lower, &upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.lower[j]) / self.width[j])
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, v)| (v - self.lower[j]) / self.width[j]).collect()
    }

    pub fn apply_coord(&self, j: usize, v: f64) -> f64 {
        (v - self.lower[j]) / self.width[j]
    }

    pub fn invert_coord(&self, j: usize, v: f64) -> f64 {
        self.lower[j] + v * self.width[j]
    }
}

/// Stacked inputs, first-order basis, and responses for one GP fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrixSet {
    pub x: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub y: DVector<f64>,
    pub n_computer: usize,
}

impl DesignMatrixSet {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, n_computer: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::dim("design rows", y.len(), x.nrows()));
        }
        if n_computer > y.len() {
            return Err(Error::InvalidData("computer row count exceeds total rows".into()));
        }
        let f = regression_basis(&x);
        Ok(Self { x, f, y, n_computer })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn n_experimental(&self) -> usize {
        self.n() - self.n_computer
    }
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// First-order regression basis: each row `z` becomes `(1, z_1, ..., z_d)`.
pub fn regression_basis(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// `X_E(tau)`: every row is `(tau_1..tau_q, x_E row)`.
pub fn assemble_experimental_inputs(exp: &ExperimentalData, tau: &[f64], q: usize) -> Result<DMatrix<f64>> {
    if tau.len() != q {
        return Err(Error::dim("tau (expected q entries)", q, tau.len()));
    }
    if !all_finite(tau.iter()) {
        return Err(Error::InvalidArgument("tau must be finite".into()));
    }
    let p = exp.p();
    Ok(DMatrix::from_fn(exp.n(), q + p, |i, j| if j < q { tau[j] } else { exp.x_inputs()[(i, j - q)] }))
}

/// `(X_B, F_B, y_B)` with computer rows first.
pub fn assemble_combined(comp: &ComputerData, exp: &ExperimentalData, tau: &[f64]) -> Result<DesignMatrixSet> {
    if exp.p() != comp.p() {
        return Err(Error::dim("experimental x columns", comp.p(), exp.p()));
    }
    if exp.n() < comp.q() + 1 {
        return Err(Error::InvalidData(format!("need at least q+1 = {} experimental rows, got {}", comp.q() + 1, exp.n())));
    }
    let xe = assemble_experimental_inputs(exp, tau, comp.q())?;
    let xc = comp.inputs();
    let x = vcat(&xc, &xe);
    let y = DVector::from_iterator(comp.n() + exp.n(), comp.responses().iter().chain(exp.responses().iter()).copied());
    DesignMatrixSet::new(x, y, comp.n())
}

/// `sigma2 * R(X_a, X_b)` with no nugget.
pub fn cross_covariance(xa: &DMatrix<f64>, xb: &DMatrix<f64>, kernel: &KernelSpec, sigma2: f64) -> Result<DMatrix<f64>> {
    kernel.validate(xa.ncols())?;
    if xb.ncols() != xa.ncols() {
        return Err(Error::dim("covariance input columns", xa.ncols(), xb.ncols()));
    }
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect() };
    let (ra, rb) = (rows(xa), rows(xb));
    Ok(DMatrix::from_fn(xa.nrows(), xb.nrows(), |i, j| sigma2 * kernel.correlation_slices(&ra[i], &rb[j])))
}

/// Self-covariance of a stacked input matrix:
/// `sigma2 * (R + diag(gamma_C I, gamma_E I))`, plus `JITTER * sigma2` on the
/// diagonal when `jitter` is set. The first `n_computer` rows get `gamma_C`.
pub fn assemble_covariance(
    x: &DMatrix<f64>,
    n_computer: usize,
    kernel: &KernelSpec,
    sigma2: f64,
    ratios: VarianceRatios,
    jitter: bool,
) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument("sigma2 must be positive".into()));
    }
    if !(ratios.gamma_c >= 0.0 && ratios.gamma_e >= 0.0) {
        return Err(Error::InvalidArgument("variance ratios must be nonnegative".into()));
    }
    let mut v = cross_covariance(x, x, kernel, sigma2)?;
    let j = if jitter { JITTER } else { 0.0 };
    for i in 0..x.nrows() {
        let g = if i < n_computer { ratios.gamma_c } else { ratios.gamma_e };
        v[(i, i)] += sigma2 * (g + j);
    }
    Ok(v)
}

pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, ca) = (a.nrows(), a.ncols());
    DMatrix::from_fn(n, ca + b.ncols(), |i, j| if j < ca { a[(i, j)] } else { b[(i, j - ca)] })
}

pub(crate) fn vcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ra = a.nrows();
    let cols = a.ncols().max(b.ncols());
    DMatrix::from_fn(ra + b.nrows(), cols, |i, j| if i < ra { a[(i, j)] } else { b[(i - ra, j)] })
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
    it.all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcore::KernelKind;

    fn exp_data(rows: &[&[f64]], y: &[f64]) -> ExperimentalData {
        let p = rows[0].len();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        ExperimentalData::new(x, DVector::from_column_slice(y)).unwrap()
    }

    #[test]
    fn experimental_inputs_single_row() {
        let e = exp_data(&[&[0.5]], &[1.0]);
        let xe = assemble_experimental_inputs(&e, &[2.0], 1).unwrap();
        assert_eq!(xe.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 0.5]);
    }

    #[test]
    fn experimental_inputs_tau_constant_across_rows() {
        let e = exp_data(&[&[0.1], &[0.2], &[0.3]], &[1.0, 2.0, 3.0]);
        let xe = assemble_experimental_inputs(&e, &[2.0, 2.0], 2).unwrap();
        assert!(xe.column(0).iter().all(|&v| v == 2.0));
        assert!(xe.column(1).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn experimental_inputs_tokamak_shape() {
        let e = exp_data(&[&[1.0, 2.0, 3.0, 4.0][..]; 5], &[0.0; 5]);
        let xe = assemble_experimental_inputs(&e, &[1.012, 2.035], 2).unwrap();
        assert_eq!(xe.ncols(), 6);
        assert_eq!(xe[(0, 0)], 1.012);
        assert_eq!(xe[(0, 1)], 2.035);
    }

    #[test]
    fn experimental_inputs_wrong_tau_length_names_q() {
        let e = exp_data(&[&[0.1]], &[1.0]);
        let err = assemble_experimental_inputs(&e, &[1.0, 2.0], 1).unwrap_err();
        assert!(err.to_string().contains("expected 1"), "{err}");
    }

    #[test]
    fn combined_stacking() {
        let comp = ComputerData::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[0.1, 0.2]),
            DVector::from_column_slice(&[10.0, 20.0]),
        )
        .unwrap();
        let e = exp_data(&[&[0.3], &[0.4]], &[30.0, 40.0]);
        let set = assemble_combined(&comp, &e, &[1.5]).unwrap();
        assert_eq!(set.x.nrows(), 4);
        assert_eq!(set.f.ncols(), 3);
        assert_eq!(set.y.as_slice(), &[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(set.f.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.5, 0.3]);

        let one = exp_data(&[&[0.3]], &[30.0]);
        let set = DesignMatrixSet::new(vcat(&comp.inputs(), &assemble_experimental_inputs(&one, &[1.5], 1).unwrap()), DVector::zeros(3), 2).unwrap();
        assert_eq!(set.x.nrows(), 3);
        assert_eq!(set.f.ncols(), 3);
    }

    #[test]
    fn combined_rejects_empty_experimental() {
        let comp =
            ComputerData::new(DMatrix::from_row_slice(1, 1, &[1.0]), DMatrix::from_row_slice(1, 1, &[0.1]), DVector::from_column_slice(&[10.0])).unwrap();
        let e = ExperimentalData::new(DMatrix::zeros(0, 1), DVector::zeros(0)).unwrap();
        assert!(assemble_combined(&comp, &e, &[1.0]).is_err());
    }

    #[test]
    fn combined_test_function_one_sizes() {
        let comp = ComputerData::new(DMatrix::zeros(30, 2), DMatrix::zeros(30, 3), DVector::zeros(30)).unwrap();
        let e = ExperimentalData::new(DMatrix::zeros(30, 3), DVector::zeros(30)).unwrap();
        let set = assemble_combined(&comp, &e, &[2.0, 2.0]).unwrap();
        assert_eq!(set.n(), 60);
    }

    #[test]
    fn single_point_covariance_is_sigma2() {
        let k = KernelSpec::common(1.3);
        let x = DMatrix::from_row_slice(1, 2, &[0.2, 0.7]);
        let v = assemble_covariance(&x, 1, &k, 2.5, VarianceRatios::experimental(0.0), false).unwrap();
        assert_eq!(v[(0, 0)], 2.5);
    }

    #[test]
    fn duplicated_experimental_points_with_nugget() {
        let (sigma2, gamma_e) = (1.506e-4, 0.454);
        let k = KernelSpec::common(0.98);
        let x = DMatrix::from_row_slice(2, 2, &[0.3, 0.4, 0.3, 0.4]);
        let v = assemble_covariance(&x, 0, &k, sigma2, VarianceRatios::experimental(gamma_e), false).unwrap();
        assert!((v[(0, 1)] - sigma2).abs() < 1e-18);
        assert!((v[(0, 0)] - sigma2 * (1.0 + gamma_e)).abs() < 1e-18);
    }

    #[test]
    fn separable_covariance_matches_double_loop() {
        let pts = [[0.1, 0.9, 0.3], [0.5, 0.2, 0.8], [0.7, 0.7, 0.1], [0.05, 0.4, 0.6], [0.9, 0.1, 0.95]];
        let theta = [0.7, 2.3, 5.0];
        let x = DMatrix::from_fn(5, 3, |i, j| pts[i][j]);
        let k = KernelSpec::new(KernelKind::SeparableTheta, theta.to_vec()).unwrap();
        let (sigma2, ge) = (1.7, 0.2);
        let v = assemble_covariance(&x, 2, &k, sigma2, VarianceRatios::experimental(ge), false).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let s: f64 = (0..3).map(|c| theta[c] * (pts[i][c] - pts[j][c]).powi(2)).sum();
                let mut want = sigma2 * (-s).exp();
                if i == j && i >= 2 {
                    want += sigma2 * ge;
                }
                assert!((v[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn covariance_symmetric_and_factorizable_with_jitter() {
        let x = DMatrix::from_fn(8, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let k = KernelSpec::common(0.01);
        let v = assemble_covariance(&x, 8, &k, 1.0, VarianceRatios::experimental(0.0), true).unwrap();
        assert_eq!(v, v.transpose());
        assert!(v.cholesky().is_some());
    }
}
