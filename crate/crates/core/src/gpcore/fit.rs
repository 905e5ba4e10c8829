use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gls::{correlation_matrix, Gls};
use super::kernel::{KernelKind, KernelSpec, Model};
use crate::datamodel::{assemble_combined, CalibrationDataset, InputScaling, VarianceRatios, JITTER};
use crate::error::{Error, Result};
use crate::optimizer::{minimize, rng_stream, MinimizeOptions, OptProblem};

/// Which data a surrogate is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Training {
    ComputerOnly,
    /// Computer rows plus experimental rows placed at a fixed `tau`.
    Combined(Vec<f64>),
}

impl Training {
    fn label(&self) -> &'static str {
        match self {
            Training::ComputerOnly => "computer data only",
            Training::Combined(_) => "combined data",
        }
    }
}

/// The three plug-in predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictorVariant {
    /// Computer-data kriging with computer-only estimates.
    C,
    /// Combined-data kriging with combined-data estimates.
    B,
    /// Computer-data kriging with combined-data `theta` and `beta`.
    CgB,
}

impl PredictorVariant {
    pub fn label(self) -> &'static str {
        match self {
            PredictorVariant::C => "C",
            PredictorVariant::B => "B",
            PredictorVariant::CgB => "CgB",
        }
    }
}

impl std::fmt::Display for PredictorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub multistart: usize,
    pub theta_bounds: (f64, f64),
    pub gamma_bounds: (f64, f64),
    pub minimize: MinimizeOptions,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { multistart: 8, theta_bounds: (1e-4, 1e4), gamma_bounds: (1e-8, 1e2), minimize: MinimizeOptions::default(), seed: 0x05EE_DF17 }
    }
}

/// Affine response standardization used during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseScaling {
    pub center: f64,
    pub scale: f64,
}

impl ResponseScaling {
    pub fn identity() -> Self {
        Self { center: 0.0, scale: 1.0 }
    }

    pub fn from_responses(y: &DVector<f64>) -> Self {
        let n = y.len();
        if n == 0 {
            return Self::identity();
        }
        let center = y.mean();
        let var = y.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { center, scale }
    }
}

/// A Gaussian-process surrogate with its estimated hyperparameters and the
/// factorization needed for prediction.
///
/// Inputs are standardized with [`InputScaling`] and responses with
/// [`ResponseScaling`]; `beta`, `sigma2` and `theta` refer to the standardized
/// problem. [`predict`] and [`predict_mse`] take and return original units.
#[derive(Debug, Clone)]
pub struct FittedGP {
    kernel: KernelSpec,
    beta: DVector<f64>,
    sigma2: f64,
    gamma_e: f64,
    training: Training,
    input_scaling: InputScaling,
    response: ResponseScaling,
    x: DMatrix<f64>,
    f: DMatrix<f64>,
    y: DVector<f64>,
    n_computer: usize,
    gls: Gls,
    computer_block: Option<Gls>,
    neg2loglik: f64,
}

impl FittedGP {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }
    /// Process variance on the standardized response scale.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    /// Process variance in original response units.
    pub fn sigma2_response(&self) -> f64 {
        self.sigma2 * self.response.scale * self.response.scale
    }
    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }
    pub fn training(&self) -> &Training {
        &self.training
    }
    pub fn input_scaling(&self) -> &InputScaling {
        &self.input_scaling
    }
    pub fn response_scaling(&self) -> ResponseScaling {
        self.response
    }
    pub fn neg2loglik(&self) -> f64 {
        self.neg2loglik
    }
    pub fn n_computer(&self) -> usize {
        self.n_computer
    }
    pub fn n_experimental(&self) -> usize {
        self.y.len() - self.n_computer
    }
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn gls(&self) -> &Gls {
        &self.gls
    }

    pub(crate) fn scaled_inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Standardized training design `(X, F, y)` the fit was computed on.
    pub fn training_design(&self) -> crate::datamodel::DesignMatrixSet {
        crate::datamodel::DesignMatrixSet { x: self.x.clone(), f: self.f.clone(), y: self.y.clone(), n_computer: self.n_computer }
    }

    pub fn variance_ratios(&self) -> VarianceRatios {
        VarianceRatios::experimental(self.gamma_e)
    }

    /// Builds a fitted model from known hyperparameters on standardized data.
    /// `beta` is estimated by GLS unless supplied.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        kernel: KernelSpec,
        gamma_e: f64,
        beta: Option<DVector<f64>>,
        sigma2: Option<f64>,
        training: Training,
        input_scaling: InputScaling,
        response: ResponseScaling,
        x: DMatrix<f64>,
        y: DVector<f64>,
        n_computer: usize,
        computer_block: Option<Gls>,
    ) -> Result<Self> {
        kernel.validate(x.ncols())?;
        let f = crate::datamodel::regression_basis(&x);
        let c = correlation_matrix(&x, n_computer, &kernel, VarianceRatios::experimental(gamma_e));
        let gls = match beta {
            Some(b) => Gls::with_beta(c, &f, &y, b)?,
            None => Gls::solve(c, &f, &y)?,
        };
        let neg2loglik = gls.neg2loglik();
        let beta = gls.beta.clone();
        let sigma2 = sigma2.unwrap_or(gls.sigma2);

        let computer_block = match training {
            Training::Combined(_) if computer_block.is_some() => computer_block,
            Training::Combined(_) => {
                let xc = x.rows(0, n_computer).into_owned();
                let fc = f.rows(0, n_computer).into_owned();
                let yc = y.rows(0, n_computer).into_owned();
                let cc = correlation_matrix(&xc, n_computer, &kernel, VarianceRatios::experimental(0.0));
                Some(Gls::with_beta(cc, &fc, &yc, beta.clone())?)
            }
            Training::ComputerOnly => None,
        };

        Ok(Self { kernel, beta, sigma2, gamma_e, training, input_scaling, response, x, f, y, n_computer, gls, computer_block, neg2loglik })
    }

    /// Same hyperparameters and `beta`, experimental rows moved to `tau`.
    pub fn recondition_at(&self, tau: &[f64]) -> Result<Self> {
        let Training::Combined(old) = &self.training else {
            return Err(Error::IncompatibleVariant { variant: "B", training: "computer data only" });
        };
        if tau.len() != old.len() {
            return Err(Error::dim("tau (expected q entries)", old.len(), tau.len()));
        }
        let mut x = self.x.clone();
        for i in self.n_computer..x.nrows() {
            for (j, &t) in tau.iter().enumerate() {
                x[(i, j)] = self.input_scaling.apply_coord(j, t);
            }
        }
        Self::assemble(
            self.kernel.clone(),
            self.gamma_e,
            Some(self.beta.clone()),
            Some(self.sigma2),
            Training::Combined(tau.to_vec()),
            self.input_scaling.clone(),
            self.response,
            x,
            self.y.clone(),
            self.n_computer,
            // The computer block depends only on rows that do not move.
            self.computer_block.clone(),
        )
    }

    fn system(&self, variant: PredictorVariant) -> Result<(&Gls, usize)> {
        let incompatible = || Error::IncompatibleVariant { variant: variant.label(), training: self.training.label() };
        match (variant, &self.training) {
            (PredictorVariant::C, Training::ComputerOnly) => Ok((&self.gls, self.y.len())),
            (PredictorVariant::B, Training::Combined(_)) => Ok((&self.gls, self.y.len())),
            // A computer-only fit is a combined fit with no experimental rows.
            (PredictorVariant::B, Training::ComputerOnly) if self.n_experimental() == 0 => Ok((&self.gls, self.y.len())),
            (PredictorVariant::CgB, Training::Combined(_)) => Ok((self.computer_block.as_ref().ok_or_else(incompatible)?, self.n_computer)),
            _ => Err(incompatible()),
        }
    }

    fn correlation_vector(&self, z0: &[f64], rows: usize) -> DVector<f64> {
        DVector::from_fn(rows, |i, _| {
            let xi = self.x.row(i);
            let coincident = xi.iter().zip(z0).all(|(a, b)| a == b);
            let r = self.kernel.correlation_slices(z0, xi.transpose().as_slice());
            if coincident {
                r + JITTER
            } else {
                r
            }
        })
    }

    fn standardize_point(&self, x0: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != self.dim() {
            return Err(Error::dim("prediction point", self.dim(), x0.len()));
        }
        Ok(self.input_scaling.apply_row(x0))
    }
}

/// Plug-in BLUP `f0' beta + r0' V^{-1} (y - F beta)` for the chosen variant.
pub fn predict(fitted: &FittedGP, x0: &[f64], variant: PredictorVariant) -> Result<f64> {
    let (sys, rows) = fitted.system(variant)?;
    let z0 = fitted.standardize_point(x0)?;
    let r0 = fitted.correlation_vector(&z0, rows);
    let trend = fitted.beta[0] + z0.iter().zip(fitted.beta.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
    let yhat = trend + r0.dot(&sys.alpha);
    Ok(fitted.response.center + fitted.response.scale * yhat)
}

/// Universal-kriging mean squared prediction error, in response units:
/// `sigma2 (1 + u' (F' V^{-1} F)^{-1} u - r0' V^{-1} r0)`, `u = f0 - F' V^{-1} r0`.
pub fn predict_mse(fitted: &FittedGP, x0: &[f64], variant: PredictorVariant) -> Result<f64> {
    let (sys, rows) = fitted.system(variant)?;
    let z0 = fitted.standardize_point(x0)?;
    let r0 = fitted.correlation_vector(&z0, rows);
    let rel = msep_relative(sys, &r0, &z0);
    Ok(fitted.sigma2_response() * rel)
}

/// MSEP divided by `sigma2`.
pub(crate) fn msep_relative(sys: &Gls, r0: &DVector<f64>, z0: &[f64]) -> f64 {
    let w = sys.l.solve_lower_triangular(r0).expect("factor checked");
    // F' V^{-1} r0 = (L^{-1} F)' (L^{-1} r0)
    let mut u = sys.fw.transpose() * &w;
    u[0] = 1.0 - u[0];
    for (j, v) in z0.iter().enumerate() {
        u[j + 1] = v - u[j + 1];
    }
    let s = sys.r_factor.tr_solve_upper_triangular(&u).expect("R checked nonsingular");
    (1.0 + JITTER - w.norm_squared() + s.norm_squared()).max(0.0)
}

/// Maximum likelihood fit of Model 1 or Model 2 on computer data alone or on
/// the combined data with experimental rows at a fixed `tau`.
pub fn fit_mle(data: &CalibrationDataset, model: Model, which: &Training, opts: &FitOptions) -> Result<FittedGP> {
    let scaling = data.input_scaling();
    let (x_raw, y_raw, n_c) = match which {
        Training::ComputerOnly => (data.computer().inputs(), data.computer().responses().clone(), data.computer().n()),
        Training::Combined(tau) => {
            let set = assemble_combined(data.computer(), data.experimental(), tau)?;
            (set.x, set.y, set.n_computer)
        }
    };
    fit_scaled(&x_raw, &y_raw, n_c, scaling, model, which.clone(), opts)
}

/// Maximum likelihood fit on an arbitrary noiseless point set (no experimental rows).
pub fn fit_points(x: &DMatrix<f64>, y: &DVector<f64>, scaling: InputScaling, model: Model, opts: &FitOptions) -> Result<FittedGP> {
    if x.nrows() != y.len() {
        return Err(Error::dim("training rows", y.len(), x.nrows()));
    }
    fit_scaled(x, y, x.nrows(), scaling, model, Training::ComputerOnly, opts)
}

fn fit_scaled(
    x_raw: &DMatrix<f64>,
    y_raw: &DVector<f64>,
    n_computer: usize,
    scaling: InputScaling,
    model: Model,
    training: Training,
    opts: &FitOptions,
) -> Result<FittedGP> {
    let x = scaling.apply(x_raw);
    let response = ResponseScaling::from_responses(y_raw);
    let y = y_raw.map(|v| (v - response.center) / response.scale);
    let d = x.ncols();
    let n_theta = model.theta_len(d);
    let with_gamma = x.nrows() > n_computer;
    let kind = model.kernel_kind();

    let (kernel, gamma_e) = estimate_hyperparameters(&x, &y, n_computer, kind, n_theta, with_gamma, opts)?;
    FittedGP::assemble(kernel, gamma_e, None, None, training, scaling, response, x, y, n_computer, None)
}

pub(crate) fn estimate_hyperparameters(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n_computer: usize,
    kind: KernelKind,
    n_theta: usize,
    with_gamma: bool,
    opts: &FitOptions,
) -> Result<(KernelSpec, f64)> {
    let f = crate::datamodel::regression_basis(x);
    let dim = n_theta + usize::from(with_gamma);
    let (tlo, thi) = (opts.theta_bounds.0.ln(), opts.theta_bounds.1.ln());
    let (glo, ghi) = (opts.gamma_bounds.0.ln(), opts.gamma_bounds.1.ln());
    let mut lower = vec![tlo; n_theta];
    let mut upper = vec![thi; n_theta];
    if with_gamma {
        lower.push(glo);
        upper.push(ghi);
    }

    let unpack = |p: &[f64]| -> (KernelSpec, f64) {
        let theta = p[..n_theta].iter().map(|v| v.exp()).collect();
        let gamma = if with_gamma { p[n_theta].exp() } else { 0.0 };
        (KernelSpec { kind, theta }, gamma)
    };
    let objective = |p: &[f64]| -> f64 {
        let (k, g) = unpack(p);
        let c = correlation_matrix(x, n_computer, &k, VarianceRatios::experimental(g));
        match Gls::solve(c, &f, y) {
            Ok(gls) => gls.neg2loglik(),
            Err(_) => f64::INFINITY,
        }
    };

    let starts = hyperparameter_starts(n_theta, with_gamma, opts, dim);
    let problem = OptProblem::new(objective, lower, upper, starts);
    let res = minimize(&problem, &opts.minimize).map_err(|_| Error::Optimization("covariance not PD at every likelihood start".into()))?;
    Ok(unpack(&res.argmin))
}

/// One start at `theta = 1, gamma = 0.01` plus a space-filling set in log space.
pub(crate) fn hyperparameter_starts(n_theta: usize, with_gamma: bool, opts: &FitOptions, dim: usize) -> Vec<Vec<f64>> {
    let mut starts = Vec::with_capacity(opts.multistart.max(1));
    let mut first = vec![0.0; n_theta];
    if with_gamma {
        first.push(0.01f64.ln());
    }
    starts.push(first);
    let extra = opts.multistart.saturating_sub(1);
    if extra == 0 {
        return starts;
    }
    let (tlo, thi) = (1e-2f64.ln(), 1e2f64.ln());
    let (glo, ghi) = (1e-6f64.ln(), 0.0);
    let mut rng = rng_stream(opts.seed, dim as u64);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..extra).collect();
        rng.shuffle(&mut strata);
        let (lo, hi) = if j < n_theta { (tlo, thi) } else { (glo, ghi) };
        columns.push(strata.into_iter().map(|s| lo + (hi - lo) * (s as f64 + 0.5) / extra as f64).collect());
    }
    for k in 0..extra {
        starts.push(columns.iter().map(|c| c[k]).collect());
    }
    starts
}
