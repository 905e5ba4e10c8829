use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::datamodel::{DesignMatrixSet, VarianceRatios, JITTER};
use crate::error::{Error, Result};
use crate::gpcore::KernelSpec;

/// `-2 log L` of the concentrated likelihood with the constants
/// `n log(2 pi) + n` dropped: `n log sigma2_hat + log |V|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodValue {
    pub neg2loglik: f64,
}

/// Correlation-scale covariance `R + diag(gamma) + JITTER I` of a design.
pub(crate) fn correlation_matrix(x: &DMatrix<f64>, n_computer: usize, kernel: &KernelSpec, ratios: VarianceRatios) -> DMatrix<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = 1.0 + JITTER + if i < n_computer { ratios.gamma_c } else { ratios.gamma_e };
        for j in 0..i {
            let r = kernel.correlation_slices(&rows[i], &rows[j]);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    c
}

/// Generalized least squares system for one covariance matrix.
///
/// Everything is expressed through the Cholesky factor `C = L L^T`; no explicit
/// inverse is formed. `F^T C^{-1} F = R^T R` with `R` from the QR
/// decomposition of the whitened basis `L^{-1} F`.
#[derive(Debug, Clone)]
pub(crate) struct Gls {
    pub l: DMatrix<f64>,
    pub beta: DVector<f64>,
    /// `C^{-1} (y - F beta)`.
    pub alpha: DVector<f64>,
    /// `(y - F beta)^T C^{-1} (y - F beta) / n`.
    pub sigma2: f64,
    pub log_det: f64,
    /// Upper-triangular factor of `F^T C^{-1} F`.
    pub r_factor: DMatrix<f64>,
    /// Whitened basis `L^{-1} F`.
    pub fw: DMatrix<f64>,
}

impl Gls {
    pub fn factor(c: DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l = Cholesky::new(c).ok_or(Error::NotPositiveDefinite)?.unpack();
        if l.diagonal().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(l)
    }

    /// Profiles `beta` by GLS.
    pub fn solve(c: DMatrix<f64>, f: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let l = Self::factor(c)?;
        let (beta, r_factor, fw) = whitened_ls(&l, f, y)?;
        Ok(Self::finish(l, f, y, beta, r_factor, fw))
    }

    /// Uses a supplied `beta` instead of the GLS estimate.
    pub fn with_beta(c: DMatrix<f64>, f: &DMatrix<f64>, y: &DVector<f64>, beta: DVector<f64>) -> Result<Self> {
        let l = Self::factor(c)?;
        let fw = l.solve_lower_triangular(f).ok_or(Error::NotPositiveDefinite)?;
        let r_factor = qr_r(&fw)?;
        Ok(Self::finish(l, f, y, beta, r_factor, fw))
    }

    fn finish(l: DMatrix<f64>, f: &DMatrix<f64>, y: &DVector<f64>, beta: DVector<f64>, r_factor: DMatrix<f64>, fw: DMatrix<f64>) -> Self {
        let resid = y - f * &beta;
        let w = l.solve_lower_triangular(&resid).expect("factor checked");
        let n = y.len().max(1) as f64;
        let sigma2 = w.norm_squared() / n;
        let alpha = l.tr_solve_lower_triangular(&w).expect("factor checked");
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Self { l, beta, alpha, sigma2, log_det, r_factor, fw }
    }

    pub fn neg2loglik(&self) -> f64 {
        let n = self.alpha.len() as f64;
        n * self.sigma2.max(f64::MIN_POSITIVE).ln() + self.log_det
    }
}

fn qr_r(fw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if fw.nrows() < fw.ncols() {
        return Err(Error::SingularGls);
    }
    let r = fw.clone().qr().r();
    check_rank(&r)?;
    Ok(r)
}

fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(diag_max > 0.0) || r.diagonal().iter().any(|v| v.abs() <= 1e-10 * diag_max || !v.is_finite()) {
        return Err(Error::SingularGls);
    }
    Ok(())
}

/// Least squares on the whitened system `L^{-1} F beta ~ L^{-1} y`.
fn whitened_ls(l: &DMatrix<f64>, f: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let fw = l.solve_lower_triangular(f).ok_or(Error::NotPositiveDefinite)?;
    let yw = l.solve_lower_triangular(y).ok_or(Error::NotPositiveDefinite)?;
    let (n, k) = fw.shape();
    if n < k {
        return Err(Error::SingularGls);
    }
    let qr = fw.clone().qr();
    let r = qr.r();
    check_rank(&r)?;
    let qty = qr.q().transpose() * yw;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::SingularGls)?;
    Ok((beta, r, fw))
}

/// GLS coefficients `(F^T V^{-1} F)^{-1} F^T V^{-1} y` from a Cholesky factor of `V`.
pub fn gls_beta(f: &DMatrix<f64>, v_chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if f.nrows() != y.len() {
        return Err(Error::dim("GLS basis rows", y.len(), f.nrows()));
    }
    if v_chol.l_dirty().nrows() != y.len() {
        return Err(Error::dim("GLS covariance order", y.len(), v_chol.l_dirty().nrows()));
    }
    let l = v_chol.l();
    whitened_ls(&l, f, y).map(|(b, _, _)| b)
}

/// Concentrated `-2 log L` with `beta` and `sigma2` profiled out; `log |V|`
/// comes from the Cholesky diagonal of the correlation-scale covariance.
pub fn concentrated_neg2loglik(kernel: &KernelSpec, ratios: VarianceRatios, data: &DesignMatrixSet) -> Result<LikelihoodValue> {
    kernel.validate(data.dim())?;
    if !(ratios.gamma_c >= 0.0 && ratios.gamma_e >= 0.0) {
        return Err(Error::InvalidArgument("variance ratios must be nonnegative".into()));
    }
    let c = correlation_matrix(&data.x, data.n_computer, kernel, ratios);
    let gls = Gls::solve(c, &data.f, &data.y)?;
    Ok(LikelihoodValue { neg2loglik: gls.neg2loglik() })
}
