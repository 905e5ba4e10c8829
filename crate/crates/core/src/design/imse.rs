use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{regression_basis, InputScaling, JITTER};
use crate::error::{Error, Result};
use crate::gpcore::{FittedGP, Gls, KernelSpec};

/// Correlation structure used to score designs. MSEP divided by `sigma2`
/// depends on nothing else, so no responses are needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignModel {
    pub kernel: KernelSpec,
    /// `gamma_C`, added to the diagonal of the design correlation matrix.
    pub nugget: f64,
    pub scaling: InputScaling,
}

impl DesignModel {
    pub const PRIOR_THETA: f64 = 0.5;
    pub const PRIOR_NUGGET: f64 = 0.001;

    pub fn new(kernel: KernelSpec, nugget: f64, scaling: InputScaling) -> Result<Self> {
        kernel.validate(scaling.dim())?;
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::InvalidArgument("design nugget must be nonnegative".into()));
        }
        Ok(Self { kernel, nugget, scaling })
    }

    /// Common `theta = 0.5`, `gamma_C = 0.001` over the given box, for when no
    /// fit exists yet.
    pub fn prior(ranges: &[(f64, f64)]) -> Result<Self> {
        let (lo, hi): (Vec<f64>, Vec<f64>) = ranges.iter().copied().unzip();
        Self::new(KernelSpec::common(Self::PRIOR_THETA), Self::PRIOR_NUGGET, InputScaling::from_bounds(&lo, &hi))
    }

    /// The kernel and input scaling of a computer-data fit (`gamma_C = 0`).
    pub fn from_fitted(fitted: &FittedGP) -> Self {
        Self { kernel: fitted.kernel().clone(), nugget: 0.0, scaling: fitted.input_scaling().clone() }
    }

    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    fn check(&self, what: &'static str, m: &DMatrix<f64>) -> Result<()> {
        if m.ncols() != self.dim() {
            return Err(Error::dim(what, self.dim(), m.ncols()));
        }
        Ok(())
    }

    fn corr(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.kernel.correlation_slices(a, b);
        if a == b {
            r + JITTER
        } else {
            r
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Factorized design scored against a fixed weight set, in scaled coordinates.
struct Scored {
    z: Vec<Vec<f64>>,
    l: DMatrix<f64>,
    fw: DMatrix<f64>,
    /// `L^{-1} R(S, M)`, one column per weight point.
    w: DMatrix<f64>,
    /// `f(M)' - Fw' W`.
    u: DMatrix<f64>,
    msep: Vec<f64>,
}

impl Scored {
    fn new(model: &DesignModel, z: Vec<Vec<f64>>, m: &[Vec<f64>], fm: &DMatrix<f64>) -> Result<Self> {
        let n = z.len();
        let p = model.dim() + 1;
        if n < p {
            return Err(Error::SingularGls);
        }
        let mut c = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            c[(i, i)] = 1.0 + JITTER + model.nugget;
            for j in 0..i {
                let r = model.kernel.correlation_slices(&z[i], &z[j]);
                c[(i, j)] = r;
                c[(j, i)] = r;
            }
        }
        let l = Gls::factor(c)?;
        let zm = DMatrix::from_fn(n, model.dim(), |i, j| z[i][j]);
        let fw = l.solve_lower_triangular(&regression_basis(&zm)).ok_or(Error::NotPositiveDefinite)?;
        let rsm = DMatrix::from_fn(n, m.len(), |i, k| model.corr(&z[i], &m[k]));
        let w = l.solve_lower_triangular(&rsm).ok_or(Error::NotPositiveDefinite)?;
        let u = fm.transpose() - fw.transpose() * &w;
        let r = upper_factor(&fw)?;
        let msep = (0..m.len())
            .map(|k| {
                let s = r.tr_solve_upper_triangular(&u.column(k).into_owned()).expect("rank checked");
                (1.0 + JITTER - w.column(k).norm_squared() + s.norm_squared()).max(0.0)
            })
            .collect();
        Ok(Self { z, l, fw, w, u, msep })
    }

    /// Mean MSEP after adding one point, from a rank-one extension of the
    /// factorization. `None` if the point is numerically already in the design.
    fn imse_with(&self, model: &DesignModel, zp: &[f64], m: &[Vec<f64>], fp: &DVector<f64>) -> Option<f64> {
        let n = self.z.len();
        let cp = DVector::from_fn(n, |i, _| model.corr(&self.z[i], zp));
        let lp = self.l.solve_lower_triangular(&cp)?;
        let d2 = 1.0 + JITTER + model.nugget - lp.norm_squared();
        if !(d2 > 0.0) {
            return None;
        }
        let d = d2.sqrt();
        let fwp = (fp - self.fw.transpose() * &lp) / d;
        let mut fw = self.fw.clone().insert_row(n, 0.0);
        fw.row_mut(n).copy_from(&fwp.transpose());
        let r = upper_factor(&fw).ok()?;
        let wl = self.w.transpose() * &lp;
        let mut total = 0.0;
        for (k, mk) in m.iter().enumerate() {
            let wp = (model.corr(zp, mk) - wl[k]) / d;
            let uk = self.u.column(k) - &fwp * wp;
            let s = r.tr_solve_upper_triangular(&uk)?;
            total += (1.0 + JITTER - self.w.column(k).norm_squared() - wp * wp + s.norm_squared()).max(0.0);
        }
        Some(total / m.len() as f64)
    }
}

fn upper_factor(fw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = fw.clone().qr().r();
    let diag_max = r.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if !(diag_max > 0.0) || r.diagonal().iter().any(|v| !(v.abs() > 1e-10 * diag_max)) {
        return Err(Error::SingularGls);
    }
    Ok(r)
}

/// MSEP / `sigma2` at every weight point for a GP conditioned on `design`.
///
/// An empty design gives the prior value 1. A nonempty design with fewer
/// than `d + 1` distinct rows cannot identify the linear trend and fails with
/// [`Error::SingularGls`].
pub fn msep_at(model: &DesignModel, design: &DMatrix<f64>, weights: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.check("design", design)?;
    model.check("weight points", weights)?;
    if weights.nrows() == 0 {
        return Err(Error::InvalidArgument("weight set is empty".into()));
    }
    if design.nrows() == 0 {
        return Ok(vec![1.0; weights.nrows()]);
    }
    let z = rows(&model.scaling.apply(design));
    let zm = model.scaling.apply(weights);
    let m = rows(&zm);
    Ok(Scored::new(model, z, &m, &regression_basis(&zm))?.msep)
}

/// Mean of MSEP / `sigma2` over the weight points.
pub fn imse(model: &DesignModel, design: &DMatrix<f64>, weights: &DMatrix<f64>) -> Result<f64> {
    let v = msep_at(model, design, weights)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Largest MSEP / `sigma2` over the weight points.
pub fn mmse(model: &DesignModel, design: &DMatrix<f64>, weights: &DMatrix<f64>) -> Result<f64> {
    Ok(msep_at(model, design, weights)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    /// `design` followed by the chosen pool rows, in selection order.
    pub design: DMatrix<f64>,
    /// Pool row indices in selection order.
    pub chosen: Vec<usize>,
    /// IMSE after each selection.
    pub imse_path: Vec<f64>,
}

/// Greedily adds `n2` pool points, each minimizing IMSE given the points
/// already in the design. Ties go to the lowest pool index.
pub fn augment_design(model: &DesignModel, design: &DMatrix<f64>, n2: usize, pool: &DMatrix<f64>, weights: &DMatrix<f64>) -> Result<Augmentation> {
    model.check("design", design)?;
    model.check("candidate pool", pool)?;
    model.check("weight points", weights)?;
    if weights.nrows() == 0 {
        return Err(Error::InvalidArgument("weight set is empty".into()));
    }
    if pool.nrows() < n2 {
        return Err(Error::InvalidArgument(format!("candidate pool has {} points, need {n2}", pool.nrows())));
    }
    let z = rows(&model.scaling.apply(design));
    let pz = rows(&model.scaling.apply(pool));
    for p in &pz {
        if z.iter().any(|q| q.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            return Err(Error::InvalidArgument("candidate pool overlaps the current design".into()));
        }
    }
    let zm = model.scaling.apply(weights);
    let m = rows(&zm);
    let fm = regression_basis(&zm);
    let pf = regression_basis(&DMatrix::from_fn(pz.len(), model.dim(), |i, j| pz[i][j]));

    let mut out = design.clone();
    let mut current = z;
    let mut taken = vec![false; pz.len()];
    let mut chosen = Vec::with_capacity(n2);
    let mut imse_path = Vec::with_capacity(n2);
    for _ in 0..n2 {
        let scored = Scored::new(model, current.clone(), &m, &fm)?;
        let values: Vec<f64> = (0..pz.len())
            .into_par_iter()
            .map(|i| {
                if taken[i] {
                    return f64::INFINITY;
                }
                let fp = pf.row(i).transpose();
                scored.imse_with(model, &pz[i], &m, &fp).unwrap_or(f64::INFINITY)
            })
            .collect();
        let best =
            (0..values.len()).filter(|&i| values[i].is_finite()).min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))).ok_or(Error::SingularGls)?;
        taken[best] = true;
        chosen.push(best);
        imse_path.push(values[best]);
        current.push(pz[best].clone());
        let n = out.nrows();
        out = out.insert_row(n, 0.0);
        let last = out.nrows() - 1;
        out.row_mut(last).copy_from(&pool.row(best));
    }
    Ok(Augmentation { design: out, chosen, imse_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::unit_lhs;
    use crate::optimizer::rng_stream;

    fn with_row(d: &DMatrix<f64>, pool: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
        let mut out = d.clone().insert_row(d.nrows(), 0.0);
        out.row_mut(d.nrows()).copy_from(&pool.row(i));
        out
    }

    fn unit_model(d: usize, theta: f64, nugget: f64) -> DesignModel {
        DesignModel::new(KernelSpec::common(theta), nugget, InputScaling::identity(d)).unwrap()
    }

    #[test]
    fn design_covering_weights_has_zero_imse() {
        let w = unit_lhs(12, 2, &mut rng_stream(1, 1));
        let model = unit_model(2, 3.0, 0.0);
        assert!(imse(&model, &w, &w).unwrap() <= 1e-8);
        assert!(mmse(&model, &w, &w).unwrap() <= 1e-8);
    }

    #[test]
    fn empty_design_is_prior() {
        let w = unit_lhs(7, 3, &mut rng_stream(2, 1));
        let model = unit_model(3, 1.0, 0.0);
        assert_eq!(imse(&model, &DMatrix::zeros(0, 3), &w).unwrap(), 1.0);
    }

    #[test]
    fn too_few_points_is_singular() {
        let w = unit_lhs(5, 2, &mut rng_stream(3, 1));
        let model = unit_model(2, 1.0, 0.0);
        let d = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.7, 0.9]);
        assert_eq!(imse(&model, &d, &w).unwrap_err(), Error::SingularGls);
    }

    #[test]
    fn mmse_bounds_imse_and_single_weight() {
        let model = unit_model(2, 2.0, 0.001);
        let d = unit_lhs(6, 2, &mut rng_stream(4, 1));
        let w = unit_lhs(40, 2, &mut rng_stream(4, 2));
        assert!(mmse(&model, &d, &w).unwrap() >= imse(&model, &d, &w).unwrap());
        let one = w.rows(0, 1).into_owned();
        assert_eq!(mmse(&model, &d, &one).unwrap(), imse(&model, &d, &one).unwrap());
    }

    #[test]
    fn incremental_update_matches_refactorization() {
        let model = unit_model(3, 1.5, 0.001);
        let d = unit_lhs(6, 3, &mut rng_stream(5, 1));
        let w = unit_lhs(30, 3, &mut rng_stream(5, 2));
        let pool = unit_lhs(15, 3, &mut rng_stream(5, 3));
        let aug = augment_design(&model, &d, 1, &pool, &w).unwrap();
        let exhaustive: Vec<f64> = (0..pool.nrows()).map(|i| imse(&model, &with_row(&d, &pool, i), &w).unwrap()).collect();
        let best = (0..exhaustive.len()).min_by(|&a, &b| exhaustive[a].total_cmp(&exhaustive[b])).unwrap();
        assert_eq!(aug.chosen, vec![best]);
        assert!((aug.imse_path[0] - exhaustive[best]).abs() < 1e-10);
    }

    #[test]
    fn zero_points_and_small_pool() {
        let model = unit_model(2, 1.0, 0.0);
        let d = unit_lhs(4, 2, &mut rng_stream(6, 1));
        let w = unit_lhs(10, 2, &mut rng_stream(6, 2));
        let pool = unit_lhs(3, 2, &mut rng_stream(6, 3));
        let a = augment_design(&model, &d, 0, &pool, &w).unwrap();
        assert_eq!(a.design, d);
        assert!(a.chosen.is_empty());
        assert!(augment_design(&model, &d, 4, &pool, &w).is_err());
        assert!(augment_design(&model, &d, 1, &d, &w).is_err());
    }
}
