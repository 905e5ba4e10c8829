use serde::{Deserialize, Serialize};

use super::{rss_p, BiasCorrection, TuningEstimate};
use crate::datamodel::ExperimentalData;
use crate::error::{Error, Result};
use crate::optimizer::{f_quantile, minimize, MinimizeOptions, OptProblem};

/// How coordinates outside the plotted pair are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionMode {
    /// Held at `tau_hat`.
    Slice,
    /// Re-minimized at every grid point, starting from `tau_hat`.
    Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    /// Axis ranges for the pair; `None` uses the fitted tuning box.
    pub ranges: Option<[(f64, f64); 2]>,
    pub mode: RegionMode,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points_per_axis: 21, ranges: None, mode: RegionMode::Slice }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub tau_i: f64,
    pub tau_j: f64,
    pub rss_p: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub alpha: f64,
    pub pair: (usize, usize),
    pub mode: RegionMode,
    pub rss_hat: f64,
    pub f_value: f64,
    pub threshold: f64,
    pub grid: Vec<RegionPoint>,
}

/// `rss_hat * (1 + q / (n_E - q) * F_alpha(q, n_E - q))` and the F value used.
pub fn region_threshold(rss_hat: f64, q: usize, n_e: usize, alpha: f64) -> Result<(f64, f64)> {
    if n_e <= q || q == 0 {
        return Err(Error::InvalidArgument(format!("confidence region needs 0 < q < n_E, got q={q}, n_E={n_e}")));
    }
    let f = f_quantile(alpha, q as u32, (n_e - q) as u32)?;
    Ok((rss_hat * (1.0 + q as f64 / (n_e - q) as f64 * f), f))
}

/// Evaluates RSS_P on a lattice over the coordinate pair and flags the points
/// inside the approximate `100(1-alpha)%` region. The lattice axes always
/// contain the coordinates of `tau_hat`.
pub fn confidence_region(est: &TuningEstimate, exp: &ExperimentalData, alpha: f64, pair: (usize, usize), grid: &GridSpec) -> Result<ConfidenceRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    let q = est.tau_hat.len();
    let (pi, pj) = pair;
    if pi == pj || pi >= q || pj >= q {
        return Err(Error::InvalidArgument(format!("degenerate grid: pair ({pi}, {pj}) with q={q}")));
    }
    if grid.points_per_axis < 2 {
        return Err(Error::InvalidArgument("degenerate grid: need at least 2 points per axis".into()));
    }
    let scaling = est.fitted_gp.input_scaling();
    let box_range = |j: usize| {
        let lo = scaling.invert_coord(j, 0.0);
        (lo, scaling.invert_coord(j, 1.0))
    };
    let ranges = grid.ranges.unwrap_or([box_range(pi), box_range(pj)]);
    for (lo, hi) in ranges {
        if !(lo < hi) {
            return Err(Error::InvalidArgument("degenerate grid: empty axis range".into()));
        }
    }
    let axis = |(lo, hi): (f64, f64), centre: f64| -> Vec<f64> {
        let n = grid.points_per_axis;
        let mut v: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        if !v.contains(&centre) {
            v.push(centre);
            v.sort_by(f64::total_cmp);
        }
        v
    };
    let ai = axis(ranges[0], est.tau_hat[pi]);
    let aj = axis(ranges[1], est.tau_hat[pj]);

    let (threshold, f_value) = region_threshold(est.rss_p, q, exp.n(), alpha)?;
    let eval = |tau: &[f64], b: Option<BiasCorrection>| -> f64 {
        let r = if est.rows_follow_tau {
            est.fitted_gp.recondition_at(tau).and_then(|g| rss_p(tau, &g, est.predictor_variant, exp, b))
        } else {
            rss_p(tau, &est.fitted_gp, est.predictor_variant, exp, b)
        };
        r.unwrap_or(f64::INFINITY)
    };
    let others: Vec<usize> = (0..q).filter(|&k| k != pi && k != pj).collect();

    let mut points = Vec::with_capacity(ai.len() * aj.len());
    for &ti in &ai {
        for &tj in &aj {
            let mut tau = est.tau_hat.clone();
            tau[pi] = ti;
            tau[pj] = tj;
            let value = match grid.mode {
                RegionMode::Slice => eval(&tau, est.bias),
                RegionMode::Profile if others.is_empty() => eval(&tau, est.bias),
                RegionMode::Profile => profile(&tau, &others, est, &eval),
            };
            points.push(RegionPoint { tau_i: ti, tau_j: tj, rss_p: value, inside: value <= threshold });
        }
    }
    Ok(ConfidenceRegion { alpha, pair, mode: grid.mode, rss_hat: est.rss_p, f_value, threshold, grid: points })
}

fn profile<F>(tau: &[f64], others: &[usize], est: &TuningEstimate, eval: &F) -> f64
where
    F: Fn(&[f64], Option<BiasCorrection>) -> f64,
{
    let scaling = est.fitted_gp.input_scaling();
    let start: Vec<f64> = others.iter().map(|&k| scaling.apply_coord(k, tau[k]).clamp(0.0, 1.0)).collect();
    let objective = |u: &[f64]| {
        let mut t = tau.to_vec();
        for (&k, &v) in others.iter().zip(u) {
            t[k] = scaling.invert_coord(k, v);
        }
        eval(&t, est.bias)
    };
    let problem = OptProblem::new(objective, vec![0.0; others.len()], vec![1.0; others.len()], vec![start]);
    minimize(&problem, &MinimizeOptions::default()).map_or(f64::INFINITY, |r| r.value)
}
