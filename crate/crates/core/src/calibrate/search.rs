use crate::datamodel::CalibrationDataset;
use crate::design::unit_lhs;
use crate::error::{Error, Result};
use crate::optimizer::{derive_stream_id, minimize, rng_stream, MinimizeOptions, OptProblem};

use super::BiasCorrection;

const RHO_BOUNDS: (f64, f64) = (-10.0, 10.0);
/// `delta` is searched in units of the experimental response SD plus its mean magnitude.
const DELTA_BOUNDS: (f64, f64) = (-10.0, 10.0);

/// Stream tags so that every stage draws from its own RNG stream.
pub(crate) const TAG_INITIAL: u64 = 1;
pub(crate) const TAG_STEP4: u64 = 2;
pub(crate) const TAG_FLUCTUATION: u64 = 3;
pub(crate) const TAG_SMLE: u64 = 4;
pub(crate) const TAG_FULL: u64 = 5;

/// The tuning box; optimizers work on the unit cube.
#[derive(Debug, Clone)]
pub(crate) struct TauSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TauSpace {
    pub fn of(data: &CalibrationDataset) -> Self {
        Self { lower: data.tau_bounds().iter().map(|b| b.0).collect(), upper: data.tau_bounds().iter().map(|b| b.1).collect() }
    }

    pub fn q(&self) -> usize {
        self.lower.len()
    }

    pub fn tau(&self, u: &[f64]) -> Vec<f64> {
        (0..self.q()).map(|j| self.lower[j] + u[j] * (self.upper[j] - self.lower[j])).collect()
    }

    pub fn unit(&self, tau: &[f64]) -> Vec<f64> {
        (0..self.q())
            .map(|j| {
                let w = self.upper[j] - self.lower[j];
                if w > 0.0 {
                    ((tau[j] - self.lower[j]) / w).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn clamp(&self, tau: &mut [f64]) {
        for (j, t) in tau.iter_mut().enumerate() {
            *t = t.clamp(self.lower[j], self.upper[j]);
        }
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }
}

/// A located RSS_P minimum.
#[derive(Debug, Clone)]
pub(crate) struct RssMinimum {
    pub tau: Vec<f64>,
    pub bias: Option<BiasCorrection>,
    pub value: f64,
}

pub(crate) struct RssSearch<'a> {
    pub space: &'a TauSpace,
    pub bias: bool,
    pub delta_scale: f64,
    pub n_starts: usize,
    pub minimize: &'a MinimizeOptions,
    pub seed: u64,
}

impl RssSearch<'_> {
    /// Minimizes `objective(tau, bias)` from the warm starts followed by
    /// space-filling starts drawn from the stream keyed by `stream`.
    pub fn run<F>(&self, objective: F, warm: &[(Vec<f64>, Option<BiasCorrection>)], stream: &[u64]) -> Result<RssMinimum>
    where
        F: Fn(&[f64], Option<BiasCorrection>) -> f64,
    {
        let q = self.space.q();
        let dim = q + if self.bias { 2 } else { 0 };
        let unpack = |p: &[f64]| -> (Vec<f64>, Option<BiasCorrection>) {
            let tau = self.space.tau(&p[..q]);
            let bias = self.bias.then(|| BiasCorrection { rho: p[q], delta: p[q + 1] * self.delta_scale });
            (tau, bias)
        };
        if dim == 0 {
            let value = objective(&[], None);
            return Ok(RssMinimum { tau: Vec::new(), bias: None, value });
        }

        let mut starts: Vec<Vec<f64>> = warm
            .iter()
            .map(|(tau, b)| {
                let mut p = self.space.unit(tau);
                if self.bias {
                    let b = b.unwrap_or(BiasCorrection::IDENTITY);
                    p.push(b.rho.clamp(RHO_BOUNDS.0, RHO_BOUNDS.1));
                    p.push((b.delta / self.delta_scale).clamp(DELTA_BOUNDS.0, DELTA_BOUNDS.1));
                }
                p
            })
            .collect();
        let fresh = self.n_starts.max(1).saturating_sub(starts.len()).max(usize::from(starts.is_empty()));
        let mut rng = rng_stream(self.seed, derive_stream_id(stream));
        let unit = unit_lhs(fresh, q, &mut rng);
        for i in 0..fresh {
            let mut p: Vec<f64> = unit.row(i).iter().copied().collect();
            if self.bias {
                p.push(BiasCorrection::IDENTITY.rho);
                p.push(BiasCorrection::IDENTITY.delta);
            }
            starts.push(p);
        }

        let mut lower = vec![0.0; q];
        let mut upper = vec![1.0; q];
        if self.bias {
            lower.extend([RHO_BOUNDS.0, DELTA_BOUNDS.0]);
            upper.extend([RHO_BOUNDS.1, DELTA_BOUNDS.1]);
        }
        let problem = OptProblem::new(
            |p: &[f64]| {
                let (tau, b) = unpack(p);
                objective(&tau, b)
            },
            lower,
            upper,
            starts,
        );
        let res = minimize(&problem, self.minimize).map_err(|e| match e {
            Error::Optimization(m) => Error::Optimization(format!("RSS_P search: {m}")),
            other => other,
        })?;
        let (tau, bias) = unpack(&res.argmin);
        Ok(RssMinimum { tau, bias, value: res.value })
    }
}
