use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LhsScheme {
    RandomLhs,
    /// Best of `candidates` random LHS draws by minimum pairwise distance.
    MaximinLhs {
        candidates: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n_points: usize,
    pub ranges: Vec<(f64, f64)>,
    pub scheme: LhsScheme,
}

impl DesignSpec {
    pub fn new(n_points: usize, ranges: Vec<(f64, f64)>, scheme: LhsScheme) -> Result<Self> {
        let spec = Self { n_points, ranges, scheme };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 1 {
            return Err(Error::InvalidArgument("design needs at least one point".into()));
        }
        if let Some((j, _)) = self.ranges.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("range {j} must satisfy lower < upper")));
        }
        if let LhsScheme::MaximinLhs { candidates: 0 } = self.scheme {
            return Err(Error::InvalidArgument("maximin LHS needs at least one candidate".into()));
        }
        Ok(())
    }
}

/// Latin hypercube sample over `spec.ranges`.
pub fn lhs(spec: &DesignSpec, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let unit = match spec.scheme {
        LhsScheme::RandomLhs => unit_lhs(spec.n_points, spec.dim(), rng),
        LhsScheme::MaximinLhs { candidates } => {
            let mut best = unit_lhs(spec.n_points, spec.dim(), rng);
            let mut best_d = min_pairwise_distance(&best);
            for _ in 1..candidates {
                let cand = unit_lhs(spec.n_points, spec.dim(), rng);
                let d = min_pairwise_distance(&cand);
                if d > best_d {
                    best = cand;
                    best_d = d;
                }
            }
            best
        }
    };
    Ok(DMatrix::from_fn(spec.n_points, spec.dim(), |i, j| {
        let (lo, hi) = spec.ranges[j];
        lo + (hi - lo) * unit[(i, j)]
    }))
}

/// Random LHS on `[0,1)^d`: one uniform point in each of `n` strata per column.
pub fn unit_lhs(n: usize, d: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        rng.shuffle(&mut strata);
        for (i, &s) in strata.iter().enumerate() {
            m[(i, j)] = (s as f64 + rng.uniform()) / n as f64;
        }
    }
    m
}

/// Smallest Euclidean distance between two rows; infinite for fewer than two rows.
pub fn min_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..x.nrows() {
        for k in 0..i {
            let d2: f64 = x.row(i).iter().zip(x.row(k).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}
