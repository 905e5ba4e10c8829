use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::imse::{augment_design, imse, mmse, DesignModel};
use super::lhs::{lhs, DesignSpec, LhsScheme};
use crate::datamodel::InputScaling;
use crate::error::{Error, Result};
use crate::gpcore::{fit_points, FitOptions, FittedGP, Model};
use crate::optimizer::{derive_stream_id, rng_stream, RngStream};

const TAG_WEIGHTS: u64 = 11;
const TAG_POOL: u64 = 12;
const TAG_INITIAL: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialConfig {
    /// First-stage design `n_1` points over the design region.
    pub initial: DesignSpec,
    /// Points added per later stage (`n_2`).
    pub stage_size: usize,
    pub max_stages: usize,
    /// Stop once MMSE / `sigma2` falls to this value.
    pub target_mmse: f64,
    pub model: Model,
    /// Uniform weight points `K` for IMSE and MMSE.
    pub weight_points: usize,
    /// Random LHS candidates drawn afresh for every augmentation.
    pub pool_size: usize,
    /// Replace first-stage points by pool points while that lowers IMSE
    /// under the prior kernel (`theta = 0.5`, `gamma_C = 0.001`).
    pub optimize_initial: bool,
    pub fit: FitOptions,
    pub seed: u64,
}

impl SequentialConfig {
    pub fn new(initial: DesignSpec) -> Self {
        Self {
            initial,
            stage_size: 10,
            max_stages: 5,
            target_mmse: 0.0,
            model: Model::Model1,
            weight_points: 1000,
            pool_size: 500,
            optimize_initial: false,
            fit: FitOptions::default(),
            seed: 0x5E0_DE51,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_stages < 1 {
            return Err(Error::InvalidArgument("max_stages must be at least 1".into()));
        }
        if self.weight_points < 1 {
            return Err(Error::InvalidArgument("weight set is empty".into()));
        }
        if self.max_stages > 1 && self.pool_size < self.stage_size {
            return Err(Error::InvalidArgument(format!("candidate pool has {} points, need {}", self.pool_size, self.stage_size)));
        }
        if self.target_mmse.is_nan() {
            return Err(Error::InvalidArgument("target_mmse is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SequentialDesignState {
    pub design: DMatrix<f64>,
    pub responses: DVector<f64>,
    pub fitted: FittedGP,
    /// Per completed stage, on the `sigma2`-normalized scale.
    pub imse_history: Vec<f64>,
    pub mmse_history: Vec<f64>,
    /// Number of design rows after each stage.
    pub stage_sizes: Vec<usize>,
    pub target_mmse: f64,
}

impl SequentialDesignState {
    pub fn stages(&self) -> usize {
        self.imse_history.len()
    }
}

fn stream(seed: u64, parts: &[u64]) -> RngStream {
    rng_stream(seed, derive_stream_id(parts))
}

fn collect<S>(sim: &mut S, design: &DMatrix<f64>, from: usize, stage: usize, out: &mut Vec<f64>) -> Result<()>
where
    S: FnMut(&[f64]) -> std::result::Result<f64, String>,
{
    for i in from..design.nrows() {
        let row: Vec<f64> = design.row(i).iter().copied().collect();
        let y = sim(&row).map_err(|message| Error::Simulator { stage, message })?;
        if !y.is_finite() {
            return Err(Error::Simulator { stage, message: format!("non-finite response {y} at design row {}", i + 1) });
        }
        out.push(y);
    }
    Ok(())
}

/// One pass of single-point exchanges against a pool; keeps a swap when it
/// lowers IMSE.
fn exchange_pass(model: &DesignModel, design: &mut DMatrix<f64>, pool: &DMatrix<f64>, weights: &DMatrix<f64>) -> Result<()> {
    let mut best = imse(model, design, weights)?;
    for i in 0..design.nrows() {
        let mut keep = design.row(i).into_owned();
        for p in 0..pool.nrows() {
            design.row_mut(i).copy_from(&pool.row(p));
            if let Ok(v) = imse(model, design, weights) {
                if v < best {
                    best = v;
                    keep = pool.row(p).into_owned();
                }
            }
        }
        design.row_mut(i).copy_from(&keep);
    }
    Ok(())
}

/// The staged design loop: collect responses, fit by MLE, stop once MMSE
/// reaches the target, otherwise add `stage_size` IMSE-greedy points chosen
/// with the current fit and repeat.
///
/// `simulator` maps one design row (raw units) to a response.
pub fn run_sequential<S>(cfg: &SequentialConfig, mut simulator: S) -> Result<SequentialDesignState>
where
    S: FnMut(&[f64]) -> std::result::Result<f64, String>,
{
    cfg.validate()?;
    let ranges = &cfg.initial.ranges;
    let d = ranges.len();
    let unit = |n: usize| DesignSpec::new(n, ranges.clone(), LhsScheme::RandomLhs);
    let weights = {
        let mut rng = stream(cfg.seed, &[TAG_WEIGHTS]);
        let (lo, hi): (Vec<f64>, Vec<f64>) = ranges.iter().copied().unzip();
        DMatrix::from_fn(cfg.weight_points, d, |_, j| rng.uniform_in(lo[j], hi[j]))
    };
    let (lo, hi): (Vec<f64>, Vec<f64>) = ranges.iter().copied().unzip();
    let scaling = InputScaling::from_bounds(&lo, &hi);

    let mut design = lhs(&cfg.initial, &mut stream(cfg.seed, &[TAG_INITIAL]))?;
    if cfg.optimize_initial {
        let pool = lhs(&unit(cfg.pool_size.max(1))?, &mut stream(cfg.seed, &[TAG_INITIAL, TAG_POOL]))?;
        exchange_pass(&DesignModel::prior(ranges)?, &mut design, &pool, &weights)?;
    }

    let mut y = Vec::with_capacity(design.nrows());
    collect(&mut simulator, &design, 0, 1, &mut y)?;
    let mut imse_history = Vec::new();
    let mut mmse_history = Vec::new();
    let mut stage_sizes = Vec::new();
    let mut stage = 1;
    loop {
        let fit_opts = FitOptions { seed: derive_stream_id(&[cfg.fit.seed, stage as u64]), ..cfg.fit.clone() };
        let fitted = fit_points(&design, &DVector::from_column_slice(&y), scaling.clone(), cfg.model, &fit_opts)?;
        let model = DesignModel::from_fitted(&fitted);
        imse_history.push(imse(&model, &design, &weights)?);
        let m = mmse(&model, &design, &weights)?;
        mmse_history.push(m);
        stage_sizes.push(design.nrows());
        if m <= cfg.target_mmse || stage >= cfg.max_stages || cfg.stage_size == 0 {
            return Ok(SequentialDesignState {
                responses: DVector::from_vec(y),
                design,
                fitted,
                imse_history,
                mmse_history,
                stage_sizes,
                target_mmse: cfg.target_mmse,
            });
        }
        stage += 1;
        let pool = lhs(&unit(cfg.pool_size)?, &mut stream(cfg.seed, &[TAG_POOL, stage as u64]))?;
        let before = design.nrows();
        design = augment_design(&model, &design, cfg.stage_size, &pool, &weights)?.design;
        collect(&mut simulator, &design, before, stage, &mut y)?;
    }
}
