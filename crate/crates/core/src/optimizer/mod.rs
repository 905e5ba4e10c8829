//! Smooth box-constrained minimization and the small statistical utilities
//! shared by the fitting, calibration, and design code.

mod bfgs;
mod fdist;
mod rng;

pub use bfgs::{minimize, MinimizeOptions, OptProblem, OptResult};
pub use fdist::{f_cdf, f_quantile};
pub use rng::{derive_stream_id, rng_stream, RngStream};
