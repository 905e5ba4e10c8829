//! Gaussian correlation kernels, the concentrated likelihood, GLS estimation,
//! and the three plug-in predictors.

mod fit;
mod gls;
mod kernel;

pub use fit::{fit_mle, fit_points, predict, predict_mse, FitOptions, FittedGP, PredictorVariant, ResponseScaling, Training};
pub use gls::{concentrated_neg2loglik, gls_beta, LikelihoodValue};
pub use kernel::{kernel_eval, KernelKind, KernelSpec, Model};

pub(crate) use fit::hyperparameter_starts;
pub(crate) use gls::{correlation_matrix, Gls};
