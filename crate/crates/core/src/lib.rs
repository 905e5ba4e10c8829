//! Tuning-parameter estimation for computer codes with Gaussian-process
//! surrogates: approximate nonlinear least squares, separated and full
//! maximum likelihood, and the iterative Max-min algorithm.

// Argument guards are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod calibrate;
pub mod datamodel;
pub mod design;
pub mod error;
pub mod gpcore;
pub mod optimizer;

pub use datamodel::{CalibrationDataset, ComputerData, DesignMatrixSet, ExperimentalData, InputScaling, VarianceRatios};
pub use error::{Error, Result};
pub use gpcore::{FitOptions, FittedGP, KernelKind, KernelSpec, Model, PredictorVariant, Training};
