//! Latin hypercube designs and the sequential IMSE/MMSE design procedure.

mod imse;
mod lhs;
mod sequential;

pub use imse::{augment_design, imse, mmse, msep_at, Augmentation, DesignModel};
pub use lhs::{lhs, min_pairwise_distance, unit_lhs, DesignSpec, LhsScheme};
pub use sequential::{run_sequential, SequentialConfig, SequentialDesignState};
