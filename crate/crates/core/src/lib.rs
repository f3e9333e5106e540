//! L1-penalized quantile regression with an unknown change point.

pub mod error;
pub mod estimator;
pub mod exec;
pub mod harness;
pub mod inference;
mod linalg;
pub mod model;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{
    augmented_row, check_loss, column_weights, empirical_risk, risk_profile, CoefVector, Dataset, GridProvenance,
    ThresholdGrid, ThresholdedModel,
};
pub use solver::{
    kkt_residual, solve_penalized_qr, solve_restricted_qr, PenaltySpec, SolveOptions, SolveReport, SolveStatus,
};
