//! Optimal allocation in three-period platform trials with a shared control.
//!
//! Arm 1 recruits in periods 1 and 2 and arm 2 in periods 2 and 3, both
//! against one control arm. The crate computes the allocation proportions
//! that minimize the larger of the two effect-estimator variances, with arm 2
//! analysed either against concurrent controls only or against all controls,
//! and checks the resulting designs by simulating the regression analysis.
//!
//! The design math in [`model`] and [`solver`] is generic over the scalar
//! type ([`scalar::Real`]); the aliases at the crate root fix it to `f64`.
//! Regression and simulation work in `f64` only.

pub mod dataset;
pub mod error;
pub mod linmod;
pub mod model;
pub mod roots;
pub mod scalar;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use model::{AnalysisMode, Treatment};

pub type AllocationPlan = model::AllocationPlan<f64>;
pub type TrialParams = model::TrialParams<f64>;
pub type VarianceProfile = model::VarianceProfile<f64>;
pub type OptimalDesign = solver::OptimalDesign<f64>;
pub type DesignCase = solver::DesignCase<f64>;
pub type SolverSettings = solver::SolverSettings<f64>;
