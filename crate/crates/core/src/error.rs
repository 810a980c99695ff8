use thiserror::Error;

/// Errors raised by the design model, the solvers, the regression fitter and
/// the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid allocation plan: {0}")]
    InvalidPlan(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Neither of the arm's periods carries information about its effect.
    #[error("estimand undefined: arm {arm} has no period with positive information")]
    EstimandUndefined { arm: u8 },

    #[error("numeric domain error: {0}")]
    Domain(String),

    /// A scalar root or minimum could not be located.
    #[error("solver failure: {reason} (bracket [{lo}, {hi}], f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Solver {
        reason: String,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("regression: no observations selected by the model")]
    NoRows,

    #[error("regression: target arm {arm} has no observations")]
    TargetArmAbsent { arm: u8 },

    #[error("regression: design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("regression: no residual degrees of freedom ({n_obs} observations, {n_columns} columns)")]
    NoResidualDf { n_obs: usize, n_columns: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
