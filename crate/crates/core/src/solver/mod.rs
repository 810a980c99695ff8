//! Optimal allocation plans.
//!
//! The objective is the larger of the two effect-estimator variances. Periods
//! 1 and 3 are always split 1:1 at the optimum, so every solver only has to
//! choose the period fractions that are free under the [`DesignCase`] and the
//! three period-2 proportions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{max_variance, AllocationPlan, AnalysisMode, TrialParams, VarianceProfile};
use crate::scalar::Real;

mod concurrent;
mod nonconcurrent;
mod oracle;
mod rounding;
mod sample_size;

pub use concurrent::{eq8_right_side, solve_case2_cc, solve_case3_cc};
pub use nonconcurrent::{case2_ncc_closed_form, solve_case2_ncc, solve_case3_ncc};
pub use oracle::oracle_grid_search;
pub use rounding::{
    round_allocation, round_period_totals, strategy_table, AllocationStrategy, CellRounding, CountTable,
    StrategyTable,
};
pub use sample_size::{min_sample_size, standard_error};

/// Which period fractions are fixed in advance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum DesignCase<T> {
    /// Entry of arm 2 and exit of arm 1 are both design choices.
    Unrestricted,
    /// Arm 2 enters after a fixed fraction `r1` of the patients.
    FixedR1 { r1: T },
    /// Both the entry of arm 2 (`r1`) and the exit of arm 1 (`r1 + r2`) are fixed.
    FixedR1R2 { r1: T, r2: T },
}

impl<T: Real> DesignCase<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: T| {
            if x.is_finite() && x >= T::zero() && x <= T::one() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {x} outside [0, 1]")))
            }
        };
        match *self {
            DesignCase::Unrestricted => Ok(()),
            DesignCase::FixedR1 { r1 } => unit("r1", r1),
            DesignCase::FixedR1R2 { r1, r2 } => {
                unit("r1", r1)?;
                unit("r2", r2)?;
                if !(r1 > T::zero()) {
                    return Err(Error::InvalidParameter("fixed_r1_r2 requires r1 > 0".into()));
                }
                if r1 + r2 > T::one() + T::lit(1e-12) {
                    return Err(Error::InvalidParameter(format!("r1 + r2 = {} exceeds 1", r1 + r2)));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings<T> {
    /// Absolute tolerance of scalar root finding and minimization.
    pub root_tol: T,
    /// Relative tolerance of the equal-variance certificate.
    pub constraint_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self { root_tol: T::lit(1e-12), constraint_tol: T::lit(1e-10), max_iter: 200 }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.root_tol > T::zero()) || !(self.constraint_tol > T::zero()) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        if self.max_iter < 10 {
            return Err(Error::InvalidParameter("max_iter must be at least 10".into()));
        }
        Ok(())
    }
}

/// Qualitative form of an optimal design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Equal variances with all three arms sharing period 2.
    Interior,
    /// Arm 1 receives no period-2 patients; the trial behaves like two
    /// consecutive two-arm trials. Other optima with the same variances exist
    /// (any `r2` with the 1:0:1 split in period 2).
    SeparateTrials,
    /// Period 2 is split 1:1 between control and arm 1.
    AllToArm1,
    /// One period with all arms: the classical 1:1:sqrt(2) multi-arm trial.
    MultiArm,
    /// Two-period equal-variance design from the closed-form solution under
    /// non-concurrent controls.
    TwoPeriod,
}

/// An optimal plan with its variance profile.
///
/// `profile` is normalized to `N = 1`, `sigma = 1`, so its entries are the
/// inverse information per patient; use [`OptimalDesign::profile_for`] for a
/// concrete trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalDesign<T> {
    pub plan: AllocationPlan<T>,
    pub profile: VarianceProfile<T>,
    pub regime: Regime,
    pub mode: AnalysisMode,
}

impl<T: Real> OptimalDesign<T> {
    pub(crate) fn from_plan(plan: AllocationPlan<T>, regime: Regime, mode: AnalysisMode) -> Result<Self> {
        let profile = max_variance(&plan, &unit_params(), mode)?;
        Ok(Self { plan, profile, regime, mode })
    }

    pub fn profile_for(&self, params: &TrialParams<T>) -> Result<VarianceProfile<T>> {
        max_variance(&self.plan, params, self.mode)
    }

    /// Checks the equal-variance certificate for equal-variance regimes.
    pub(crate) fn certified(self, settings: &SolverSettings<T>) -> Result<Self> {
        if matches!(self.regime, Regime::Interior | Regime::TwoPeriod)
            && !(self.profile.relative_gap() <= settings.constraint_tol)
        {
            return Err(Error::Solver {
                reason: format!("equal-variance certificate failed (relative gap {})", self.profile.relative_gap()),
                lo: self.profile.var1.as_f64(),
                hi: self.profile.var2.as_f64(),
                f_lo: f64::NAN,
                f_hi: f64::NAN,
            });
        }
        Ok(self)
    }
}

pub(crate) fn unit_params<T: Real>() -> TrialParams<T> {
    TrialParams { total_n: 1, sigma: T::one() }
}

/// The 1:1:sqrt(2) period-2 allocation.
pub fn sqrt2_row<T: Real>() -> [T; 3] {
    let s = T::SQRT_2();
    [T::one() / (T::one() + s), T::one() - T::one() / s, T::one() - T::one() / s]
}

/// Single-period multi-arm trial with 1:1:sqrt(2) allocation; optimal without
/// restrictions under both analysis modes.
pub fn solve_case1<T: Real>(mode: AnalysisMode) -> OptimalDesign<T> {
    let plan = AllocationPlan::with_middle_row([T::zero(), T::one(), T::zero()], sqrt2_row())
        .expect("multi-arm plan is valid");
    OptimalDesign::from_plan(plan, Regime::MultiArm, mode).expect("multi-arm plan has finite variances")
}

/// Dispatches to the case- and mode-specific solver.
pub fn solve<T: Real>(case: DesignCase<T>, mode: AnalysisMode, settings: &SolverSettings<T>) -> Result<OptimalDesign<T>> {
    case.validate()?;
    settings.validate()?;
    match (case, mode) {
        (DesignCase::Unrestricted, _) => Ok(solve_case1(mode)),
        (DesignCase::FixedR1 { r1 }, AnalysisMode::ConcurrentOnly) => solve_case2_cc(r1, settings),
        (DesignCase::FixedR1 { r1 }, AnalysisMode::WithNonConcurrent) => solve_case2_ncc(r1, settings),
        (DesignCase::FixedR1R2 { r1, r2 }, AnalysisMode::ConcurrentOnly) => solve_case3_cc(r1, r2, settings),
        (DesignCase::FixedR1R2 { r1, r2 }, AnalysisMode::WithNonConcurrent) => solve_case3_ncc(r1, r2, settings),
    }
}

/// Third period fraction, clamped against rounding below zero.
pub(crate) fn remaining<T: Real>(r1: T, r2: T) -> T {
    (T::one() - r1 - r2).max(T::zero())
}

pub(crate) fn check_unit<T: Real>(name: &str, x: T) -> Result<()> {
    if x.is_finite() && x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {x} outside [0, 1]")))
    }
}

pub(crate) fn check_pair<T: Real>(r1: T, r2: T) -> Result<()> {
    check_unit("r1", r1)?;
    check_unit("r2", r2)?;
    if r1 + r2 > T::one() + T::lit(1e-12) {
        return Err(Error::InvalidParameter(format!("r1 + r2 = {} exceeds 1", r1 + r2)));
    }
    Ok(())
}

/// Design with arm 1 absent from period 2 and 1:1 splits everywhere else.
pub(crate) fn separate_trials<T: Real>(r: [T; 3], mode: AnalysisMode) -> Result<OptimalDesign<T>> {
    let h = T::half();
    let plan = AllocationPlan::with_middle_row(r, [h, T::zero(), h])?;
    OptimalDesign::from_plan(plan, Regime::SeparateTrials, mode)
}

/// Design giving all of period 2 to control and arm 1 in equal parts.
pub(crate) fn all_to_arm1<T: Real>(r: [T; 3], mode: AnalysisMode) -> Result<OptimalDesign<T>> {
    let h = T::half();
    let plan = AllocationPlan::with_middle_row(r, [h, h, T::zero()])?;
    OptimalDesign::from_plan(plan, Regime::AllToArm1, mode)
}
