//! Structural types of the three-period platform trial and the closed-form
//! variances of the period-stratified effect estimators.
//!
//! Periods are indexed `0..3` and arms `0..3` (0 = control). Arm 1 recruits in
//! periods 0 and 1, arm 2 in periods 1 and 2. Variances are reported in
//! outcome units squared, i.e. with `sigma^2 / N` folded in; the dimensionless
//! "information" accessors return the bracket that is inverted to get them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const N_PERIODS: usize = 3;
pub const N_ARMS: usize = 3;

/// Slack used when checking that proportions sum to one.
const PLAN_TOL: f64 = 1e-9;

/// One of the two experimental arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Treatment {
    #[serde(rename = "1")]
    Arm1,
    #[serde(rename = "2")]
    Arm2,
}

impl Treatment {
    pub const BOTH: [Treatment; 2] = [Treatment::Arm1, Treatment::Arm2];

    /// Column index of the arm in an allocation row.
    pub fn index(self) -> usize {
        match self {
            Treatment::Arm1 => 1,
            Treatment::Arm2 => 2,
        }
    }

    /// The two (zero-based) periods in which the arm recruits.
    pub fn periods(self) -> [usize; 2] {
        match self {
            Treatment::Arm1 => [0, 1],
            Treatment::Arm2 => [1, 2],
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            1 => Some(Treatment::Arm1),
            2 => Some(Treatment::Arm2),
            _ => None,
        }
    }
}

/// Which controls enter the arm-2 comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum AnalysisMode {
    /// Stratified estimators with concurrent controls for both arms.
    #[default]
    #[serde(rename = "cc", alias = "concurrent_only")]
    ConcurrentOnly,
    /// Arm 2 estimated from the period-adjusted model fitted to all data,
    /// which borrows the period-1 controls. Arm 1 is unaffected.
    #[serde(rename = "ncc", alias = "with_non_concurrent")]
    WithNonConcurrent,
}

impl AnalysisMode {
    pub const BOTH: [AnalysisMode; 2] = [AnalysisMode::ConcurrentOnly, AnalysisMode::WithNonConcurrent];

    pub fn short_name(self) -> &'static str {
        match self {
            AnalysisMode::ConcurrentOnly => "cc",
            AnalysisMode::WithNonConcurrent => "ncc",
        }
    }
}

/// Period fractions `r` and per-period allocation proportions `p[period][arm]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan<T> {
    r: [T; N_PERIODS],
    p: [[T; N_ARMS]; N_PERIODS],
}

impl<T: Real> AllocationPlan<T> {
    /// Builds a plan and checks every structural invariant.
    pub fn new(r: [T; N_PERIODS], p: [[T; N_ARMS]; N_PERIODS]) -> Result<Self> {
        let plan = Self { r, p };
        plan.validate()?;
        Ok(plan)
    }

    /// Builds a plan, forcing the rows of empty periods to zero and clearing
    /// the structurally absent cells (arm 2 in period 0, arm 1 in period 2).
    pub fn normalized(r: [T; N_PERIODS], mut p: [[T; N_ARMS]; N_PERIODS]) -> Result<Self> {
        p[0][2] = T::zero();
        p[2][1] = T::zero();
        for s in 0..N_PERIODS {
            if r[s] == T::zero() {
                p[s] = [T::zero(); N_ARMS];
            }
        }
        Self::new(r, p)
    }

    /// Plan with equal 1:1 splits in periods 0 and 2 and the given period-1 row.
    pub fn with_middle_row(r: [T; N_PERIODS], middle: [T; N_ARMS]) -> Result<Self> {
        let h = T::half();
        Self::normalized(r, [[h, h, T::zero()], middle, [h, T::zero(), h]])
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(r: [T; N_PERIODS], p: [[T; N_ARMS]; N_PERIODS]) -> Self {
        Self { r, p }
    }

    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(PLAN_TOL);
        let mut total = T::zero();
        for (s, &rs) in self.r.iter().enumerate() {
            if !rs.is_finite() || rs < T::zero() || rs > T::one() + tol {
                return Err(Error::InvalidPlan(format!("period fraction r[{}] = {} outside [0, 1]", s + 1, rs)));
            }
            total = total + rs;
        }
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidPlan(format!("period fractions sum to {total}, expected 1")));
        }
        if self.p[0][2] != T::zero() {
            return Err(Error::InvalidPlan("arm 2 cannot recruit in period 1".into()));
        }
        if self.p[2][1] != T::zero() {
            return Err(Error::InvalidPlan("arm 1 cannot recruit in period 3".into()));
        }
        for s in 0..N_PERIODS {
            let row = self.p[s];
            if row.iter().any(|&x| !x.is_finite() || x < T::zero() || x > T::one() + tol) {
                return Err(Error::InvalidPlan(format!("period {} proportions outside [0, 1]", s + 1)));
            }
            let sum = row[0] + row[1] + row[2];
            if self.r[s] > T::zero() {
                if (sum - T::one()).abs() > tol {
                    return Err(Error::InvalidPlan(format!("period {} proportions sum to {sum}", s + 1)));
                }
            } else if sum != T::zero() {
                return Err(Error::InvalidPlan(format!("empty period {} must have all-zero proportions", s + 1)));
            }
        }
        Ok(())
    }

    pub fn r(&self) -> [T; N_PERIODS] {
        self.r
    }

    pub fn p(&self) -> [[T; N_ARMS]; N_PERIODS] {
        self.p
    }

    /// Proportion of all patients who land in `(period, arm)`.
    pub fn cell_fraction(&self, period: usize, arm: usize) -> T {
        self.r[period] * self.p[period][arm]
    }

    /// Fraction of all patients allocated to `arm` over the whole trial.
    pub fn arm_fraction(&self, arm: usize) -> T {
        (0..N_PERIODS).fold(T::zero(), |acc, s| acc + self.cell_fraction(s, arm))
    }

    /// Plan in which every cell fraction is taken from a count table.
    pub fn from_counts(counts: &[[u64; N_ARMS]; N_PERIODS]) -> Result<Self> {
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidParameter("count table is empty".into()));
        }
        let n = T::from_u64(total).unwrap();
        let mut r = [T::zero(); N_PERIODS];
        let mut p = [[T::zero(); N_ARMS]; N_PERIODS];
        for s in 0..N_PERIODS {
            let ns: u64 = counts[s].iter().sum();
            r[s] = T::from_u64(ns).unwrap() / n;
            if ns > 0 {
                for i in 0..N_ARMS {
                    p[s][i] = T::from_u64(counts[s][i]).unwrap() / T::from_u64(ns).unwrap();
                }
            }
        }
        Self::new(r, p)
    }
}

/// Total sample size and outcome standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialParams<T> {
    pub total_n: u64,
    pub sigma: T,
}

impl<T: Real> TrialParams<T> {
    pub fn new(total_n: u64, sigma: T) -> Result<Self> {
        let params = Self { total_n, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_n < 1 {
            return Err(Error::InvalidParameter("total_n must be at least 1".into()));
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// `sigma^2 / N`, the factor that turns information into variance.
    pub fn scale(&self) -> T {
        self.sigma * self.sigma / T::from_u64(self.total_n).unwrap()
    }
}

/// Variances of both effect estimators at a given plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile<T> {
    pub var1: T,
    pub var2: T,
    pub max_var: T,
    pub ratio_vs_separate: T,
}

impl<T: Real> VarianceProfile<T> {
    /// Relative gap `|var1 - var2| / max_var`.
    pub fn relative_gap(&self) -> T {
        if self.max_var.is_infinite() {
            return if self.var1 == self.var2 { T::zero() } else { T::infinity() };
        }
        (self.var1 - self.var2).abs() / self.max_var
    }
}

#[inline]
fn harmonic_term<T: Real>(a: T, b: T) -> T {
    let s = a + b;
    if s > T::zero() {
        a * b / s
    } else {
        T::zero()
    }
}

/// Per-period information terms `r_s * p_i p_0 / (p_i + p_0)` for the arm's
/// two periods. Zero allocation or an empty period contributes exactly 0.
pub fn period_information<T: Real>(plan: &AllocationPlan<T>, arm: Treatment) -> [T; 2] {
    let i = arm.index();
    arm.periods().map(|s| {
        if plan.r[s] > T::zero() {
            plan.r[s] * harmonic_term(plan.p[s][i], plan.p[s][0])
        } else {
            T::zero()
        }
    })
}

/// Dimensionless information of the stratified concurrent-control estimator;
/// `var_cc = sigma^2 / N / information_cc`.
pub fn information_cc<T: Real>(plan: &AllocationPlan<T>, arm: Treatment) -> T {
    let [a, b] = period_information(plan, arm);
    a + b
}

/// Variance of the stratified concurrent-control estimator of `arm`.
/// Returns `+inf` when neither period carries information.
pub fn var_cc<T: Real>(plan: &AllocationPlan<T>, arm: Treatment, params: &TrialParams<T>) -> Result<T> {
    plan.validate()?;
    params.validate()?;
    Ok(invert(information_cc(plan, arm), params))
}

fn invert<T: Real>(information: T, params: &TrialParams<T>) -> T {
    if information > T::zero() {
        params.scale() / information
    } else {
        T::infinity()
    }
}

/// Inverse-variance weights of the two period-wise differences for `arm`.
/// The weights are independent of `N` and `sigma`; `params` is only validated.
pub fn weights_cc<T: Real>(plan: &AllocationPlan<T>, arm: Treatment, params: &TrialParams<T>) -> Result<(T, T)> {
    plan.validate()?;
    params.validate()?;
    let [a, b] = period_information(plan, arm);
    let total = a + b;
    if !(total > T::zero()) {
        return Err(Error::EstimandUndefined { arm: arm.label() });
    }
    Ok((a / total, b / total))
}

/// Dimensionless information of the arm-2 coefficient in the model fitted to
/// all three periods (non-concurrent controls borrowed through the period
/// effects). Errors when the bracket is non-positive although arm 2 has data.
pub fn information_ncc_arm2<T: Real>(plan: &AllocationPlan<T>) -> Result<T> {
    let [r1, r2, r3] = plan.r;
    let q = |x: T| x * (T::one() - x);
    let p11 = plan.p[0][1];
    let p12 = plan.p[1][1];
    let p22 = plan.p[1][2];
    let p23 = plan.p[2][2];

    let numerator = r2 * p12 * p12 * p22 * p22;
    let correction = if numerator > T::zero() {
        numerator / (r1 * q(p11) + r2 * q(p12))
    } else {
        T::zero()
    };
    let info = r3 * q(p23) + r2 * (q(p22) - correction);
    let has_arm2 = plan.cell_fraction(1, 2) > T::zero() || plan.cell_fraction(2, 2) > T::zero();
    if has_arm2 && info <= T::zero() {
        // Arm 2 recruited but every control in its periods is missing.
        let concurrent = information_cc(plan, Treatment::Arm2);
        if concurrent > T::zero() || info < -T::lit(1e-14) {
            return Err(Error::Domain(format!(
                "non-concurrent information bracket {} is not positive",
                info
            )));
        }
    }
    Ok(info.max(T::zero()))
}

/// Variance of the arm-2 effect estimator that also uses non-concurrent controls.
pub fn var_ncc_arm2<T: Real>(plan: &AllocationPlan<T>, params: &TrialParams<T>) -> Result<T> {
    plan.validate()?;
    params.validate()?;
    Ok(invert(information_ncc_arm2(plan)?, params))
}

/// Weight `rho` of the arm-1 bridge `(theta_11 - theta_12)` in the two-period
/// non-concurrent estimator of arm 2.
pub fn rho_two_period<T: Real>(n01: T, n02: T, n11: T, n12: T) -> Result<T> {
    for (name, n) in [("n01", n01), ("n02", n02), ("n11", n11), ("n12", n12)] {
        if !(n > T::zero()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {n}")));
        }
    }
    let recip = |n: T| T::one() / n;
    Ok(recip(n02) / (recip(n01) + recip(n02) + recip(n11) + recip(n12)))
}

/// Variance of `theta_22 + rho (theta_11 - theta_12)` in a two-period trial,
/// computed directly from the cell counts.
pub fn var_ncc_two_period<T: Real>(n01: T, n02: T, n11: T, n12: T, n22: T, sigma: T) -> Result<T> {
    if !(n22 > T::zero()) {
        return Err(Error::InvalidParameter("n22 must be positive".into()));
    }
    let rho = rho_two_period(n01, n02, n11, n12)?;
    let direct = T::one() / n22 + T::one() / n02;
    Ok(sigma * sigma * (direct - rho / n02))
}

/// Arm-2 information under the given analysis mode.
pub fn information<T: Real>(plan: &AllocationPlan<T>, arm: Treatment, mode: AnalysisMode) -> Result<T> {
    match (arm, mode) {
        (Treatment::Arm2, AnalysisMode::WithNonConcurrent) => information_ncc_arm2(plan),
        _ => Ok(information_cc(plan, arm)),
    }
}

/// Both variances, their maximum, and the ratio to two separate trials.
///
/// The separate-trials reference splits the `N` patients between two
/// independent 1:1 trials in proportion to the arms' total allocations, so
/// that trial `i` has `N * n_i / (n_1 + n_2)` patients and variance
/// `4 sigma^2 / N_i`.
pub fn max_variance<T: Real>(
    plan: &AllocationPlan<T>,
    params: &TrialParams<T>,
    mode: AnalysisMode,
) -> Result<VarianceProfile<T>> {
    plan.validate()?;
    params.validate()?;
    let var1 = invert(information(plan, Treatment::Arm1, mode)?, params);
    let var2 = invert(information(plan, Treatment::Arm2, mode)?, params);
    let max_var = var1.max(var2);

    let n1 = plan.arm_fraction(1);
    let n2 = plan.arm_fraction(2);
    let smaller = n1.min(n2);
    let ratio_vs_separate = if smaller > T::zero() {
        let reference = T::lit(4.0) * params.scale() * (n1 + n2) / smaller;
        max_var / reference
    } else {
        T::infinity()
    };
    Ok(VarianceProfile { var1, var2, max_var, ratio_vs_separate })
}
