//! Optimal designs when both arms are compared with concurrent controls only.

use super::{
    all_to_arm1, check_pair, check_unit, remaining, separate_trials, solve_case1, OptimalDesign, Regime,
    SolverSettings,
};
use crate::error::{Error, Result};
use crate::model::{AllocationPlan, AnalysisMode};
use crate::roots::scan_roots;
use crate::scalar::Real;

const MODE: AnalysisMode = AnalysisMode::ConcurrentOnly;

/// Right-hand side of the Lagrange condition for `p22`; the interior optimum
/// solves `eq8_right_side(p22) = r2 / (1 - 2 r1)`. Increasing on `(0, 1/2)`
/// from `1/2` with a pole at `p22 = 1/2`.
pub fn eq8_right_side<T: Real>(p22: T) -> T {
    let two = T::two();
    let one = T::one();
    let poly = p22 * (p22 * (p22 * (two * p22 * (two * p22 - T::lit(7.0)) + T::lit(19.0)) - T::lit(15.0)) + T::lit(7.0))
        - two;
    let q = one - p22;
    q * q * q / ((two * p22 - one) * poly)
}

/// Control proportion implied by the first-order conditions for a given `p22`.
pub(crate) fn control_from_p22<T: Real>(p22: T) -> T {
    T::one() / (T::two() * (T::one() - p22)) - p22
}

/// Case 3: `r1` and `r2` fixed, concurrent controls.
pub fn solve_case3_cc<T: Real>(r1: T, r2: T, settings: &SolverSettings<T>) -> Result<OptimalDesign<T>> {
    check_pair(r1, r2)?;
    settings.validate()?;
    let r = [r1, r2, remaining(r1, r2)];
    let half = T::half();

    if r1 >= half {
        return separate_trials(r, MODE);
    }
    if r1 + r2 <= half {
        return all_to_arm1(r, MODE);
    }

    let ratio = r2 / (T::one() - T::two() * r1);
    // Near the pole eq8_right_side(p) ~ 0.2 / (1 - 2p); stop where it is about 2 * ratio.
    let upper = half - T::lit(1e-3).min(T::lit(0.05) / ratio);
    let roots = scan_roots(
        |p22| eq8_right_side(p22) - ratio,
        T::zero(),
        upper,
        64,
        settings.root_tol,
        settings.max_iter,
    );

    let mut best: Option<OptimalDesign<T>> = None;
    for p22 in roots {
        let p02 = control_from_p22(p22);
        let p12 = T::one() - p02 - p22;
        let inside = |x: T| x > T::zero() && x < T::one();
        if !(inside(p02) && inside(p12) && inside(p22)) {
            continue;
        }
        let Ok(plan) = AllocationPlan::with_middle_row(r, [p02, p12, p22]) else {
            continue;
        };
        let design = OptimalDesign::from_plan(plan, Regime::Interior, MODE)?;
        if best.as_ref().is_none_or(|b| design.profile.max_var < b.profile.max_var) {
            best = Some(design);
        }
    }

    match best {
        Some(design) => design.certified(settings),
        None => Err(Error::Solver {
            reason: format!("no admissible root of the p22 condition for r2 / (1 - 2 r1) = {ratio}"),
            lo: 0.0,
            hi: upper.as_f64(),
            f_lo: (eq8_right_side(T::zero()) - ratio).as_f64(),
            f_hi: (eq8_right_side(upper) - ratio).as_f64(),
        }),
    }
}

/// Case 2: `r1` fixed, `r2` free, concurrent controls.
///
/// For `r1 > 1/2` the canonical optimum is two consecutive trials (`r2 = 0`);
/// otherwise arm 1 runs until the end (`r3 = 0`) and period 2 follows the
/// Case-3 solution.
pub fn solve_case2_cc<T: Real>(r1: T, settings: &SolverSettings<T>) -> Result<OptimalDesign<T>> {
    check_unit("r1", r1)?;
    settings.validate()?;
    if r1 > T::half() {
        return separate_trials([r1, T::zero(), T::one() - r1], MODE);
    }
    if r1 == T::zero() {
        return Ok(solve_case1(MODE));
    }
    solve_case3_cc(r1, T::one() - r1, settings)
}
