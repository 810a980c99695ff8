//! Optimal designs when arm 2 is also compared with non-concurrent controls.

use std::cell::Cell;

use super::{
    all_to_arm1, check_pair, check_unit, remaining, separate_trials, solve_case1, solve_case3_cc, OptimalDesign,
    Regime, SolverSettings,
};
use crate::error::{Error, Result};
use crate::model::{AllocationPlan, AnalysisMode};
use crate::roots::{brent_minimize, brent_root};
use crate::scalar::Real;

const MODE: AnalysisMode = AnalysisMode::WithNonConcurrent;

/// Below this `r1` the radical expressions lose the optimal branch to
/// cancellation and the numerical solver is used instead.
const CLOSED_FORM_MIN_R1: f64 = 1e-6;

/// Radicands this far below zero are treated as rounding noise.
const RADICAND_SLACK: f64 = 1e-12;

/// Period-2 allocation `(p02, p12, p22)` of the two-period optimum
/// (`r3 = 0`, `0 < r1 < 1/2`) from the closed-form radical expressions.
pub fn case2_ncc_closed_form<T: Real>(r1: T) -> Result<[T; 3]> {
    if !(r1 > T::zero() && r1 < T::half()) {
        return Err(Error::InvalidParameter(format!("closed form needs 0 < r1 < 1/2, got {r1}")));
    }
    let lit = T::lit;
    let one = T::one();
    let s3 = lit(3.0).sqrt();
    let root = |name: &str, x: T| -> Result<T> {
        if x >= T::zero() {
            Ok(x.sqrt())
        } else if x > -lit(RADICAND_SLACK) {
            Ok(T::zero())
        } else {
            Err(Error::Domain(format!("negative radicand {x} in {name}")))
        }
    };

    let cubic = lit(3.0) * (r1 - lit(4.0)) * r1;
    let inner = root("a", r1 * (lit(16.0) - lit(9.0) * r1 * (cubic + lit(8.0))))?;
    let a = (lit(9.0) * r1 * (cubic + lit(4.0)) + lit(6.0) * s3 * inner + lit(8.0)).cbrt();
    let b = lit(6.0) * (a - lit(4.0)) * r1 + (a - lit(2.0)).powi(2) + lit(9.0) * r1 * r1;
    if !(b < T::zero()) {
        return Err(Error::Domain(format!("closed form requires b < 0, got {b}")));
    }

    let rest = one - r1;
    let cross = root("p22 cross term", a.powi(3) * rest / -b)?;
    let tail = root(
        "p22",
        lit(4.0) + lit(8.0) * a + a * a - lit(12.0) * (lit(2.0) + a) * r1 + lit(12.0) * r1 * s3 * cross
            + lit(9.0) * r1 * r1,
    )?;
    let p22 = one + ((-b).sqrt() - tail) / (lit(4.0) * s3 * (a * rest).sqrt());

    // Arm-1 share: the radical is written in the period-2 share of all
    // patients, x = p22 (1 - r1).
    let x = p22 * rest;
    let disc = root("p12", lit(4.0) * r1 * x - r1 + lit(4.0) * x * x - lit(4.0) * x + one)?;
    let p12 = (one - disc - r1) / (T::two() * rest);
    let p02 = one - p12 - p22;

    let row = [p02, p12, p22];
    if row.iter().any(|&v| !(v >= T::zero() && v <= one)) {
        return Err(Error::Domain(format!("closed form left the simplex: {row:?}")));
    }
    Ok(row)
}

/// Case 2 with non-concurrent controls: `r1` fixed, `r2` free.
pub fn solve_case2_ncc<T: Real>(r1: T, settings: &SolverSettings<T>) -> Result<OptimalDesign<T>> {
    check_unit("r1", r1)?;
    settings.validate()?;
    if r1 >= T::half() {
        return separate_trials([r1, T::zero(), T::one() - r1], MODE);
    }
    if r1 == T::zero() {
        return Ok(solve_case1(MODE));
    }
    let r = [r1, T::one() - r1, T::zero()];
    let row = if r1 < T::lit(CLOSED_FORM_MIN_R1) {
        interior_row(r, settings)?
    } else {
        case2_ncc_closed_form(r1)?
    };
    let plan = AllocationPlan::with_middle_row(r, row)?;
    OptimalDesign::from_plan(plan, Regime::TwoPeriod, MODE)?.certified(settings)
}

/// Case 3 with non-concurrent controls: `r1` and `r2` fixed.
pub fn solve_case3_ncc<T: Real>(r1: T, r2: T, settings: &SolverSettings<T>) -> Result<OptimalDesign<T>> {
    check_pair(r1, r2)?;
    settings.validate()?;
    let half = T::half();
    let r = [r1, r2, remaining(r1, r2)];

    if r1 == T::zero() {
        // Without a first period there are no non-concurrent controls.
        let cc = solve_case3_cc(r1, r2, settings)?;
        return OptimalDesign::from_plan(cc.plan, cc.regime, MODE);
    }
    if r1 > half {
        return separate_trials(r, MODE);
    }
    if r1 + r2 <= half {
        return all_to_arm1(r, MODE);
    }
    let row = interior_row(r, settings)?;
    if row[1] == T::zero() {
        // Only reachable at r1 = 1/2, where both regimes coincide.
        return separate_trials(r, MODE);
    }
    let plan = AllocationPlan::with_middle_row(r, row)?;
    OptimalDesign::from_plan(plan, Regime::Interior, MODE)?.certified(settings)
}

/// Information functions with 1:1 splits in periods 1 and 3.
struct Informations<T> {
    r1: T,
    r2: T,
    r3: T,
}

impl<T: Real> Informations<T> {
    fn arm1(&self, p12: T, p22: T) -> T {
        let p02 = T::one() - p12 - p22;
        let s = p12 + p02;
        let h = if s > T::zero() { p12 * p02 / s } else { T::zero() };
        self.r1 * T::lit(0.25) + self.r2 * h
    }

    fn arm2(&self, p12: T, p22: T) -> T {
        let q = |x: T| x * (T::one() - x);
        let num = self.r2 * p12 * p12 * p22 * p22;
        let correction = if num > T::zero() { num / (self.r1 * T::lit(0.25) + self.r2 * q(p12)) } else { T::zero() };
        self.r3 * T::lit(0.25) + self.r2 * (q(p22) - correction)
    }

    /// Best arm-1 share for a given `p22` and the smaller information there.
    ///
    /// Arm-1 information is concave in `p12` with its peak at half the
    /// non-arm-2 share, and arm-2 information never increases with `p12`.
    /// The maximum of the smaller one is therefore the single crossing left
    /// of the peak, or an end of that interval when they do not cross.
    fn best_arm1_share(&self, p22: T, settings: &SolverSettings<T>) -> (T, T) {
        let peak = (T::one() - p22) * T::half();
        let gap = |p12: T| self.arm1(p12, p22) - self.arm2(p12, p22);
        if gap(peak) <= T::zero() {
            return (peak, self.arm1(peak, p22));
        }
        if gap(T::zero()) >= T::zero() {
            return (T::zero(), self.arm2(T::zero(), p22));
        }
        // The gap increases on [0, peak], so the bracket always holds.
        let p12 = brent_root(gap, T::zero(), peak, settings.root_tol * T::lit(1e-2), settings.max_iter)
            .unwrap_or(peak);
        (p12, self.arm1(p12, p22).min(self.arm2(p12, p22)))
    }
}

/// Maximizes the smaller of the two informations over `p22`, with the
/// arm-1 share chosen optimally for each `p22`.
fn interior_row<T: Real>(r: [T; 3], settings: &SolverSettings<T>) -> Result<[T; 3]> {
    let info = Informations { r1: r[0], r2: r[1], r3: r[2] };
    // Keeps the best evaluation, so the result never depends on where the
    // minimizer happens to stop.
    let incumbent: Cell<Option<(T, T, T)>> = Cell::new(None);
    let objective = |p22: T| {
        let (p12, value) = info.best_arm1_share(p22, settings);
        if incumbent.get().is_none_or(|(_, _, b)| value > b) {
            incumbent.set(Some((p22, p12, value)));
        }
        -value
    };

    // Uniform points plus a geometric run towards zero: close to the
    // r1 + r2 = 1/2 boundary the optimal p22 is tiny.
    const GRID: usize = 128;
    const TAIL: i32 = 40;
    let step = T::one() / T::from_usize(GRID).unwrap();
    let mut points = vec![T::zero()];
    points.extend((1..=TAIL).rev().map(|j| step * T::lit(0.5).powi(j)));
    points.extend((1..GRID).map(|k| step * T::from_usize(k).unwrap()));

    let mut best = (0, T::infinity());
    for (k, &p22) in points.iter().enumerate() {
        let v = objective(p22);
        if v < best.1 {
            best = (k, v);
        }
    }
    let k = best.0;
    let lo = points[k.saturating_sub(1)];
    let hi = points.get(k + 1).copied().unwrap_or(T::one());
    brent_minimize(&objective, lo, hi, settings.root_tol, settings.max_iter);
    let (p22, p12, _) = incumbent.get().expect("the scan evaluates the objective");
    Ok([T::one() - p12 - p22, p12, p22])
}
