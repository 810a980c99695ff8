//! Exhaustive grid search over allocation plans, used as a test oracle.

use rayon::prelude::*;

use super::{DesignCase, OptimalDesign, Regime};
use crate::error::{Error, Result};
use crate::model::{information_cc, information_ncc_arm2, AllocationPlan, AnalysisMode, Treatment};

/// Coarsest step used for free period fractions.
const PERIOD_STEP_FLOOR: f64 = 0.02;

/// A candidate must beat the incumbent by this relative margin to replace it,
/// so exact ties resolve to the first grid point in scan order.
const TIE_MARGIN: f64 = 1e-13;

/// Number of zoom stages after the global scan. Each stage scans a window of
/// `ZOOM_HALF_WIDTH` previous steps around the incumbent with a step ten
/// times finer.
const ZOOM_STAGES: usize = 3;
const ZOOM_HALF_WIDTH: f64 = 20.0;

/// Scans period-2 proportions on a grid of step `resolution` (periods 1 and
/// 3 split 1:1) and returns the point with the smallest maximum variance.
///
/// The maximum variance is nearly flat along the equal-variance curve, so
/// the best point of a single grid can sit several steps away from the
/// optimum. The best point is therefore re-centred on successively finer
/// local grids, which brings it within a small multiple of
/// `resolution / 1000` of the true minimizer.
///
/// Free period fractions (`Unrestricted`, `FixedR1`) are scanned on a grid of
/// step `max(resolution, 0.02)` that always contains the interval end points.
/// The result is deterministic irrespective of the rayon thread count.
pub fn oracle_grid_search(case: DesignCase<f64>, mode: AnalysisMode, resolution: f64) -> Result<OptimalDesign<f64>> {
    case.validate()?;
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(Error::InvalidParameter(format!("resolution {resolution} outside (0, 0.1]")));
    }

    let period_grid = |lo: f64, hi: f64| -> Vec<f64> {
        let step = resolution.max(PERIOD_STEP_FLOOR);
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        (0..=n).map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 }).collect()
    };

    let splits: Vec<(f64, f64)> = match case {
        DesignCase::FixedR1R2 { r1, r2 } => vec![(r1, r2)],
        DesignCase::FixedR1 { r1 } => period_grid(0.0, 1.0 - r1).into_iter().map(|r2| (r1, r2)).collect(),
        DesignCase::Unrestricted => period_grid(0.0, 1.0)
            .into_iter()
            .flat_map(|r1| period_grid(0.0, 1.0 - r1).into_iter().map(move |r2| (r1, r2)))
            .collect(),
    };

    let steps = (1.0 / resolution).round() as usize;
    let best = splits
        .par_iter()
        .map(|&(r1, r2)| best_for_split(r1, r2, steps, mode))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None, pick);

    let (value, raw) = best.ok_or_else(|| Error::InvalidParameter("grid contains no feasible plan".into()))?;
    let raw = if raw.r()[1] > 0.0 { zoom((value, raw), resolution, mode).1 } else { raw };
    let plan = AllocationPlan::with_middle_row(raw.r(), raw.p()[1])?;
    OptimalDesign::from_plan(plan, classify(&plan), mode)
}

fn pick(best: Option<(f64, AllocationPlan<f64>)>, cand: (f64, AllocationPlan<f64>)) -> Option<(f64, AllocationPlan<f64>)> {
    match best {
        Some(b) if !(cand.0 < b.0 * (1.0 - TIE_MARGIN)) => Some(b),
        _ => Some(cand),
    }
}

/// Objective at a plan with 1:1 splits in periods 1 and 3, or `None` when an
/// arm has no information.
fn evaluate(r: [f64; 3], row: [f64; 3], mode: AnalysisMode) -> Option<(f64, AllocationPlan<f64>)> {
    let plan = AllocationPlan::from_parts_unchecked(r, [[0.5, 0.5, 0.0], row, [0.5, 0.0, 0.5]]);
    let i1 = information_cc(&plan, Treatment::Arm1);
    let i2 = match mode {
        AnalysisMode::ConcurrentOnly => information_cc(&plan, Treatment::Arm2),
        AnalysisMode::WithNonConcurrent => information_ncc_arm2(&plan).ok()?,
    };
    let worst = i1.min(i2);
    (worst > 0.0).then(|| (1.0 / worst, plan))
}

fn zoom(mut best: (f64, AllocationPlan<f64>), resolution: f64, mode: AnalysisMode) -> (f64, AllocationPlan<f64>) {
    let r = best.1.r();
    let mut h = resolution;
    for _ in 0..ZOOM_STAGES {
        let centre = best.1.p()[1];
        let fine = h / 10.0;
        let k = (ZOOM_HALF_WIDTH * 10.0) as i64;
        for i in -k..=k {
            let p12 = centre[1] + i as f64 * fine;
            if !(0.0..=1.0).contains(&p12) {
                continue;
            }
            for j in -k..=k {
                let p22 = centre[2] + j as f64 * fine;
                if p22 < 0.0 || p12 + p22 > 1.0 {
                    continue;
                }
                if let Some(cand) = evaluate(r, [(1.0 - p12 - p22).max(0.0), p12, p22], mode) {
                    best = pick(Some(best), cand).unwrap();
                }
            }
        }
        h = fine;
    }
    best
}

fn best_for_split(r1: f64, r2: f64, steps: usize, mode: AnalysisMode) -> Option<(f64, AllocationPlan<f64>)> {
    let r = [r1, r2, (1.0 - r1 - r2).max(0.0)];
    let h = 1.0 / steps as f64;
    let rows: Box<dyn Iterator<Item = [f64; 3]>> = if r2 > 0.0 {
        Box::new((0..=steps).flat_map(move |i| {
            (0..=steps - i).map(move |j| {
                let p12 = i as f64 * h;
                let p22 = j as f64 * h;
                [(1.0 - p12 - p22).max(0.0), p12, p22]
            })
        }))
    } else {
        Box::new(std::iter::once([0.0; 3]))
    };

    let mut best = None;
    for row in rows {
        if let Some(cand) = evaluate(r, row, mode) {
            best = pick(best, cand);
        }
    }
    best
}

fn classify(plan: &AllocationPlan<f64>) -> Regime {
    let r = plan.r();
    let p = plan.p()[1];
    if r[1] == 1.0 {
        Regime::MultiArm
    } else if p[1] == 0.0 {
        Regime::SeparateTrials
    } else if p[2] == 0.0 {
        Regime::AllToArm1
    } else {
        Regime::Interior
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_resolution() {
        assert!(oracle_grid_search(DesignCase::Unrestricted, AnalysisMode::ConcurrentOnly, 0.5).is_err());
        assert!(oracle_grid_search(DesignCase::Unrestricted, AnalysisMode::ConcurrentOnly, 0.0).is_err());
    }

    #[test]
    fn coarse_symmetric_case() {
        let d = oracle_grid_search(DesignCase::FixedR1R2 { r1: 1.0 / 3.0, r2: 1.0 / 3.0 }, AnalysisMode::ConcurrentOnly, 0.01)
            .unwrap();
        let p = d.plan.p()[1];
        assert!((p[0] - 0.414).abs() < 0.02);
        assert!((p[1] - p[2]).abs() < 0.02);
    }
}
