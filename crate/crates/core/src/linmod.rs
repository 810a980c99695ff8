//! Period-adjusted linear models for the treatment effects.
//!
//! Three model layouts are used: arm 1 against its concurrent controls
//! (periods 1 and 2), arm 2 against its concurrent controls (periods 2 and
//! 3), and arm 2 against all controls (periods 1 to 3) with a separate mean
//! shift for every period. Each model has an intercept, one indicator per
//! experimental arm and one indicator per non-reference period.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dataset::TrialDataset;
use crate::error::{Error, Result};
use crate::model::{AnalysisMode, Treatment};

/// Relative pivot size below which a column counts as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Which patients and columns enter a regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub target: Treatment,
    pub mode: AnalysisMode,
    /// Periods whose patients are included, numbered 1 to 3.
    pub periods_used: Vec<u8>,
    /// Arms whose patients are included, 0 being control.
    pub arms_used: Vec<u8>,
    /// Periods that get an indicator column. The first included period
    /// without one is the reference.
    pub period_effects: Vec<u8>,
}

impl ModelSpec {
    /// Concurrent-control model for `arm`: its two periods, all arms, and an
    /// indicator for the later period.
    pub fn concurrent(arm: Treatment) -> Self {
        let [a, b] = arm.periods().map(|s| s as u8 + 1);
        Self {
            target: arm,
            mode: AnalysisMode::ConcurrentOnly,
            periods_used: vec![a, b],
            arms_used: vec![0, 1, 2],
            period_effects: vec![b],
        }
    }

    /// Model for arm 2 fitted to all periods with indicators for periods 2 and 3.
    pub fn nonconcurrent_arm2() -> Self {
        Self {
            target: Treatment::Arm2,
            mode: AnalysisMode::WithNonConcurrent,
            periods_used: vec![1, 2, 3],
            arms_used: vec![0, 1, 2],
            period_effects: vec![2, 3],
        }
    }

    /// The model used to test `arm` under `mode`. Arm 1 is always analysed
    /// with concurrent controls only.
    pub fn for_arm(arm: Treatment, mode: AnalysisMode) -> Self {
        match (arm, mode) {
            (Treatment::Arm2, AnalysisMode::WithNonConcurrent) => Self::nonconcurrent_arm2(),
            _ => Self::concurrent(arm),
        }
    }

    fn reference_period(&self) -> Option<u8> {
        self.periods_used.iter().copied().find(|p| !self.period_effects.contains(p))
    }
}

/// Design matrix and response of one regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub columns: Vec<String>,
    /// Columns of the specification that had no data and were left out.
    pub dropped: Vec<String>,
    pub target_column: usize,
}

fn arm_column(arm: u8) -> String {
    format!("arm{arm}")
}

fn period_column(period: u8) -> String {
    format!("period{period}")
}

/// Builds the design matrix for `spec`.
///
/// Arm and period columns without any observation are dropped and listed in
/// [`Design::dropped`]. When the reference period itself is empty, the first
/// observed period takes its place and loses its indicator.
pub fn build_design(dataset: &TrialDataset, spec: &ModelSpec) -> Result<Design> {
    let rows: Vec<_> = dataset
        .records
        .iter()
        .filter(|r| spec.periods_used.contains(&r.period) && spec.arms_used.contains(&r.arm))
        .collect();
    if rows.is_empty() {
        return Err(Error::NoRows);
    }
    let target = spec.target.label();
    if !rows.iter().any(|r| r.arm == target) {
        return Err(Error::TargetArmAbsent { arm: target });
    }

    let present_period = |p: u8| rows.iter().any(|r| r.period == p);
    let present_arm = |a: u8| rows.iter().any(|r| r.arm == a);
    let mut dropped = Vec::new();

    let mut arms = Vec::new();
    for &a in spec.arms_used.iter().filter(|&&a| a != 0) {
        if present_arm(a) {
            arms.push(a);
        } else {
            dropped.push(arm_column(a));
        }
    }

    let mut effects: Vec<u8> = Vec::new();
    for &p in &spec.period_effects {
        if present_period(p) {
            effects.push(p);
        } else {
            dropped.push(period_column(p));
        }
    }
    let reference_present = spec.reference_period().is_some_and(present_period);
    if !reference_present && !effects.is_empty() {
        let first = *effects.iter().min().unwrap();
        effects.retain(|&p| p != first);
        dropped.push(period_column(first));
    }

    let mut columns = vec!["intercept".to_string()];
    columns.extend(arms.iter().map(|&a| arm_column(a)));
    columns.extend(effects.iter().map(|&p| period_column(p)));
    let target_column = 1 + arms.iter().position(|&a| a == target).expect("target arm is present");

    let k = columns.len();
    let mut x = DMatrix::zeros(rows.len(), k);
    let mut y = DVector::zeros(rows.len());
    for (row, rec) in rows.iter().enumerate() {
        x[(row, 0)] = 1.0;
        if let Some(j) = arms.iter().position(|&a| a == rec.arm) {
            x[(row, 1 + j)] = 1.0;
        }
        if let Some(j) = effects.iter().position(|&p| p == rec.period) {
            x[(row, 1 + arms.len() + j)] = 1.0;
        }
        y[row] = rec.outcome;
    }
    Ok(Design { x, y, columns, dropped, target_column })
}

/// Inference settings of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Two-sided confidence level of the reported interval.
    pub level: f64,
    /// Use this outcome SD with normal quantiles instead of the residual SD
    /// with Student-t quantiles.
    pub known_sigma: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { level: 0.95, known_sigma: None }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!("confidence level {} outside (0, 1)", self.level)));
        }
        if let Some(s) = self.known_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("known sigma {s} must be positive")));
            }
        }
        Ok(())
    }
}

/// Least-squares fit with inference for the target arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub columns: Vec<String>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub dropped_columns: Vec<String>,
    pub target_column: usize,
    pub estimate: f64,
    pub target_se: f64,
    /// p-value of the test of `theta <= 0` against `theta > 0`.
    pub p_one_sided: f64,
    pub ci: [f64; 2],
    /// Quantile used for the interval.
    pub critical_value: f64,
    pub residual_df: usize,
    /// Residual SD, or the known SD when one was supplied.
    pub sigma_hat: f64,
}

impl FitResult {
    pub fn ci_width(&self) -> f64 {
        self.ci[1] - self.ci[0]
    }
}

/// Names the columns that do not raise the rank of the preceding ones.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = x.select_columns(&trial);
        let sv = sub.singular_values();
        let max = sv.max();
        if max > 0.0 && sv.min() > RANK_TOL * max * (x.nrows() as f64).sqrt() {
            kept = trial;
        } else {
            bad.push(names[j].clone());
        }
    }
    bad
}

/// Ordinary least squares with coefficient covariance `s^2 (X'X)^-1`.
pub fn ols_fit(design: &Design, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    let (n, k) = design.x.shape();
    if n <= k && options.known_sigma.is_none() {
        return Err(Error::NoResidualDf { n_obs: n, n_columns: k });
    }
    let xt = design.x.transpose();
    let xtx = &xt * &design.x;
    let scale = xtx.diagonal().max();
    let chol = match xtx.clone().cholesky() {
        Some(c) if c.l_dirty().diagonal().iter().all(|&d| d * d > RANK_TOL * scale) => c,
        _ => {
            return Err(Error::RankDeficient { columns: collinear_columns(&design.x, &design.columns) });
        }
    };
    let beta = chol.solve(&(&xt * &design.y));
    let inv = chol.inverse();

    let residual_df = n.saturating_sub(k);
    let (sigma_hat, critical, dist_sf): (f64, f64, Box<dyn Fn(f64) -> f64>) = match options.known_sigma {
        Some(s) => {
            let z = Normal::standard();
            (s, z.inverse_cdf(0.5 + options.level / 2.0), Box::new(move |t| z.sf(t)))
        }
        None => {
            let resid = &design.y - &design.x * &beta;
            let s2 = resid.norm_squared() / residual_df as f64;
            let t = StudentsT::new(0.0, 1.0, residual_df as f64)
                .map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?;
            (s2.sqrt(), t.inverse_cdf(0.5 + options.level / 2.0), Box::new(move |x| t.sf(x)))
        }
    };

    let se: Vec<f64> = (0..k).map(|j| sigma_hat * inv[(j, j)].max(0.0).sqrt()).collect();
    let j = design.target_column;
    let estimate = beta[j];
    let target_se = se[j];
    let p_one_sided = if target_se > 0.0 {
        dist_sf(estimate / target_se)
    } else if estimate > 0.0 {
        0.0
    } else {
        1.0
    };
    Ok(FitResult {
        columns: design.columns.clone(),
        estimates: beta.iter().copied().collect(),
        se,
        dropped_columns: design.dropped.clone(),
        target_column: j,
        estimate,
        target_se,
        p_one_sided,
        ci: [estimate - critical * target_se, estimate + critical * target_se],
        critical_value: critical,
        residual_df,
        sigma_hat,
    })
}

/// Builds the design for `spec` and fits it.
pub fn fit_model(dataset: &TrialDataset, spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    ols_fit(&build_design(dataset, spec)?, options)
}

/// Stratified estimate of `arm`'s effect from period-wise differences of
/// means, weighted by inverse variance, and its variance for outcome SD
/// `sigma`. Periods lacking either the arm or concurrent controls get
/// weight zero.
pub fn stratified_estimate(dataset: &TrialDataset, arm: Treatment, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
    }
    let a = arm.label();
    let mut weighted = 0.0;
    let mut precision = 0.0;
    for s in arm.periods() {
        let period = s as u8 + 1;
        let (mut n_t, mut sum_t, mut n_c, mut sum_c) = (0u64, 0.0, 0u64, 0.0);
        for rec in dataset.records.iter().filter(|r| r.period == period) {
            if rec.arm == a {
                n_t += 1;
                sum_t += rec.outcome;
            } else if rec.arm == 0 {
                n_c += 1;
                sum_c += rec.outcome;
            }
        }
        if n_t == 0 || n_c == 0 {
            continue;
        }
        let diff = sum_t / n_t as f64 - sum_c / n_c as f64;
        let var = sigma * sigma * (1.0 / n_t as f64 + 1.0 / n_c as f64);
        weighted += diff / var;
        precision += 1.0 / var;
    }
    if precision == 0.0 {
        return Err(Error::EstimandUndefined { arm: a });
    }
    Ok((weighted / precision, 1.0 / precision))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PatientRecord;

    fn dataset(cells: &[(u8, u8, &[f64])]) -> TrialDataset {
        let mut records = Vec::new();
        for &(period, arm, ys) in cells {
            for &y in ys {
                records.push(PatientRecord { enrollment_index: records.len() as u32 + 1, period, arm, outcome: y });
            }
        }
        records.sort_by_key(|r| r.period);
        for (i, r) in records.iter_mut().enumerate() {
            r.enrollment_index = i as u32 + 1;
        }
        TrialDataset::new(records).unwrap()
    }

    #[test]
    fn two_group_difference_of_means() {
        let d = dataset(&[(1, 0, &[1.0, 2.0, 3.0]), (1, 1, &[4.0, 6.0])]);
        let fit = fit_model(&d, &ModelSpec::concurrent(Treatment::Arm1), &FitOptions::default()).unwrap();
        assert!((fit.estimate - 3.0).abs() < 1e-12);
        assert_eq!(fit.columns, vec!["intercept", "arm1"]);
        assert_eq!(fit.dropped_columns, vec!["arm2", "period2"]);
        assert_eq!(fit.residual_df, 3);
    }

    #[test]
    fn concurrent_layout_has_four_columns() {
        let d = dataset(&[
            (1, 0, &[0.1, 0.4]),
            (1, 1, &[1.0, 1.3]),
            (2, 0, &[0.2, 0.5, 0.1]),
            (2, 1, &[1.1, 0.9]),
            (2, 2, &[0.8, 0.7]),
        ]);
        let design = build_design(&d, &ModelSpec::concurrent(Treatment::Arm1)).unwrap();
        assert_eq!(design.columns, vec!["intercept", "arm1", "arm2", "period2"]);
        assert!(design.dropped.is_empty());
    }

    #[test]
    fn empty_third_period_drops_its_indicator() {
        let d = dataset(&[
            (1, 0, &[0.1, 0.4]),
            (1, 1, &[1.0, 1.3]),
            (2, 0, &[0.2, 0.5, 0.1]),
            (2, 1, &[1.1, 0.9]),
            (2, 2, &[0.8, 0.7]),
        ]);
        let design = build_design(&d, &ModelSpec::nonconcurrent_arm2()).unwrap();
        assert_eq!(design.columns, vec!["intercept", "arm1", "arm2", "period2"]);
        assert_eq!(design.dropped, vec!["period3"]);
    }

    #[test]
    fn missing_reference_period_is_rebased() {
        let d = dataset(&[(2, 0, &[0.2, 0.5]), (2, 2, &[1.0, 1.1]), (3, 0, &[0.3, 0.2]), (3, 2, &[0.9, 1.4])]);
        let design = build_design(&d, &ModelSpec::nonconcurrent_arm2()).unwrap();
        assert_eq!(design.columns, vec!["intercept", "arm2", "period3"]);
        assert_eq!(design.dropped, vec!["arm1", "period2"]);
        assert!(ols_fit(&design, &FitOptions::default()).is_ok());
    }

    #[test]
    fn target_absent_and_no_rows() {
        let d = dataset(&[(1, 0, &[0.2, 0.5]), (1, 1, &[1.0])]);
        assert_eq!(
            build_design(&d, &ModelSpec::concurrent(Treatment::Arm2)).unwrap_err(),
            Error::NoRows
        );
        let d = dataset(&[(2, 0, &[0.2, 0.5]), (2, 1, &[1.0])]);
        assert_eq!(
            build_design(&d, &ModelSpec::concurrent(Treatment::Arm2)).unwrap_err(),
            Error::TargetArmAbsent { arm: 2 }
        );
    }

    #[test]
    fn rank_deficiency_names_columns() {
        // Arm 2 only in period 3 while period 2 has no control: arm2 and
        // period3 are the same column within the included rows.
        let d = dataset(&[(2, 1, &[0.3, 0.1]), (2, 0, &[1.0, 2.0]), (3, 2, &[0.5, 0.7])]);
        let err = fit_model(&d, &ModelSpec::concurrent(Treatment::Arm2), &FitOptions::default()).unwrap_err();
        assert_eq!(err, Error::RankDeficient { columns: vec!["period3".into()] });
    }

    #[test]
    fn stratified_weights() {
        let d = dataset(&[(1, 0, &[0.0, 0.0]), (1, 1, &[1.0, 1.0]), (2, 0, &[0.0, 0.0]), (2, 1, &[3.0, 3.0])]);
        let (est, var) = stratified_estimate(&d, Treatment::Arm1, 1.0).unwrap();
        assert!((est - 2.0).abs() < 1e-12);
        assert!((var - 0.5).abs() < 1e-12);

        let d = dataset(&[(1, 0, &[0.0, 1.0]), (1, 1, &[2.0, 3.0, 4.0])]);
        let (est, _) = stratified_estimate(&d, Treatment::Arm1, 1.0).unwrap();
        assert!((est - 2.5).abs() < 1e-12);
        let d = dataset(&[(1, 1, &[2.0])]);
        assert!(stratified_estimate(&d, Treatment::Arm1, 1.0).is_err());
    }

    #[test]
    fn known_sigma_uses_normal_quantile() {
        let d = dataset(&[(1, 0, &[1.0, 2.0, 3.0]), (1, 1, &[4.0, 6.0])]);
        let opts = FitOptions { level: 0.95, known_sigma: Some(2.0) };
        let fit = fit_model(&d, &ModelSpec::concurrent(Treatment::Arm1), &opts).unwrap();
        assert!((fit.critical_value - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((fit.target_se - 2.0 * (1.0f64 / 3.0 + 0.5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn period_shift_leaves_effects_unchanged() {
        let mut d = dataset(&[
            (1, 0, &[0.1, 0.4, -0.3]),
            (1, 1, &[1.0, 1.3]),
            (2, 0, &[0.2, 0.5, 0.1]),
            (2, 1, &[1.1, 0.9]),
            (2, 2, &[0.8, 0.7]),
            (3, 0, &[0.3, -0.1]),
            (3, 2, &[0.6, 1.2, 0.4]),
        ]);
        let spec = ModelSpec::nonconcurrent_arm2();
        let before = fit_model(&d, &spec, &FitOptions::default()).unwrap();
        d.shift_period(2, 3.7);
        d.shift_period(3, -1.25);
        let after = fit_model(&d, &spec, &FitOptions::default()).unwrap();
        for j in 1..3 {
            assert!((before.estimates[j] - after.estimates[j]).abs() < 1e-10);
        }
        assert!((before.target_se - after.target_se).abs() < 1e-10);
    }
}
