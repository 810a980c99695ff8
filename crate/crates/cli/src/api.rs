//! Request and response types shared by the command line and the HTTP
//! service, and the handlers that turn one into the other.

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use platalloc::simulator::{run_simulation_with_progress, Scenario, SimulationSummary, Trend};
use platalloc::solver::{self, AllocationStrategy, CellRounding, CountTable, Regime};
use platalloc::linmod::FitOptions;
use platalloc::{AnalysisMode, DesignCase, SolverSettings, TrialParams, VarianceProfile};

/// Seed used when a simulation request does not name one.
pub const DEFAULT_SEED: u64 = 20_240_917;
/// Largest grid accepted by the curve sweep.
pub const MAX_GRID: usize = 10_000;

/// Which period fractions are fixed in advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Both the entry of arm 2 and the exit of arm 1 are optimized.
    #[default]
    #[value(name = "unrestricted")]
    Unrestricted,
    /// Arm 2 enters after the fraction r1 of patients.
    #[value(name = "fixed_r1")]
    FixedR1,
    /// Entry of arm 2 (r1) and exit of arm 1 (r1 + r2) are fixed.
    #[value(name = "fixed_r1_r2")]
    FixedR1R2,
}

/// Which controls enter the arm-2 comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Concurrent controls only.
    #[default]
    Cc,
    /// All controls, with period effects.
    Ncc,
}

impl From<Mode> for AnalysisMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Cc => AnalysisMode::ConcurrentOnly,
            Mode::Ncc => AnalysisMode::WithNonConcurrent,
        }
    }
}

/// Modes covered by a curve sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Cc,
    Ncc,
    #[default]
    Both,
}

impl ModeSelection {
    fn modes(self) -> &'static [Mode] {
        match self {
            ModeSelection::Cc => &[Mode::Cc],
            ModeSelection::Ncc => &[Mode::Ncc],
            ModeSelection::Both => &[Mode::Cc, Mode::Ncc],
        }
    }
}

/// Rounding rule for table cells, as a command-line value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    #[value(name = "nearest")]
    Nearest,
    #[value(name = "largest_remainder")]
    LargestRemainder,
}

impl From<Rounding> for CellRounding {
    fn from(r: Rounding) -> Self {
        match r {
            Rounding::Nearest => CellRounding::Nearest,
            Rounding::LargestRemainder => CellRounding::LargestRemainder,
        }
    }
}

/// Allocation rule of a sample-size table, as a command-line value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[value(name = "one_to_one")]
    OneToOne,
    #[value(name = "sqrt_k")]
    SqrtK,
    #[default]
    #[value(name = "optimal")]
    Optimal,
}

impl From<Strategy> for AllocationStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::OneToOne => AllocationStrategy::OneToOne,
            Strategy::SqrtK => AllocationStrategy::SqrtK,
            Strategy::Optimal => AllocationStrategy::Optimal,
        }
    }
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The request itself is malformed or out of range.
    InvalidRequest,
    /// The request is well formed but the computation failed.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ApiError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::InvalidRequest, message: message.into() }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::SolverFailure, message: message.into() }
    }

    /// The document written to standard error or returned as an HTTP body.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&ErrorDocument { error: self.clone() }).expect("error serializes");
        s.push('\n');
        s
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<platalloc::Error> for ApiError {
    fn from(e: platalloc::Error) -> Self {
        match e {
            platalloc::Error::InvalidPlan(_) | platalloc::Error::InvalidParameter(_) => Self::invalid(e.to_string()),
            _ => Self::failure(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDocument {
    pub error: ApiError,
}

pub type ApiResult<T> = Result<T, ApiError>;

// ---------------------------------------------------------------------------
// Number formatting

/// Rounds a proportion to the 6 decimals used in every output document.
pub fn round6(x: f64) -> f64 {
    if x.is_finite() {
        (x * 1e6).round() / 1e6
    } else {
        x
    }
}

fn round6_all<const N: usize>(xs: [f64; N]) -> [f64; N] {
    xs.map(round6)
}

/// Serializes infinite variances as `null` and reads `null` back as infinity,
/// since JSON has no infinity.
pub mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

// ---------------------------------------------------------------------------
// Design cases

fn design_case(case: CaseKind, r1: Option<f64>, r2: Option<f64>) -> ApiResult<DesignCase> {
    let required = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| ApiError::invalid(format!("{name} is required for case {}", case_name(case))))
    };
    let unused = |name: &str, v: Option<f64>| match v {
        Some(_) => Err(ApiError::invalid(format!("{name} is not used by case {}", case_name(case)))),
        None => Ok(()),
    };
    let dc = match case {
        CaseKind::Unrestricted => {
            unused("r1", r1)?;
            unused("r2", r2)?;
            DesignCase::Unrestricted
        }
        CaseKind::FixedR1 => {
            unused("r2", r2)?;
            DesignCase::FixedR1 { r1: required("r1", r1)? }
        }
        CaseKind::FixedR1R2 => DesignCase::FixedR1R2 { r1: required("r1", r1)?, r2: required("r2", r2)? },
    };
    dc.validate()?;
    Ok(dc)
}

fn case_name(case: CaseKind) -> &'static str {
    match case {
        CaseKind::Unrestricted => "unrestricted",
        CaseKind::FixedR1 => "fixed_r1",
        CaseKind::FixedR1R2 => "fixed_r1_r2",
    }
}

fn positive(name: &str, x: f64) -> ApiResult<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(ApiError::invalid(format!("{name} = {x} must be positive and finite")))
    }
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, Args)]
pub struct SolveRequest {
    /// Which period fractions are fixed.
    #[arg(long, value_enum, env = "PLATALLOC_CASE", default_value = "unrestricted")]
    #[serde(default)]
    pub case: CaseKind,
    /// Fraction of patients recruited before arm 2 enters.
    #[arg(long, env = "PLATALLOC_R1")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    /// Fraction of patients recruited while both arms are open.
    #[arg(long, env = "PLATALLOC_R2")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    /// Analysis of arm 2.
    #[arg(long, value_enum, env = "PLATALLOC_MODE", default_value = "cc")]
    #[serde(default)]
    pub mode: Mode,
    /// Total sample size; adds absolute variances to the output.
    #[arg(long, env = "PLATALLOC_N")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Outcome standard deviation (default 1).
    #[arg(long, env = "PLATALLOC_SIGMA")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Target standard error; adds the smallest sufficient sample size.
    #[arg(long, env = "PLATALLOC_TARGET_SE")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_se: Option<f64>,
}

/// Period fractions and per-period proportions, rounded to 6 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOut {
    pub r: [f64; 3],
    /// `p[period][arm]` with arms ordered control, arm 1, arm 2.
    pub p: [[f64; 3]; 3],
}

/// Estimator variances at full precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variances {
    #[serde(with = "nonfinite")]
    pub var1: f64,
    #[serde(with = "nonfinite")]
    pub var2: f64,
    #[serde(with = "nonfinite")]
    pub max_var: f64,
}

impl From<VarianceProfile> for Variances {
    fn from(v: VarianceProfile) -> Self {
        Self { var1: v.var1, var2: v.var2, max_var: v.max_var }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialVariances {
    pub n: u64,
    pub sigma: f64,
    #[serde(flatten)]
    pub variances: Variances,
    #[serde(with = "nonfinite")]
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize {
    pub target_se: f64,
    pub sigma: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResponse {
    pub request: SolveRequest,
    pub regime: Regime,
    pub plan: PlanOut,
    /// Variances for one patient with unit outcome SD, i.e. inverse
    /// information per patient.
    pub unit_variances: Variances,
    /// Larger variance relative to two separate 1:1 trials of the same size.
    #[serde(with = "nonfinite")]
    pub ratio_vs_separate: f64,
    /// Relative gap between the two variances; 0 certifies an equal-variance
    /// optimum.
    #[serde(with = "nonfinite")]
    pub variance_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<TrialVariances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_sample_size: Option<SampleSize>,
}

pub fn solve(req: &SolveRequest) -> ApiResult<SolveResponse> {
    let case = design_case(req.case, req.r1, req.r2)?;
    let sigma = positive("sigma", req.sigma.unwrap_or(1.0))?;
    let settings = SolverSettings::default();
    let design = solver::solve(case, req.mode.into(), &settings)?;

    let variances = match req.n {
        Some(n) => {
            let profile = design.profile_for(&TrialParams::new(n, sigma)?)?;
            Some(TrialVariances { n, sigma, variances: profile.into(), standard_error: profile.max_var.sqrt() })
        }
        None => None,
    };
    let min_sample_size = match req.target_se {
        Some(target) => {
            let target_se = positive("target_se", target)?;
            let n = solver::min_sample_size(target_se, case, req.mode.into(), sigma, &settings)?;
            Some(SampleSize { target_se, sigma, n })
        }
        None => None,
    };
    let p = design.plan.p();
    Ok(SolveResponse {
        request: req.clone(),
        regime: design.regime,
        plan: PlanOut { r: round6_all(design.plan.r()), p: p.map(round6_all) },
        unit_variances: design.profile.into(),
        ratio_vs_separate: design.profile.ratio_vs_separate,
        variance_gap: design.profile.relative_gap(),
        variances,
        min_sample_size,
    })
}

// ---------------------------------------------------------------------------
// curve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct CurveRequest {
    /// Fraction of patients recruited before arm 2 enters.
    #[arg(long, env = "PLATALLOC_R1")]
    pub r1: f64,
    /// Modes to sweep.
    #[arg(long, value_enum, env = "PLATALLOC_MODE", default_value = "both")]
    #[serde(default)]
    pub mode: ModeSelection,
    /// Number of r2 values, evenly spaced over [0, 1 - r1].
    #[arg(long, env = "PLATALLOC_GRID", default_value_t = default_grid())]
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    101
}

/// One point of the sweep. Variances are per patient with unit outcome SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub mode: Mode,
    pub r2: f64,
    pub p02: f64,
    pub p12: f64,
    pub p22: f64,
    #[serde(with = "nonfinite")]
    pub max_var: f64,
    #[serde(with = "nonfinite")]
    pub ratio_vs_separate: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResponse {
    pub request: CurveRequest,
    pub rows: Vec<CurveRow>,
}

pub fn curve(req: &CurveRequest) -> ApiResult<CurveResponse> {
    if !(req.r1 >= 0.0 && req.r1 < 1.0) {
        return Err(ApiError::invalid(format!("r1 = {} must lie in [0, 1)", req.r1)));
    }
    if !(2..=MAX_GRID).contains(&req.grid) {
        return Err(ApiError::invalid(format!("grid = {} must lie in [2, {MAX_GRID}]", req.grid)));
    }
    let span = 1.0 - req.r1;
    let settings = SolverSettings::default();
    let mut rows = Vec::with_capacity(req.grid * req.mode.modes().len());
    for &mode in req.mode.modes() {
        for k in 0..req.grid {
            let r2 = if k + 1 == req.grid { span } else { span * k as f64 / (req.grid - 1) as f64 };
            let d = solver::solve(DesignCase::FixedR1R2 { r1: req.r1, r2 }, mode.into(), &settings)?;
            let [p02, p12, p22] = d.plan.p()[1].map(round6);
            rows.push(CurveRow {
                mode,
                r2,
                p02,
                p12,
                p22,
                max_var: d.profile.max_var,
                ratio_vs_separate: d.profile.ratio_vs_separate,
                regime: d.regime,
            });
        }
    }
    Ok(CurveResponse { request: req.clone(), rows })
}

// ---------------------------------------------------------------------------
// tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct TablesRequest {
    /// Which period fractions are fixed.
    #[arg(long, value_enum, env = "PLATALLOC_CASE", default_value = "unrestricted")]
    #[serde(default)]
    pub case: CaseKind,
    #[arg(long, env = "PLATALLOC_R1")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[arg(long, env = "PLATALLOC_R2")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    /// Analysis under which the optimal table is computed.
    #[arg(long, value_enum, env = "PLATALLOC_MODE", default_value = "cc")]
    #[serde(default)]
    pub mode: Mode,
    /// Total sample size.
    #[arg(long, env = "PLATALLOC_N")]
    pub n: u64,
    /// Rounding of the cells within each period.
    #[arg(long, value_enum, env = "PLATALLOC_ROUNDING", default_value = "nearest")]
    #[serde(default)]
    pub rounding: Rounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOut {
    pub strategy: Strategy,
    pub period_totals: [u64; 3],
    pub realized_r: [f64; 3],
    pub proportions: [[f64; 3]; 3],
    pub counts: CountTable,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablesResponse {
    pub request: TablesRequest,
    pub tables: Vec<TableOut>,
}

const STRATEGIES: [Strategy; 3] = [Strategy::OneToOne, Strategy::SqrtK, Strategy::Optimal];

pub fn tables(req: &TablesRequest) -> ApiResult<TablesResponse> {
    let case = design_case(req.case, req.r1, req.r2)?;
    let settings = SolverSettings::default();
    let tables = STRATEGIES
        .iter()
        .map(|&strategy| {
            let t = solver::strategy_table(strategy.into(), case, req.mode.into(), req.n, req.rounding.into(), &settings)?;
            Ok(TableOut {
                strategy,
                period_totals: t.period_totals,
                realized_r: round6_all(t.realized_r),
                proportions: t.proportions.map(round6_all),
                counts: t.counts,
                total: t.counts.total(),
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(TablesResponse { request: req.clone(), tables })
}

// ---------------------------------------------------------------------------
// simulate

/// Where the simulated trial's cell counts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum AllocationSource {
    /// Explicit counts per arm and period.
    Counts { counts: CountTable },
    /// A sample-size table computed for the given design.
    Solved {
        #[serde(default)]
        case: CaseKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r1: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r2: Option<f64>,
        /// Analysis under which the design is solved.
        #[serde(default)]
        mode: Mode,
        n: u64,
        #[serde(default)]
        strategy: Strategy,
        #[serde(default)]
        rounding: Rounding,
    },
}

impl AllocationSource {
    pub fn counts(&self) -> ApiResult<CountTable> {
        match *self {
            AllocationSource::Counts { counts } => Ok(counts),
            AllocationSource::Solved { case, r1, r2, mode, n, strategy, rounding } => {
                let case = design_case(case, r1, r2)?;
                let t = solver::strategy_table(
                    strategy.into(),
                    case,
                    mode.into(),
                    n,
                    rounding.into(),
                    &SolverSettings::default(),
                )?;
                Ok(t.counts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub allocation: AllocationSource,
    /// Control mean.
    #[serde(default)]
    pub mu0: f64,
    /// True effects of arms 1 and 2.
    pub theta: [f64; 2],
    #[serde(default = "unit")]
    pub sigma: f64,
    #[serde(default)]
    pub trend: Trend,
    #[serde(default = "default_alpha")]
    pub alpha_one_sided: f64,
    /// Analysis of arm 2.
    #[serde(default)]
    pub mode: Mode,
    /// Test with the true SD and normal quantiles instead of the residual SD.
    #[serde(default)]
    pub known_sigma: bool,
    /// Confidence level of the reported intervals.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn unit() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.025
}

fn default_level() -> f64 {
    0.95
}

pub fn default_reps() -> u64 {
    10_000
}

impl SimulateRequest {
    pub fn scenario(&self) -> ApiResult<Scenario> {
        let mut s = Scenario::new(self.allocation.counts()?, self.mu0, self.theta, self.sigma, self.mode.into());
        s.trend = self.trend;
        s.alpha_one_sided = self.alpha_one_sided;
        s.fit = FitOptions { level: self.level, known_sigma: self.known_sigma.then_some(self.sigma) };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub request: SimulateRequest,
    pub summary: SimulationSummary,
}

/// Runs the simulation, calling `progress` with the number of finished
/// replicates as chunks complete.
pub fn simulate_with_progress<F>(req: &SimulateRequest, progress: F) -> ApiResult<SimulateResponse>
where
    F: Fn(u64) + Sync,
{
    let scenario = req.scenario()?;
    let seed = req.seed.unwrap_or(DEFAULT_SEED);
    let summary = run_simulation_with_progress(&scenario, req.reps, seed, progress)?;
    let mut request = req.clone();
    request.seed = Some(seed);
    Ok(SimulateResponse { request, summary })
}

pub fn simulate(req: &SimulateRequest) -> ApiResult<SimulateResponse> {
    simulate_with_progress(req, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unrestricted_cc_is_the_sqrt2_plan() {
        let out = solve(&SolveRequest::default()).unwrap();
        assert_eq!(out.plan.p[1], [0.414214, 0.292893, 0.292893]);
        assert_eq!(out.regime, Regime::MultiArm);
    }

    #[test]
    fn missing_r1_is_an_invalid_request() {
        let err = solve(&SolveRequest { case: CaseKind::FixedR1, ..Default::default() }).unwrap_err();
        assert_eq!(err.kind, ErrorKind::InvalidRequest);
        let err = solve(&SolveRequest { r1: Some(0.2), ..Default::default() }).unwrap_err();
        assert_eq!(err.kind, ErrorKind::InvalidRequest);
    }

    #[test]
    fn fixed_r1_ncc_is_certified() {
        let req = SolveRequest { case: CaseKind::FixedR1, r1: Some(0.25), mode: Mode::Ncc, ..Default::default() };
        assert!(solve(&req).unwrap().variance_gap < 1e-10);
    }

    #[test]
    fn sample_size_and_absolute_variances() {
        let req = SolveRequest { n: Some(92), sigma: Some(2.0), target_se: Some(0.3), ..Default::default() };
        let out = solve(&req).unwrap();
        let v = out.variances.unwrap();
        assert!((v.variances.max_var - 4.0 * out.unit_variances.max_var / 92.0).abs() < 1e-15);
        let n = out.min_sample_size.unwrap().n;
        assert!(4.0 * out.unit_variances.max_var / n as f64 <= 0.09);
        assert!(4.0 * out.unit_variances.max_var / (n - 1) as f64 > 0.09);
    }

    #[test]
    fn curve_minimum_of_control_share() {
        let out = curve(&CurveRequest { r1: 0.25, mode: ModeSelection::Cc, grid: 201 }).unwrap();
        let interior: Vec<_> = out.rows.iter().filter(|r| r.regime == Regime::Interior).collect();
        let min = interior.iter().min_by(|a, b| a.p02.total_cmp(&b.p02)).unwrap();
        assert!((min.r2 - 0.5).abs() < 0.01, "{}", min.r2);
    }

    #[test]
    fn curve_ncc_control_share_is_smaller() {
        let out = curve(&CurveRequest { r1: 0.25, mode: ModeSelection::Both, grid: 51 }).unwrap();
        let (cc, ncc) = out.rows.split_at(51);
        for (a, b) in cc.iter().zip(ncc) {
            if a.regime == Regime::Interior && b.regime == Regime::Interior {
                assert!(b.p02 <= a.p02 + 1e-6, "r2 = {}: {} vs {}", a.r2, b.p02, a.p02);
            }
        }
    }

    #[test]
    fn curve_grid_bounds() {
        assert_eq!(curve(&CurveRequest { r1: 0.25, mode: ModeSelection::Cc, grid: 2 }).unwrap().rows.len(), 2);
        assert!(curve(&CurveRequest { r1: 0.25, mode: ModeSelection::Cc, grid: 1 }).is_err());
        assert!(curve(&CurveRequest { r1: 0.25, mode: ModeSelection::Cc, grid: MAX_GRID + 1 }).is_err());
    }

    #[test]
    fn case_study_tables() {
        let req = TablesRequest {
            case: CaseKind::FixedR1R2,
            r1: Some(1.0 / 3.0),
            r2: Some(4.0 / 9.0),
            mode: Mode::Cc,
            n: 92,
            rounding: Rounding::Nearest,
        };
        let out = tables(&req).unwrap();
        assert_eq!(out.tables[1].counts.arm_row(0), [16, 17, 10]);
        assert_eq!(out.tables[2].counts.arm_row(1), [16, 8, 0]);
    }

    #[test]
    fn simulation_request_round_trips() {
        let json = r#"{"allocation":{"source":"solved","case":"fixed_r1_r2","r1":0.25,"r2":0.75,"n":92},
                       "theta":[0.72,0.72],"reps":600,"seed":3}"#;
        let req: SimulateRequest = serde_json::from_str(json).unwrap();
        let out = simulate(&req).unwrap();
        let back: SimulateResponse = serde_json::from_str(&serde_json::to_string(&out).unwrap()).unwrap();
        assert_eq!(back, out);
        assert_eq!(out.summary.scenario.counts.arm_row(1), [12, 12, 0]);
    }

    #[test]
    fn infinite_variances_survive_json() {
        let v = Variances { var1: 1.0, var2: f64::INFINITY, max_var: f64::INFINITY };
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("null"));
        assert_eq!(serde_json::from_str::<Variances>(&s).unwrap(), v);
    }
}
