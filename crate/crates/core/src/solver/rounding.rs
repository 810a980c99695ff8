//! Integer sample-size tables from allocation plans.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{solve, solve_case3_cc, solve_case3_ncc, sqrt2_row, DesignCase, SolverSettings};
use crate::error::{Error, Result};
use crate::model::{AllocationPlan, AnalysisMode, N_ARMS, N_PERIODS};

/// Remainders closer than this are treated as tied.
const TIE_TOL: f64 = 1e-9;

/// Patients per `(period, arm)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CountTable(pub [[u64; N_ARMS]; N_PERIODS]);

impl CountTable {
    pub fn cell(&self, period: usize, arm: usize) -> u64 {
        self.0[period][arm]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn period_totals(&self) -> [u64; N_PERIODS] {
        self.0.map(|row| row.iter().sum())
    }

    /// Counts of one arm across the three periods.
    pub fn arm_row(&self, arm: usize) -> [u64; N_PERIODS] {
        [self.0[0][arm], self.0[1][arm], self.0[2][arm]]
    }

    pub fn arm_totals(&self) -> [u64; N_ARMS] {
        [0, 1, 2].map(|a| self.arm_row(a).iter().sum())
    }

    /// Builds a table from per-arm rows `[control, arm1, arm2]`.
    pub fn from_arm_rows(rows: [[u64; N_PERIODS]; N_ARMS]) -> Self {
        let mut t = [[0; N_ARMS]; N_PERIODS];
        for (a, row) in rows.iter().enumerate() {
            for (s, &n) in row.iter().enumerate() {
                t[s][a] = n;
            }
        }
        CountTable(t)
    }

    /// Checks that arm 2 is absent from period 1 and arm 1 from period 3.
    pub fn validate(&self) -> Result<()> {
        if self.0[0][2] != 0 || self.0[2][1] != 0 {
            return Err(Error::InvalidParameter(
                "count table places arm 2 in period 1 or arm 1 in period 3".into(),
            ));
        }
        if self.total() == 0 {
            return Err(Error::InvalidParameter("count table is empty".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ArmRows {
    control: [u64; N_PERIODS],
    arm1: [u64; N_PERIODS],
    arm2: [u64; N_PERIODS],
}

impl Serialize for CountTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ArmRows { control: self.arm_row(0), arm1: self.arm_row(1), arm2: self.arm_row(2) }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CountTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = ArmRows::deserialize(deserializer)?;
        Ok(CountTable::from_arm_rows([rows.control, rows.arm1, rows.arm2]))
    }
}

/// How cell counts are obtained from `p * N_s` within a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRounding {
    /// Each cell rounded to the nearest integer, halves up. Cells may then add
    /// up to slightly more or less than the period total (this is how the
    /// published case-study tables were produced).
    #[default]
    Nearest,
    /// Hamilton's largest-remainder method; cells add up to the period total.
    LargestRemainder,
}

/// Largest-remainder apportionment of `total` with ties broken by `priority`.
fn apportion(shares: &[f64], total: u64, priority: &[usize]) -> Vec<u64> {
    let quotas: Vec<f64> = shares.iter().map(|&s| s * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| (q + TIE_TOL).floor().max(0.0) as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut left = total.saturating_sub(assigned);

    let mut order: Vec<usize> = (0..shares.len()).filter(|&i| shares[i] > 0.0).collect();
    let rank = |i: usize| priority.iter().position(|&p| p == i).unwrap_or(usize::MAX);
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        if (ra - rb).abs() <= TIE_TOL {
            rank(a).cmp(&rank(b))
        } else {
            rb.partial_cmp(&ra).unwrap()
        }
    });
    for &i in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Period totals by largest remainder on `r * N`; ties go to periods 1 and 3
/// before period 2.
pub fn round_period_totals(r: [f64; N_PERIODS], total_n: u64) -> [u64; N_PERIODS] {
    let c = apportion(&r, total_n, &[0, 2, 1]);
    [c[0], c[1], c[2]]
}

fn round_cells(row: [f64; N_ARMS], period_total: u64, rule: CellRounding) -> [u64; N_ARMS] {
    match rule {
        CellRounding::Nearest => row.map(|p| if p > 0.0 { (p * period_total as f64 + 0.5 + TIE_TOL).floor() as u64 } else { 0 }),
        CellRounding::LargestRemainder => {
            let c = apportion(&row, period_total, &[0, 1, 2]);
            [c[0], c[1], c[2]]
        }
    }
}

fn active_cells(plan: &AllocationPlan<f64>) -> usize {
    let (r, p) = (plan.r(), plan.p());
    (0..N_PERIODS).map(|s| if r[s] > 0.0 { p[s].iter().filter(|&&x| x > 0.0).count() } else { 0 }).sum()
}

/// Integer table for `plan` with `total_n` patients: period totals by largest
/// remainder, then cells by `rule`. Zero-proportion cells stay zero.
pub fn round_allocation(plan: &AllocationPlan<f64>, total_n: u64, rule: CellRounding) -> Result<CountTable> {
    plan.validate()?;
    let needed = active_cells(plan) as u64;
    if total_n < needed {
        return Err(Error::InvalidParameter(format!("total_n = {total_n} is below the {needed} active cells")));
    }
    let totals = round_period_totals(plan.r(), total_n);
    let p = plan.p();
    let mut t = [[0; N_ARMS]; N_PERIODS];
    for s in 0..N_PERIODS {
        t[s] = round_cells(p[s], totals[s], rule);
    }
    Ok(CountTable(t))
}

/// Allocation rule compared in the sample-size tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationStrategy {
    /// Equal split among the arms recruiting in each period.
    OneToOne,
    /// Control weighted by sqrt(2) when both arms recruit, 1:1 otherwise.
    SqrtK,
    /// Solver optimum at the realized period fractions.
    Optimal,
}

impl AllocationStrategy {
    pub const ALL: [AllocationStrategy; 3] =
        [AllocationStrategy::OneToOne, AllocationStrategy::SqrtK, AllocationStrategy::Optimal];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub strategy: AllocationStrategy,
    pub period_totals: [u64; N_PERIODS],
    /// Period fractions after rounding the period totals.
    pub realized_r: [f64; N_PERIODS],
    /// Proportions that were rounded, `[period][arm]`.
    pub proportions: [[f64; N_ARMS]; N_PERIODS],
    pub counts: CountTable,
}

/// Sample-size table for `strategy` under the period split chosen by `case`.
///
/// Period totals are rounded first; the optimal strategy is then re-solved
/// at the realized fractions `N_s / N` so that the table is optimal for the
/// trial that will actually run.
pub fn strategy_table(
    strategy: AllocationStrategy,
    case: DesignCase<f64>,
    mode: AnalysisMode,
    total_n: u64,
    rule: CellRounding,
    settings: &SolverSettings<f64>,
) -> Result<StrategyTable> {
    let nominal = solve(case, mode, settings)?;
    let period_totals = round_period_totals(nominal.plan.r(), total_n);
    let realized_r = period_totals.map(|n| n as f64 / total_n as f64);

    let middle = match strategy {
        AllocationStrategy::OneToOne => [1.0 / 3.0; 3],
        AllocationStrategy::SqrtK => sqrt2_row(),
        AllocationStrategy::Optimal => {
            let design = match mode {
                AnalysisMode::ConcurrentOnly => solve_case3_cc(realized_r[0], realized_r[1], settings)?,
                AnalysisMode::WithNonConcurrent => solve_case3_ncc(realized_r[0], realized_r[1], settings)?,
            };
            design.plan.p()[1]
        }
    };
    let plan = AllocationPlan::with_middle_row(realized_r, middle)?;
    let needed = active_cells(&plan) as u64;
    if total_n < needed {
        return Err(Error::InvalidParameter(format!("total_n = {total_n} is below the {needed} active cells")));
    }
    let p = plan.p();
    let mut t = [[0; N_ARMS]; N_PERIODS];
    for s in 0..N_PERIODS {
        t[s] = round_cells(p[s], period_totals[s], rule);
    }
    Ok(StrategyTable { strategy, period_totals, realized_r, proportions: p, counts: CountTable(t) })
}
