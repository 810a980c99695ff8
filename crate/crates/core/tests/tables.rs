//! Sample-size tables of the case study at N = 92.

use platalloc::solver::{strategy_table, AllocationStrategy, CellRounding, CountTable};
use platalloc::{AnalysisMode, DesignCase, SolverSettings};

fn table(strategy: AllocationStrategy, case: DesignCase) -> CountTable {
    strategy_table(strategy, case, AnalysisMode::ConcurrentOnly, 92, CellRounding::Nearest, &SolverSettings::default())
        .unwrap()
        .counts
}

fn rows(t: CountTable) -> [[u64; 3]; 3] {
    [t.arm_row(0), t.arm_row(1), t.arm_row(2)]
}

const EQUAL: DesignCase = DesignCase::FixedR1R2 { r1: 1.0 / 3.0, r2: 1.0 / 3.0 };
const LONG_MIDDLE: DesignCase = DesignCase::FixedR1R2 { r1: 1.0 / 3.0, r2: 4.0 / 9.0 };

#[test]
fn equal_periods() {
    assert_eq!(rows(table(AllocationStrategy::OneToOne, EQUAL)), [[16, 10, 16], [16, 10, 0], [0, 10, 16]]);
    assert_eq!(rows(table(AllocationStrategy::SqrtK, EQUAL)), [[16, 12, 16], [16, 9, 0], [0, 9, 16]]);
    assert_eq!(rows(table(AllocationStrategy::Optimal, EQUAL)), [[16, 12, 16], [16, 9, 0], [0, 9, 16]]);
}

#[test]
fn long_middle_period() {
    assert_eq!(rows(table(AllocationStrategy::OneToOne, LONG_MIDDLE)), [[16, 14, 10], [16, 14, 0], [0, 14, 10]]);
    assert_eq!(rows(table(AllocationStrategy::SqrtK, LONG_MIDDLE)), [[16, 17, 10], [16, 12, 0], [0, 12, 10]]);
    assert_eq!(rows(table(AllocationStrategy::Optimal, LONG_MIDDLE)), [[16, 17, 10], [16, 8, 0], [0, 16, 10]]);
}

#[test]
fn single_and_two_period_designs() {
    let one = DesignCase::Unrestricted;
    assert_eq!(rows(table(AllocationStrategy::OneToOne, one)), [[0, 31, 0], [0, 31, 0], [0, 31, 0]]);
    assert_eq!(rows(table(AllocationStrategy::Optimal, one)), [[0, 38, 0], [0, 27, 0], [0, 27, 0]]);

    let two = DesignCase::FixedR1R2 { r1: 0.25, r2: 0.75 };
    assert_eq!(rows(table(AllocationStrategy::OneToOne, two)), [[12, 23, 0], [12, 23, 0], [0, 23, 0]]);
    assert_eq!(rows(table(AllocationStrategy::Optimal, two)), [[12, 30, 0], [12, 12, 0], [0, 27, 0]]);
    assert_eq!(rows(table(AllocationStrategy::SqrtK, two)), [[12, 29, 0], [12, 20, 0], [0, 20, 0]]);
}

#[test]
fn conserving_rule_sums_to_total() {
    for case in [EQUAL, LONG_MIDDLE, DesignCase::FixedR1R2 { r1: 0.25, r2: 0.75 }] {
        for strategy in AllocationStrategy::ALL {
            let t = strategy_table(
                strategy,
                case,
                AnalysisMode::WithNonConcurrent,
                92,
                CellRounding::LargestRemainder,
                &SolverSettings::default(),
            )
            .unwrap();
            assert_eq!(t.counts.total(), 92);
            assert_eq!(t.counts.period_totals(), t.period_totals);
        }
    }
}
