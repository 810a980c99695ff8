//! Patient-level trial data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{N_ARMS, N_PERIODS};
use crate::solver::CountTable;

/// One randomized patient. Periods are numbered 1 to 3 and arms 0 (control)
/// to 2, as in the allocation tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    /// Position in the enrollment sequence, starting at 1.
    pub enrollment_index: u32,
    pub period: u8,
    pub arm: u8,
    pub outcome: f64,
}

/// Patients in enrollment order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub records: Vec<PatientRecord>,
}

impl TrialDataset {
    pub fn new(records: Vec<PatientRecord>) -> Result<Self> {
        let data = Self { records };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks labels, arm presence and that periods never go backwards.
    pub fn validate(&self) -> Result<()> {
        let mut last_period = 1;
        for rec in &self.records {
            if !(1..=N_PERIODS as u8).contains(&rec.period) || rec.arm as usize >= N_ARMS {
                return Err(Error::InvalidParameter(format!(
                    "record {} has period {} and arm {}",
                    rec.enrollment_index, rec.period, rec.arm
                )));
            }
            if (rec.period == 1 && rec.arm == 2) || (rec.period == 3 && rec.arm == 1) {
                return Err(Error::InvalidParameter(format!(
                    "record {} places arm {} in period {}",
                    rec.enrollment_index, rec.arm, rec.period
                )));
            }
            if rec.period < last_period {
                return Err(Error::InvalidParameter(format!(
                    "record {} goes back to period {}",
                    rec.enrollment_index, rec.period
                )));
            }
            if !rec.outcome.is_finite() {
                return Err(Error::InvalidParameter(format!("record {} has a non-finite outcome", rec.enrollment_index)));
            }
            last_period = rec.period;
        }
        Ok(())
    }

    /// Realized patients per `(period, arm)` cell.
    pub fn counts(&self) -> CountTable {
        let mut t = [[0u64; N_ARMS]; N_PERIODS];
        for rec in &self.records {
            t[rec.period as usize - 1][rec.arm as usize] += 1;
        }
        CountTable(t)
    }

    /// Adds `shift` to every outcome recorded in `period`.
    pub fn shift_period(&mut self, period: u8, shift: f64) {
        for rec in self.records.iter_mut().filter(|r| r.period == period) {
            rec.outcome += shift;
        }
    }
}
