//! Monte Carlo simulation of platform trials analysed by regression.
//!
//! Every replicate draws its own random stream from the master seed and the
//! replicate index, so results do not depend on how replicates are spread
//! over threads.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{PatientRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::linmod::{fit_model, FitOptions, FitResult, ModelSpec};
use crate::model::{AnalysisMode, Treatment, N_ARMS, N_PERIODS};
use crate::solver::CountTable;

/// Replicates per work unit. Partial sums are formed per chunk and combined
/// in chunk order, which keeps the floating point result independent of
/// scheduling.
const CHUNK: u64 = 512;

/// Upper bound on replicates accepted by [`run_simulation`].
pub const MAX_REPS: u64 = 100_000_000;

/// Time trend added to every outcome, equal for all arms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trend {
    #[default]
    None,
    /// `slope * j / N` for the `j`-th enrolled patient.
    Linear { slope: f64 },
    /// Constant shift per period.
    Step { shifts: [f64; N_PERIODS] },
}

impl Trend {
    fn value(&self, period: usize, index: u32, total: u32) -> f64 {
        match *self {
            Trend::None => 0.0,
            Trend::Linear { slope } => slope * index as f64 / total as f64,
            Trend::Step { shifts } => shifts[period],
        }
    }
}

/// A trial design together with the true outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub counts: CountTable,
    /// Control mean.
    pub mu0: f64,
    /// True effects of arms 1 and 2.
    pub theta: [f64; 2],
    pub sigma: f64,
    #[serde(default)]
    pub trend: Trend,
    #[serde(default = "default_alpha")]
    pub alpha_one_sided: f64,
    #[serde(default)]
    pub mode: AnalysisMode,
    #[serde(default)]
    pub fit: FitOptions,
}

fn default_alpha() -> f64 {
    0.025
}

impl Scenario {
    /// Scenario with no trend, one-sided level 0.025 and t-based inference.
    pub fn new(counts: CountTable, mu0: f64, theta: [f64; 2], sigma: f64, mode: AnalysisMode) -> Self {
        Self {
            counts,
            mu0,
            theta,
            sigma,
            trend: Trend::None,
            alpha_one_sided: default_alpha(),
            mode,
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.counts.validate()?;
        if self.counts.total() > u32::MAX as u64 {
            return Err(Error::InvalidParameter("more than 2^32 patients".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.alpha_one_sided > 0.0 && self.alpha_one_sided < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha = {} outside (0, 0.5)", self.alpha_one_sided)));
        }
        if !(self.mu0.is_finite() && self.theta.iter().all(|t| t.is_finite())) {
            return Err(Error::InvalidParameter("means must be finite".into()));
        }
        self.fit.validate()
    }

    fn arm_mean(&self, arm: usize) -> f64 {
        if arm == 0 {
            self.mu0
        } else {
            self.mu0 + self.theta[arm - 1]
        }
    }
}

/// Random stream of replicate `k`.
pub fn replicate_rng(master_seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(k);
    rng
}

/// Draws one trial. Within each period the arm labels are an exact multiset
/// from the count table in uniformly random order.
pub fn generate_trial<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> TrialDataset {
    let total = scenario.counts.total() as u32;
    let mut records = Vec::with_capacity(total as usize);
    let mut labels = Vec::new();
    for s in 0..N_PERIODS {
        labels.clear();
        for arm in 0..N_ARMS {
            labels.extend(std::iter::repeat_n(arm as u8, scenario.counts.cell(s, arm) as usize));
        }
        labels.shuffle(rng);
        for &arm in &labels {
            let index = records.len() as u32 + 1;
            let noise: f64 = rng.sample(StandardNormal);
            let outcome =
                scenario.arm_mean(arm as usize) + scenario.trend.value(s, index, total) + scenario.sigma * noise;
            records.push(PatientRecord { enrollment_index: index, period: s as u8 + 1, arm, outcome });
        }
    }
    TrialDataset { records }
}

/// Fits the model for each arm: arm 1 against concurrent controls, arm 2
/// according to `mode`.
pub fn analyze(dataset: &TrialDataset, mode: AnalysisMode, options: &FitOptions) -> Result<[FitResult; 2]> {
    let a1 = fit_model(dataset, &ModelSpec::for_arm(Treatment::Arm1, mode), options)?;
    let a2 = fit_model(dataset, &ModelSpec::for_arm(Treatment::Arm2, mode), options)?;
    Ok([a1, a2])
}

/// Monte Carlo results for one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    /// Rejection rate of the one-sided test: power, or type 1 error when the
    /// true effect is zero.
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub ci_width_mean: f64,
    pub estimate_mean: f64,
    pub estimate_sd: f64,
    pub se_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub reps: u64,
    pub seed: u64,
    pub scenario: Scenario,
    pub arms: [ArmSummary; 2],
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    rejections: [u64; 2],
    width: [f64; 2],
    estimate: [f64; 2],
    estimate_sq: [f64; 2],
    se: [f64; 2],
}

impl Accumulator {
    fn add(&mut self, fits: &[FitResult; 2], alpha: f64) {
        for (a, fit) in fits.iter().enumerate() {
            self.rejections[a] += u64::from(fit.p_one_sided < alpha);
            self.width[a] += fit.ci_width();
            self.estimate[a] += fit.estimate;
            self.estimate_sq[a] += fit.estimate * fit.estimate;
            self.se[a] += fit.target_se;
        }
    }

    fn merge(mut self, other: &Accumulator) -> Self {
        for a in 0..2 {
            self.rejections[a] += other.rejections[a];
            self.width[a] += other.width[a];
            self.estimate[a] += other.estimate[a];
            self.estimate_sq[a] += other.estimate_sq[a];
            self.se[a] += other.se[a];
        }
        self
    }

    fn summary(&self, reps: u64) -> [ArmSummary; 2] {
        let n = reps as f64;
        [0, 1].map(|a| {
            let rate = self.rejections[a] as f64 / n;
            let mean = self.estimate[a] / n;
            let var = if reps > 1 { ((self.estimate_sq[a] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            ArmSummary {
                rejection_rate: rate,
                mc_se: (rate * (1.0 - rate) / n).sqrt(),
                ci_width_mean: self.width[a] / n,
                estimate_mean: mean,
                estimate_sd: var.sqrt(),
                se_mean: self.se[a] / n,
            }
        })
    }
}

fn run_chunk(scenario: &Scenario, seed: u64, start: u64, end: u64) -> Result<Accumulator> {
    let mut acc = Accumulator::default();
    for k in start..end {
        let mut rng = replicate_rng(seed, k);
        let data = generate_trial(scenario, &mut rng);
        let fits = analyze(&data, scenario.mode, &scenario.fit)?;
        acc.add(&fits, scenario.alpha_one_sided);
    }
    Ok(acc)
}

/// Runs `reps` replicates of `scenario`.
pub fn run_simulation(scenario: &Scenario, reps: u64, master_seed: u64) -> Result<SimulationSummary> {
    run_simulation_with_progress(scenario, reps, master_seed, |_| {})
}

/// As [`run_simulation`], calling `progress` with the number of finished
/// replicates after every chunk. Calls may arrive from several threads and
/// out of order.
pub fn run_simulation_with_progress<F>(
    scenario: &Scenario,
    reps: u64,
    master_seed: u64,
    progress: F,
) -> Result<SimulationSummary>
where
    F: Fn(u64) + Sync,
{
    scenario.validate()?;
    if reps == 0 || reps > MAX_REPS {
        return Err(Error::InvalidParameter(format!("reps = {reps} outside [1, {MAX_REPS}]")));
    }
    // Fail early on designs the models cannot analyse.
    let probe = generate_trial(scenario, &mut replicate_rng(master_seed, 0));
    analyze(&probe, scenario.mode, &scenario.fit)?;

    let done = std::sync::atomic::AtomicU64::new(0);
    let n_chunks = reps.div_ceil(CHUNK);
    let partials = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(reps);
            let acc = run_chunk(scenario, master_seed, start, end)?;
            let finished = done.fetch_add(end - start, std::sync::atomic::Ordering::Relaxed) + end - start;
            progress(finished);
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = partials.iter().fold(Accumulator::default(), |acc, p| acc.merge(p));
    Ok(SimulationSummary { reps, seed: master_seed, scenario: scenario.clone(), arms: total.summary(reps) })
}
