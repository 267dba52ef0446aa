//! Comparison policies: fixed-knob baselines and the offline oracle sweep.
//!
//! Fixed policies train every experience with the same knobs. The health
//! score and threshold are still computed so their traces line up with
//! controller traces column for column.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::controller::{
    threshold_at, trained_snapshot, BudgetState, Knobs, OptimizerMode, Outcome, RecordStatus,
    RunTrace, StepOutcome, TraceRecord, TrainingEnvironment,
};
use crate::scenario::Scenario;
use crate::urge::compute_urge;
use crate::{Error, Result};

pub const ORACLE_BATCHES: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];
pub const ORACLE_BUFFERS: [usize; 6] = [10, 100, 1_000, 10_000, 100_000, 1_000_000];
pub const ORACLE_RUNS: usize = ORACLE_BATCHES.len() * ORACLE_BUFFERS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselinePolicy {
    MaxA,
    MaxP,
    /// Fixed-config proxy; uses the scenario's `fixed` preset.
    Fixed,
    Oracle,
}

impl BaselinePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselinePolicy::MaxA => "max-a",
            BaselinePolicy::MaxP => "max-p",
            BaselinePolicy::Fixed => "fixed-proxy",
            BaselinePolicy::Oracle => "oracle",
        }
    }

    /// The knobs of a fixed policy; `None` for the oracle.
    pub fn knobs(self, scenario: &Scenario) -> Option<Knobs> {
        match self {
            BaselinePolicy::MaxA => Some(scenario.baselines.max_a),
            BaselinePolicy::MaxP => Some(scenario.baselines.max_p),
            BaselinePolicy::Fixed => Some(scenario.baselines.fixed),
            BaselinePolicy::Oracle => None,
        }
    }
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselinePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "max-a" | "maxa" => Ok(BaselinePolicy::MaxA),
            "max-p" | "maxp" => Ok(BaselinePolicy::MaxP),
            "fixed" | "fixed-proxy" => Ok(BaselinePolicy::Fixed),
            "oracle" => Ok(BaselinePolicy::Oracle),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown baseline `{other}`"
            ))),
        }
    }
}

/// Trains experience `e` with `schedule[e - 1]`; the schedule may be shorter
/// than the scenario, in which case the run stops early as completed.
pub fn run_schedule<E: TrainingEnvironment>(
    scenario: &Scenario,
    env: &mut E,
    schedule: &[Knobs],
) -> Result<RunTrace> {
    run_with(scenario, env, schedule.len(), |e| schedule[e - 1])
}

/// Trains every experience with the same knobs.
pub fn run_fixed<E: TrainingEnvironment>(
    scenario: &Scenario,
    env: &mut E,
    knobs: Knobs,
) -> Result<RunTrace> {
    run_with(scenario, env, scenario.num_experiences, |_| knobs)
}

fn run_with<E: TrainingEnvironment>(
    scenario: &Scenario,
    env: &mut E,
    steps: usize,
    knobs_at: impl Fn(usize) -> Knobs,
) -> Result<RunTrace> {
    scenario.validate()?;
    let weights = scenario.weights()?;
    let mut config = scenario.controller;
    if scenario.probe_optimizer {
        if let Some(p) = env.optimizer_memory(1) {
            config.apply_probe(p);
        }
    }
    let n = steps.min(scenario.num_experiences);
    let mut records = Vec::with_capacity(n);
    let mut outcome = Outcome::Completed;
    for e in 1..=n {
        let knobs = knobs_at(e);
        let mut budgets = BudgetState::from_knobs(&knobs, &config);
        budgets.t = e - 1;
        match env.train_experience(e, &knobs)? {
            StepOutcome::OutOfMemory { memory_peak_mb } => {
                records.push(TraceRecord {
                    experience: e,
                    knobs,
                    memory_peak_mb,
                    snapshot: None,
                    score: None,
                    threshold: None,
                    budgets,
                    status: RecordStatus::Oom,
                });
                outcome = Outcome::OomFailed;
                break;
            }
            StepOutcome::Trained {
                latency_s,
                memory_peak_mb,
            } => {
                let snap =
                    trained_snapshot(env, e, latency_s, memory_peak_mb, scenario.thresholds)?;
                let score = compute_urge(&snap, &weights, scenario.normalize_deviations)?;
                let threshold = threshold_at(&config, e - 1);
                if scenario.probe_optimizer {
                    if let Some(p) = env.optimizer_memory(e + 1) {
                        config.apply_probe(p);
                    }
                }
                let mut after = BudgetState::from_knobs(&knobs, &config);
                after.t = e;
                records.push(TraceRecord {
                    experience: e,
                    knobs,
                    memory_peak_mb,
                    snapshot: Some(snap),
                    score: Some(score.value),
                    threshold: Some(threshold),
                    budgets: after,
                    status: RecordStatus::Ok,
                });
                if e < scenario.num_experiences {
                    env.prefetch_next(e + 1);
                }
            }
        }
    }
    Ok(RunTrace { records, outcome })
}

/// Runs a baseline on a fresh environment built from the scenario. For the
/// oracle this is the trace of the best grid point, or of the first grid
/// point when every point ran out of memory.
pub fn run_baseline(policy: BaselinePolicy, scenario: &Scenario) -> Result<RunTrace> {
    match policy.knobs(scenario) {
        Some(knobs) => {
            let mut env = scenario.environment()?;
            run_fixed(scenario, &mut env, knobs)
        }
        None => {
            let mut result = run_oracle(scenario)?;
            let idx = result.best.unwrap_or(0);
            Ok(result.runs.swap_remove(idx).trace)
        }
    }
}

/// The 42 oracle grid points, batch-major. All use the default optimizer.
pub fn oracle_grid() -> Vec<Knobs> {
    let mut grid = Vec::with_capacity(ORACLE_RUNS);
    for &b in &ORACLE_BATCHES {
        for &r in &ORACLE_BUFFERS {
            grid.push(Knobs::new(b, r, OptimizerMode::Default));
        }
    }
    grid
}

/// One oracle grid point on a fresh environment.
pub fn run_grid_point(scenario: &Scenario, knobs: Knobs) -> Result<OracleRun> {
    let mut env = scenario.environment()?;
    let trace = run_fixed(scenario, &mut env, knobs)?;
    Ok(OracleRun { knobs, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub knobs: Knobs,
    pub trace: RunTrace,
}

impl OracleRun {
    /// Mean of final plasticity and stability; `None` unless completed.
    pub fn objective(&self) -> Option<f64> {
        if !self.trace.is_completed() {
            return None;
        }
        let s = self.trace.final_snapshot()?;
        Some(0.5 * (s.plasticity + s.stability))
    }
}

/// Total preference order over candidates: higher objective, then lower
/// total latency, then smaller batch, then smaller buffer.
fn better(a: &OracleRun, b: &OracleRun) -> Ordering {
    match (a.objective(), b.objective()) {
        (None, None) => return cmp_knobs(a, b),
        (Some(_), None) => return Ordering::Less,
        (None, Some(_)) => return Ordering::Greater,
        (Some(x), Some(y)) => {
            let o = y.total_cmp(&x);
            if o != Ordering::Equal {
                return o;
            }
        }
    }
    a.trace
        .total_latency_s()
        .total_cmp(&b.trace.total_latency_s())
        .then_with(|| cmp_knobs(a, b))
}

fn cmp_knobs(a: &OracleRun, b: &OracleRun) -> Ordering {
    (a.knobs.batch, a.knobs.buffer).cmp(&(b.knobs.batch, b.knobs.buffer))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub runs: Vec<OracleRun>,
    /// Index into `runs` of the best completed run.
    pub best: Option<usize>,
}

impl OracleResult {
    /// Aggregates grid runs in any order.
    pub fn from_runs(runs: Vec<OracleRun>) -> Self {
        let best = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.objective().is_some())
            .min_by(|a, b| better(a.1, b.1))
            .map(|(i, _)| i);
        Self { runs, best }
    }

    pub fn best_run(&self) -> Option<&OracleRun> {
        self.best.map(|i| &self.runs[i])
    }

    pub fn best_knobs(&self) -> Option<Knobs> {
        self.best_run().map(|r| r.knobs)
    }

    pub fn oom_count(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.trace.outcome == Outcome::OomFailed)
            .count()
    }

    /// Every grid point failed.
    pub fn is_infeasible(&self) -> bool {
        self.best.is_none()
    }

    pub fn summary(&self) -> String {
        match self.best_knobs() {
            Some(k) => alloc::format!(
                "best B={} R={} ({} of {} OOM)",
                k.batch,
                k.buffer,
                self.oom_count(),
                self.runs.len()
            ),
            None => alloc::format!(
                "infeasible ({} of {} OOM)",
                self.oom_count(),
                self.runs.len()
            ),
        }
    }
}

/// Runs all 42 grid points sequentially.
pub fn run_oracle(scenario: &Scenario) -> Result<OracleResult> {
    let runs = oracle_grid()
        .into_iter()
        .map(|k| run_grid_point(scenario, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleResult::from_runs(runs))
}
