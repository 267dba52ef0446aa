//! Suites: controller and baseline runs, the oracle sweep, the prefetch
//! ablation and controller overhead accounting.

use std::mem::size_of;
use std::time::Instant;

use memtune_core::baselines::{
    oracle_grid, run_fixed, run_grid_point, run_schedule, BaselinePolicy, OracleResult,
};
use memtune_core::controller::{
    run_control_loop, Controller, RunTrace, StepOutcome, TrainingEnvironment,
};
use memtune_core::metrics;
use memtune_core::scenario::Scenario;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::HarnessError;
use crate::report::{OracleSummary, Policy, Report, RunEntry};

/// Runs the adaptive controller on a fresh environment.
pub fn run_controller(scenario: &Scenario) -> Result<RunTrace, HarnessError> {
    let mut env = scenario.environment()?;
    Ok(run_control_loop(scenario, &mut env)?)
}

/// All 42 oracle grid points, in parallel.
pub fn run_oracle_parallel(scenario: &Scenario) -> Result<OracleResult, HarnessError> {
    let runs = oracle_grid()
        .into_par_iter()
        .map(|k| run_grid_point(scenario, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OracleResult::from_runs(runs))
}

/// One trace per requested policy (42 for the oracle), sorted by policy.
pub fn run_suite(scenario: &Scenario, policies: &[Policy]) -> Result<Report, HarnessError> {
    if policies.is_empty() {
        return Err(HarnessError::Config("no policies requested".into()));
    }
    let mut wanted = policies.to_vec();
    wanted.sort();
    wanted.dedup();
    let mut report = Report::new(&scenario.name, &scenario.preference.label());
    for policy in wanted {
        match policy {
            Policy::Controller => {
                report
                    .runs
                    .push(RunEntry::new(policy, run_controller(scenario)?));
            }
            Policy::Baseline(BaselinePolicy::Oracle) => {
                let result = run_oracle_parallel(scenario)?;
                report.oracle = Some(OracleSummary {
                    runs: result.runs.len(),
                    oom_count: result.oom_count(),
                    best: result.best_knobs(),
                });
                for (i, run) in result.runs.into_iter().enumerate() {
                    report
                        .runs
                        .push(RunEntry::grid_point(i, run.knobs, run.trace));
                }
            }
            Policy::Baseline(b) => {
                let knobs = b.knobs(scenario).expect("fixed-knob baseline");
                let mut env = scenario.environment()?;
                let trace = run_fixed(scenario, &mut env, knobs)?;
                report.runs.push(RunEntry::new(policy, trace));
            }
        }
    }
    report.sort();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub scenario: String,
    pub latency_with_prefetch_s: f64,
    pub latency_without_prefetch_s: f64,
    /// `1 - with / without`.
    pub reduction: f64,
}

/// Latency saved by prefetching for the controller's own knob sequence.
///
/// The controller runs with prefetching on; its knobs are then replayed
/// with prefetching off, so both runs train with identical parameters.
pub fn ablate_prefetch(scenario: &Scenario) -> Result<AblationResult, HarnessError> {
    let mut on = scenario.clone();
    on.environment.prefetch.enabled = true;
    let with = run_controller(&on)?;

    let mut off = scenario.clone();
    off.environment.prefetch.enabled = false;
    let mut env = off.environment()?;
    let without = run_schedule(&off, &mut env, &with.knob_sequence())?;

    let a = with.total_latency_s();
    let b = without.total_latency_s();
    Ok(AblationResult {
        scenario: scenario.name.clone(),
        latency_with_prefetch_s: a,
        latency_without_prefetch_s: b,
        reduction: if b > 0.0 { 1.0 - a / b } else { 0.0 },
    })
}

/// Controller-attributable cost of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overhead {
    pub scenario: String,
    pub experiences: usize,
    /// Wall time of scoring, budget update and knob derivation, summed.
    pub controller_s: f64,
    pub controller_per_experience_s: f64,
    /// Simulated training time of the same run.
    pub training_s: f64,
    /// `controller_s / training_s`.
    pub ratio: f64,
    /// In-memory size of the controller state.
    pub state_bytes: usize,
    pub note: &'static str,
}

/// Runs the control loop by hand, timing only the controller's decision
/// step. The accuracy-matrix evaluation is the training framework's work
/// and is not counted.
pub fn measure_overhead(scenario: &Scenario) -> Result<Overhead, HarnessError> {
    scenario.validate()?;
    let mut env = scenario.environment()?;
    let mut config = scenario.controller;
    if scenario.probe_optimizer {
        if let Some(p) = env.optimizer_memory(1) {
            config.apply_probe(p);
        }
    }
    let mut ctl = Controller::new(
        config,
        scenario.weights()?,
        scenario.normalize_deviations,
        scenario.initial,
    )?;
    let mut controller_s = 0.0;
    let mut training_s = 0.0;
    let mut experiences = 0;
    for e in 1..=scenario.num_experiences {
        let knobs = ctl.knobs();
        let StepOutcome::Trained {
            latency_s,
            memory_peak_mb,
        } = env.train_experience(e, &knobs)?
        else {
            break;
        };
        training_s += latency_s;
        experiences += 1;
        let snap = metrics::snapshot(
            env.accuracy(),
            e,
            latency_s,
            memory_peak_mb,
            scenario.thresholds,
        )?;
        let probe = if scenario.probe_optimizer {
            env.optimizer_memory(e + 1)
        } else {
            None
        };
        let start = Instant::now();
        let decided = ctl.observe(&snap, probe);
        let next = ctl.knobs();
        controller_s += start.elapsed().as_secs_f64();
        std::hint::black_box(next);
        if decided.is_err() {
            break;
        }
        if e < scenario.num_experiences {
            env.prefetch_next(e + 1);
        }
    }
    Ok(Overhead {
        scenario: scenario.name.clone(),
        experiences,
        controller_s,
        controller_per_experience_s: controller_s / experiences.max(1) as f64,
        training_s,
        ratio: if training_s > 0.0 {
            controller_s / training_s
        } else {
            0.0
        },
        state_bytes: size_of::<Controller>(),
        note: "controller decision step only; framework and evaluation costs are excluded",
    })
}

/// Controller summaries of one scenario under each preference ordering.
pub fn preference_runs(
    scenario: &Scenario,
    preferences: &[memtune_core::urge::Preference],
) -> Result<Vec<(String, RunTrace)>, HarnessError> {
    preferences
        .par_iter()
        .map(|p| {
            let s = scenario.with_preference(p.clone());
            Ok((p.label(), run_controller(&s)?))
        })
        .collect()
}
