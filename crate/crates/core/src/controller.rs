//! Decaying threshold, memory-budget updates, knob derivation and the
//! per-experience control loop.
//!
//! Memory is split into three budgets: batch processing (`MB`), replay
//! buffer (`MR`) and optimizer (`MO`). After each experience the health
//! score is compared with a threshold `T0 * exp(-delta * t)`. At or above it
//! the batch and replay budgets grow by `1 + alpha * (score - threshold)`
//! and `1 + beta * (score - threshold)` and the advanced optimizer is
//! enabled; below it they shrink symmetrically and the default optimizer is
//! used. The result is projected back under `capacity * (1 - safety_margin)`
//! by scaling `MB` and `MR` together.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::metrics::{self, AccuracyMatrix, MetricSnapshot, Thresholds};
use crate::scenario::Scenario;
use crate::simulator::OptimizerMemory;
use crate::urge::{compute_urge, UrgeScore, Weights};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerMode {
    #[default]
    Default,
    Advanced,
}

impl OptimizerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerMode::Default => "default",
            OptimizerMode::Advanced => "advanced",
        }
    }
}

impl fmt::Display for OptimizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(OptimizerMode::Default),
            "advanced" => Ok(OptimizerMode::Advanced),
            other => Err(Error::InvalidConfig(format!(
                "unknown optimizer mode `{other}`"
            ))),
        }
    }
}

/// Application-level training knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Knobs {
    pub batch: usize,
    pub buffer: usize,
    pub optimizer_mode: OptimizerMode,
}

impl Knobs {
    pub const fn new(batch: usize, buffer: usize, optimizer_mode: OptimizerMode) -> Self {
        Self {
            batch,
            buffer,
            optimizer_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ControllerConfig {
    /// Initial threshold, in (0, 1).
    pub t0: f64,
    /// Threshold decay per experience.
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// MB per batch sample.
    pub m_batch_mb: f64,
    /// MB per replay data frame.
    pub m_df_mb: f64,
    /// Everything not attributed to batch or replay with the default optimizer.
    pub mo_default_mb: f64,
    /// `MO_advanced = k_opt * MO_default`.
    pub k_opt: f64,
    pub capacity_mb: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_safety_margin"))]
    pub safety_margin: f64,
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub min_batch: usize,
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub min_buffer: usize,
}

#[cfg(feature = "serde")]
fn default_safety_margin() -> f64 {
    0.05
}

#[cfg(feature = "serde")]
fn one() -> usize {
    1
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.t0,
            self.delta,
            self.alpha,
            self.beta,
            self.m_batch_mb,
            self.m_df_mb,
            self.mo_default_mb,
            self.k_opt,
            self.capacity_mb,
            self.safety_margin,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain("controller config"));
        }
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return bad("t0 must lie in (0, 1)");
        }
        if self.delta < 0.0 || self.alpha < 0.0 || self.beta < 0.0 {
            return bad("delta, alpha and beta must be >= 0");
        }
        if self.m_batch_mb <= 0.0 || self.m_df_mb <= 0.0 || self.mo_default_mb <= 0.0 {
            return bad("m_batch_mb, m_df_mb and mo_default_mb must be > 0");
        }
        if self.k_opt < 1.0 {
            return bad("k_opt must be >= 1");
        }
        if self.capacity_mb <= self.mo_default_mb {
            return bad("capacity_mb must exceed mo_default_mb");
        }
        if !(0.0..1.0).contains(&self.safety_margin) {
            return bad("safety_margin must lie in [0, 1)");
        }
        if self.min_batch == 0 || self.min_buffer == 0 {
            return bad("min_batch and min_buffer must be >= 1");
        }
        Ok(())
    }

    pub fn mo_advanced_mb(&self) -> f64 {
        self.k_opt * self.mo_default_mb
    }

    /// Whether enabling the advanced optimizer would change anything.
    pub fn advanced_available(&self) -> bool {
        self.k_opt > 1.0
    }

    /// Memory the three budgets may occupy together.
    pub fn budget_cap_mb(&self) -> f64 {
        self.capacity_mb * (1.0 - self.safety_margin)
    }

    pub fn optimizer_mb(&self, mode: OptimizerMode) -> f64 {
        match mode {
            OptimizerMode::Default => self.mo_default_mb,
            OptimizerMode::Advanced => self.mo_advanced_mb(),
        }
    }

    /// Replaces `MO_default` and `k_opt` with measured values.
    pub fn apply_probe(&mut self, probe: OptimizerMemory) {
        if probe.default_mb > 0.0 && probe.default_mb.is_finite() && probe.advanced_mb.is_finite() {
            self.mo_default_mb = probe.default_mb;
            self.k_opt = probe.ratio().max(1.0);
        }
    }
}

/// Threshold at experience index `t`.
pub fn threshold_at(config: &ControllerConfig, t: usize) -> f64 {
    config.t0 * libm::exp(-config.delta * t as f64)
}

/// Multiplicative budget factor: `1 + sensitivity * (score - threshold)`,
/// never negative.
pub fn update_multiplier(score: f64, threshold: f64, sensitivity: f64) -> f64 {
    (1.0 + sensitivity * (score - threshold)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BudgetState {
    pub batch_mb: f64,
    pub replay_mb: f64,
    pub optimizer_mb: f64,
    pub mode: OptimizerMode,
    /// Number of updates applied so far.
    pub t: usize,
}

impl BudgetState {
    /// Budgets that reproduce `knobs` exactly.
    pub fn from_knobs(knobs: &Knobs, config: &ControllerConfig) -> Self {
        let mode = if config.advanced_available() {
            knobs.optimizer_mode
        } else {
            OptimizerMode::Default
        };
        Self {
            batch_mb: knobs.batch as f64 * config.m_batch_mb,
            replay_mb: knobs.buffer as f64 * config.m_df_mb,
            optimizer_mb: config.optimizer_mb(mode),
            mode,
            t: 0,
        }
    }

    pub fn total_mb(&self) -> f64 {
        self.batch_mb + self.replay_mb + self.optimizer_mb
    }
}

fn min_knob_mb(config: &ControllerConfig) -> f64 {
    config.min_batch as f64 * config.m_batch_mb + config.min_buffer as f64 * config.m_df_mb
}

fn apply_update(
    prev: &BudgetState,
    score: f64,
    threshold: f64,
    config: &ControllerConfig,
    allow_advanced: bool,
) -> Result<BudgetState> {
    if !score.is_finite() || !threshold.is_finite() {
        return Err(Error::NumericDomain("score or threshold"));
    }
    let aggressive = score >= threshold;
    let mode = if aggressive && allow_advanced && config.advanced_available() {
        OptimizerMode::Advanced
    } else {
        OptimizerMode::Default
    };
    let mut batch_mb = prev.batch_mb * update_multiplier(score, threshold, config.alpha);
    let mut replay_mb = prev.replay_mb * update_multiplier(score, threshold, config.beta);
    let optimizer_mb = config.optimizer_mb(mode);

    let cap = config.budget_cap_mb();
    let available = cap - optimizer_mb;
    if available < min_knob_mb(config) {
        return Err(Error::InfeasibleBudget(format!(
            "{} optimizer needs {optimizer_mb:.1} MB, leaving {available:.1} MB of {cap:.1} MB",
            mode.as_str()
        )));
    }
    let knob_mb = batch_mb + replay_mb;
    if knob_mb > available {
        let scale = available / knob_mb;
        batch_mb *= scale;
        replay_mb *= scale;
    }
    // the floors in derive_knobs may claim more than the projected budgets
    let floored = batch_mb.max(config.min_batch as f64 * config.m_batch_mb)
        + replay_mb.max(config.min_buffer as f64 * config.m_df_mb);
    if floored > available * (1.0 + 1e-12) {
        return Err(Error::InfeasibleBudget(format!(
            "minimum knobs need {floored:.1} MB but only {available:.1} MB remain"
        )));
    }
    Ok(BudgetState {
        batch_mb,
        replay_mb,
        optimizer_mb,
        mode,
        t: prev.t + 1,
    })
}

/// One budget update. At or above the threshold the advanced optimizer is
/// selected (when `k_opt > 1`); the result is projected under the cap.
pub fn update_budgets(
    prev: &BudgetState,
    score: &UrgeScore,
    threshold: f64,
    config: &ControllerConfig,
) -> Result<BudgetState> {
    apply_update(prev, score.value, threshold, config, true)
}

pub fn derive_knobs(state: &BudgetState, config: &ControllerConfig) -> Knobs {
    // the relative nudge keeps `floor(k * unit / unit) == k` despite rounding
    let floor_div = |mb: f64, unit: f64| {
        let q = libm::floor(mb / unit * (1.0 + 4.0 * f64::EPSILON));
        if q.is_finite() && q > 0.0 {
            q as usize
        } else {
            0
        }
    };
    Knobs {
        batch: floor_div(state.batch_mb, config.m_batch_mb).max(config.min_batch),
        buffer: floor_div(state.replay_mb, config.m_df_mb).max(config.min_buffer),
        optimizer_mode: state.mode,
    }
}

/// Result of training one experience.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StepOutcome {
    Trained { latency_s: f64, memory_peak_mb: f64 },
    OutOfMemory { memory_peak_mb: f64 },
}

/// Anything the control loop can drive.
pub trait TrainingEnvironment {
    /// Trains experience `experience` (1-indexed, strictly sequential).
    fn train_experience(&mut self, experience: usize, knobs: &Knobs) -> Result<StepOutcome>;
    /// Requests that `experience` be staged before it is trained. Idempotent.
    fn prefetch_next(&mut self, experience: usize);
    fn accuracy(&self) -> &AccuracyMatrix;
    /// Optimizer memory per mode while training `experience`, if the
    /// environment can measure it.
    fn optimizer_memory(&self, experience: usize) -> Option<OptimizerMemory>;
}

/// What the controller decided after one experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub score: UrgeScore,
    pub threshold: f64,
    pub budgets: BudgetState,
    pub knobs: Knobs,
    /// The advanced optimizer was wanted but did not fit.
    pub fell_back: bool,
}

/// Controller state carried between experiences.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    config: ControllerConfig,
    weights: Weights,
    normalize_deviations: bool,
    budgets: BudgetState,
    last_score: UrgeScore,
}

impl Controller {
    pub fn new(
        config: ControllerConfig,
        weights: Weights,
        normalize_deviations: bool,
        initial: Knobs,
    ) -> Result<Self> {
        config.validate()?;
        let budgets = BudgetState::from_knobs(&initial, &config);
        if budgets.total_mb() > config.budget_cap_mb() {
            return Err(Error::InfeasibleBudget(format!(
                "initial budgets need {:.1} MB, cap is {:.1} MB",
                budgets.total_mb(),
                config.budget_cap_mb()
            )));
        }
        Ok(Self {
            config,
            weights,
            normalize_deviations,
            budgets,
            last_score: UrgeScore::INITIAL,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn budgets(&self) -> &BudgetState {
        &self.budgets
    }

    pub fn last_score(&self) -> &UrgeScore {
        &self.last_score
    }

    pub fn knobs(&self) -> Knobs {
        derive_knobs(&self.budgets, &self.config)
    }

    pub fn threshold(&self) -> f64 {
        threshold_at(&self.config, self.budgets.t)
    }

    /// Scores the finished experience and updates the budgets for the next.
    ///
    /// `probe` refreshes the optimizer memory estimate first. If the
    /// advanced optimizer does not fit the update is retried with the
    /// default one; an `InfeasibleBudget` error means neither fits, in which
    /// case the budgets are left untouched.
    pub fn observe(
        &mut self,
        snapshot: &MetricSnapshot,
        probe: Option<OptimizerMemory>,
    ) -> Result<Decision> {
        let threshold = self.threshold();
        let score = compute_urge(snapshot, &self.weights, self.normalize_deviations)?;
        self.last_score = score;
        if let Some(p) = probe {
            self.config.apply_probe(p);
        }
        let (budgets, fell_back) =
            match apply_update(&self.budgets, score.value, threshold, &self.config, true) {
                Ok(b) => (b, false),
                Err(Error::InfeasibleBudget(_))
                    if score.value >= threshold && self.config.advanced_available() =>
                {
                    let b =
                        apply_update(&self.budgets, score.value, threshold, &self.config, false)?;
                    (b, true)
                }
                Err(e) => return Err(e),
            };
        self.budgets = budgets;
        Ok(Decision {
            score,
            threshold,
            budgets,
            knobs: self.knobs(),
            fell_back,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RecordStatus {
    Ok,
    Oom,
    Infeasible,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Oom => "oom",
            RecordStatus::Infeasible => "infeasible",
        }
    }
}

/// One experience of a run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub experience: usize,
    /// Knobs the experience was trained with.
    pub knobs: Knobs,
    pub memory_peak_mb: f64,
    /// Absent when the experience ran out of memory.
    pub snapshot: Option<MetricSnapshot>,
    pub score: Option<f64>,
    pub threshold: Option<f64>,
    /// Budgets after the update that followed this experience.
    pub budgets: BudgetState,
    pub status: RecordStatus,
}

impl TraceRecord {
    pub fn latency_s(&self) -> Option<f64> {
        self.snapshot.map(|s| s.latency_s)
    }

    pub fn is_oom(&self) -> bool {
        self.status == RecordStatus::Oom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Completed,
    OomFailed,
    Infeasible,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::OomFailed => "oom",
            Outcome::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub outcome: Outcome,
}

impl RunTrace {
    /// Sum of per-experience latencies of every trained experience.
    pub fn total_latency_s(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.latency_s())
            .fold(0.0, |acc, l| acc + l)
    }

    pub fn peak_memory_mb(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.memory_peak_mb)
            .fold(0.0, f64::max)
    }

    /// Snapshot of the last trained experience.
    pub fn final_snapshot(&self) -> Option<&MetricSnapshot> {
        self.records.iter().rev().find_map(|r| r.snapshot.as_ref())
    }

    pub fn final_plasticity(&self) -> Option<f64> {
        self.final_snapshot().map(|s| s.plasticity)
    }

    pub fn final_stability(&self) -> Option<f64> {
        self.final_snapshot().map(|s| s.stability)
    }

    pub fn is_completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn knob_sequence(&self) -> Vec<Knobs> {
        self.records.iter().map(|r| r.knobs).collect()
    }
}

pub(crate) fn trained_snapshot<E: TrainingEnvironment>(
    env: &E,
    experience: usize,
    latency_s: f64,
    memory_peak_mb: f64,
    thresholds: Thresholds,
) -> Result<MetricSnapshot> {
    metrics::snapshot(
        env.accuracy(),
        experience,
        latency_s,
        memory_peak_mb,
        thresholds,
    )
}

/// Runs the adaptive controller over every experience of the scenario.
///
/// Per experience: derive knobs, train, score, update budgets, prefetch the
/// next experience. The loop stops at the first out-of-memory step or when
/// no optimizer mode fits the budget.
pub fn run_control_loop<E: TrainingEnvironment>(
    scenario: &Scenario,
    env: &mut E,
) -> Result<RunTrace> {
    scenario.validate()?;
    let mut config = scenario.controller;
    if scenario.probe_optimizer {
        if let Some(p) = env.optimizer_memory(1) {
            config.apply_probe(p);
        }
    }
    let mut ctl = Controller::new(
        config,
        scenario.preference.weights()?,
        scenario.normalize_deviations,
        scenario.initial,
    )?;
    let n = scenario.num_experiences;
    let mut records = Vec::with_capacity(n);
    let mut outcome = Outcome::Completed;

    for e in 1..=n {
        let knobs = ctl.knobs();
        match env.train_experience(e, &knobs)? {
            StepOutcome::OutOfMemory { memory_peak_mb } => {
                records.push(TraceRecord {
                    experience: e,
                    knobs,
                    memory_peak_mb,
                    snapshot: None,
                    score: None,
                    threshold: None,
                    budgets: *ctl.budgets(),
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
                let probe = if scenario.probe_optimizer {
                    env.optimizer_memory(e + 1)
                } else {
                    None
                };
                let threshold = ctl.threshold();
                match ctl.observe(&snap, probe) {
                    Ok(d) => records.push(TraceRecord {
                        experience: e,
                        knobs,
                        memory_peak_mb,
                        snapshot: Some(snap),
                        score: Some(d.score.value),
                        threshold: Some(d.threshold),
                        budgets: d.budgets,
                        status: RecordStatus::Ok,
                    }),
                    Err(Error::InfeasibleBudget(_)) => {
                        records.push(TraceRecord {
                            experience: e,
                            knobs,
                            memory_peak_mb,
                            snapshot: Some(snap),
                            score: Some(ctl.last_score().value),
                            threshold: Some(threshold),
                            budgets: *ctl.budgets(),
                            status: RecordStatus::Infeasible,
                        });
                        outcome = Outcome::Infeasible;
                        break;
                    }
                    Err(err) => return Err(err),
                }
                if e < n {
                    env.prefetch_next(e + 1);
                }
            }
        }
    }
    Ok(RunTrace { records, outcome })
}
