//! Deterministic stand-in for on-device OCL training.
//!
//! The environment maps `(knobs, experience, algorithm profile)` to a
//! latency, a peak memory and a new accuracy-matrix row. Functional forms:
//!
//! - latency: `scale * ((n / B) * max(floor, cost * B) * opt_mult * growth^(e-1) + R * replay_cost)`,
//!   i.e. hyperbolic in `B` until the compute-bound knee `floor / cost`,
//!   flat afterwards; data loading is added on top and partly hidden when
//!   the experience was prefetched.
//! - memory: `base + B * activation_mb + R * frame_mb + spike(R) + opt(mode, e)`,
//!   with a superlinear residency spike above a buffer threshold.
//! - stability response: `s(R) = s_max * (1 - exp(-R / R0))`.
//! - plasticity: the new experience reaches `p_max * (1 - exp(-(n / B) / tau))`
//!   plus a bonus in advanced mode; earlier experiences decay by
//!   `forgetting_rate * (1 - s(R))` per experience.

mod calibrate;

pub use calibrate::{
    calibrate_profile, CalibrationResult, CalibrationTargets, PluginTarget, Residuals,
};

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{Knobs, OptimizerMode, StepOutcome, TrainingEnvironment};
use crate::metrics::AccuracyMatrix;
use crate::{Error, Result};

/// Cost and memory characteristics of one OCL algorithm.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AlgorithmProfile {
    pub name: String,
    /// Seconds per sample once an iteration is compute bound.
    pub compute_cost_per_sample: f64,
    /// Seconds per buffered sample per experience (buffer maintenance and sampling).
    pub replay_sampling_cost: f64,
    /// Latency multiplier when the advanced optimization plugins are enabled.
    pub optimizer_latency_multiplier_advanced: f64,
    /// Extra MB held by the advanced plugins.
    pub optimizer_memory_delta: f64,
    /// Extra MB per already-trained experience held by the advanced plugins
    /// (per-experience state such as stored gradients or importances).
    #[cfg_attr(feature = "serde", serde(default))]
    pub optimizer_memory_growth: f64,
    /// Model plus framework plus default optimizer state, MB.
    pub base_memory: f64,
    /// Per-experience latency growth factor (workload drift).
    pub per_experience_growth: f64,
}

impl AlgorithmProfile {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("compute_cost_per_sample", self.compute_cost_per_sample),
            ("replay_sampling_cost", self.replay_sampling_cost),
            ("optimizer_memory_delta", self.optimizer_memory_delta),
            ("optimizer_memory_growth", self.optimizer_memory_growth),
            ("base_memory", self.base_memory),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "profile {}: {name} must be finite and >= 0",
                    self.name
                )));
            }
        }
        let mults = [
            (
                "optimizer_latency_multiplier_advanced",
                self.optimizer_latency_multiplier_advanced,
            ),
            ("per_experience_growth", self.per_experience_growth),
        ];
        for (name, v) in mults {
            if !v.is_finite() || v < 1.0 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "profile {}: {name} must be >= 1",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Response surfaces shared by the latency, memory and accuracy models.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ResponseModel {
    /// Seconds per iteration below the compute-bound knee.
    pub iteration_floor_s: f64,
    /// Activation memory per batch sample, MB.
    pub activation_mb: f64,
    /// Memory per stored replay frame, MB.
    pub frame_mb: f64,
    /// Buffer size above which residency grows superlinearly.
    pub spike_threshold: f64,
    /// Spike coefficient: `coeff * (R - T)^2 / T` MB above the threshold.
    pub spike_mb_per_frame: f64,
    pub stability_max: f64,
    /// Buffer size scale `R0` of the saturating stability response.
    pub stability_scale: f64,
    pub plasticity_max: f64,
    /// Gradient steps per experience at which learning is ~63% saturated.
    pub plasticity_steps_scale: f64,
    pub advanced_plasticity_bonus: f64,
    /// Fraction of accuracy lost per experience with an empty buffer.
    pub forgetting_rate: f64,
    /// Forgetting multiplier while the advanced plugins run.
    pub advanced_forgetting_scale: f64,
    /// Relative jitter applied to latency and new accuracies; 0 disables.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise: f64,
}

impl ResponseModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("iteration_floor_s", self.iteration_floor_s),
            ("activation_mb", self.activation_mb),
            ("frame_mb", self.frame_mb),
            ("spike_threshold", self.spike_threshold),
            ("stability_scale", self.stability_scale),
            ("plasticity_steps_scale", self.plasticity_steps_scale),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(alloc::format!("{name} must be > 0")));
            }
        }
        let unit = [
            ("stability_max", self.stability_max),
            ("plasticity_max", self.plasticity_max),
            ("advanced_plasticity_bonus", self.advanced_plasticity_bonus),
            ("forgetting_rate", self.forgetting_rate),
            ("advanced_forgetting_scale", self.advanced_forgetting_scale),
            ("noise", self.noise),
        ];
        for (name, v) in unit {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        if !self.spike_mb_per_frame.is_finite() || self.spike_mb_per_frame < 0.0 {
            return Err(Error::InvalidConfig(
                "spike_mb_per_frame must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Saturating stability gain of a buffer of `buffer` frames.
    pub fn stability_response(&self, buffer: f64) -> f64 {
        self.stability_max * (1.0 - libm::exp(-buffer / self.stability_scale))
    }

    /// Superlinear residency term; zero at or below the threshold.
    pub fn spike_mb(&self, buffer: f64) -> f64 {
        if buffer <= self.spike_threshold {
            0.0
        } else {
            let over = buffer - self.spike_threshold;
            self.spike_mb_per_frame * over * over / self.spike_threshold
        }
    }
}

/// Hardware envelope of a simulated device.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Platform {
    pub name: String,
    pub capacity_mb: f64,
    /// Multiplier on compute time relative to the reference device.
    pub compute_scale: f64,
}

/// Data-loading pipeline. Effective latency of a prefetched experience is
/// `compute + max(0, load - overlap_efficiency * compute)`; otherwise
/// `compute + load`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PrefetchModel {
    pub load_time_per_sample_s: f64,
    pub overlap_efficiency: f64,
    pub enabled: bool,
}

impl PrefetchModel {
    pub fn effective_latency(&self, compute_s: f64, load_s: f64, prefetched: bool) -> f64 {
        if self.enabled && prefetched {
            compute_s + (load_s - self.overlap_efficiency * compute_s).max(0.0)
        } else {
            compute_s + load_s
        }
    }
}

/// Everything needed to build a [`SimulatedEnvironment`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvironmentSpec {
    pub profile: AlgorithmProfile,
    pub response: ResponseModel,
    pub platform: Platform,
    pub prefetch: PrefetchModel,
    pub samples_per_experience: usize,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.response.validate()?;
        if !(self.platform.capacity_mb > 0.0) || !(self.platform.compute_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "platform capacity and compute scale must be > 0".into(),
            ));
        }
        let p = &self.prefetch;
        if !(p.load_time_per_sample_s >= 0.0) || !(0.0..=1.0).contains(&p.overlap_efficiency) {
            return Err(Error::InvalidConfig(
                "prefetch load time must be >= 0 and overlap efficiency in [0, 1]".into(),
            ));
        }
        if self.samples_per_experience == 0 {
            return Err(Error::InvalidConfig(
                "samples_per_experience must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Compute-only seconds for one experience (no data loading).
    pub fn compute_latency(&self, experience: usize, knobs: &Knobs) -> f64 {
        let p = &self.profile;
        let r = &self.response;
        let b = knobs.batch.max(1) as f64;
        let n = self.samples_per_experience as f64;
        let per_iter = r.iteration_floor_s.max(p.compute_cost_per_sample * b);
        let mult = match knobs.optimizer_mode {
            OptimizerMode::Default => 1.0,
            OptimizerMode::Advanced => p.optimizer_latency_multiplier_advanced,
        };
        let growth = libm::pow(p.per_experience_growth, experience.saturating_sub(1) as f64);
        let train = (n / b) * per_iter * mult * growth;
        let replay = knobs.buffer as f64 * p.replay_sampling_cost;
        self.platform.compute_scale * (train + replay)
    }

    /// Seconds spent loading the experience's streaming samples.
    pub fn load_latency(&self) -> f64 {
        self.samples_per_experience as f64 * self.prefetch.load_time_per_sample_s
    }

    /// Memory held by the optimizer in `mode` while training `experience`.
    pub fn optimizer_extra_mb(&self, experience: usize, mode: OptimizerMode) -> f64 {
        match mode {
            OptimizerMode::Default => 0.0,
            OptimizerMode::Advanced => {
                self.profile.optimizer_memory_delta
                    + self.profile.optimizer_memory_growth * experience.saturating_sub(1) as f64
            }
        }
    }

    /// Peak memory of one experience, MB.
    pub fn memory_mb(&self, experience: usize, knobs: &Knobs) -> f64 {
        let r = &self.response;
        let buffer = knobs.buffer as f64;
        self.profile.base_memory
            + knobs.batch as f64 * r.activation_mb
            + buffer * r.frame_mb
            + r.spike_mb(buffer)
            + self.optimizer_extra_mb(experience, knobs.optimizer_mode)
    }

    /// Accuracy the new experience reaches right after training it.
    pub fn new_experience_accuracy(&self, knobs: &Knobs) -> f64 {
        let r = &self.response;
        let steps = self.samples_per_experience as f64 / knobs.batch.max(1) as f64;
        let mut p = r.plasticity_max * (1.0 - libm::exp(-steps / r.plasticity_steps_scale));
        if knobs.optimizer_mode == OptimizerMode::Advanced {
            p += r.advanced_plasticity_bonus;
        }
        p.clamp(0.0, 1.0)
    }

    /// Multiplicative retention applied to earlier experiences.
    pub fn retention(&self, knobs: &Knobs) -> f64 {
        let r = &self.response;
        let mut rate = r.forgetting_rate * (1.0 - r.stability_response(knobs.buffer as f64));
        if knobs.optimizer_mode == OptimizerMode::Advanced {
            rate *= r.advanced_forgetting_scale;
        }
        (1.0 - rate).clamp(0.0, 1.0)
    }
}

/// Memory the optimizer holds per mode, as seen by two probe steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerMemory {
    pub default_mb: f64,
    pub advanced_mb: f64,
}

impl OptimizerMemory {
    /// `k` in `MO_advanced = k * MO_default`.
    pub fn ratio(&self) -> f64 {
        self.advanced_mb / self.default_mb
    }
}

/// Single-owner simulated training device.
#[derive(Debug, Clone)]
pub struct SimulatedEnvironment {
    spec: EnvironmentSpec,
    seed: u64,
    rng: ChaCha8Rng,
    accuracy: AccuracyMatrix,
    next_experience: usize,
    prefetched: Option<usize>,
    failed: bool,
}

impl SimulatedEnvironment {
    pub fn new(spec: EnvironmentSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            accuracy: AccuracyMatrix::new(),
            next_experience: 1,
            prefetched: None,
            failed: false,
        })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn capacity_mb(&self) -> f64 {
        self.spec.platform.capacity_mb
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    /// Evaluates the memory model without training.
    pub fn probe_memory(&self, experience: usize, knobs: &Knobs) -> f64 {
        self.spec.memory_mb(experience, knobs)
    }

    /// Two probe steps at minimal knobs, one per optimizer mode; the knob
    /// memory is subtracted so only base plus optimizer memory remains.
    pub fn probe_optimizer_memory(&self, experience: usize) -> OptimizerMemory {
        let mut knobs = Knobs {
            batch: 1,
            buffer: 1,
            optimizer_mode: OptimizerMode::Default,
        };
        let r = &self.spec.response;
        let knob_mb = r.activation_mb + r.frame_mb + r.spike_mb(1.0);
        let default_mb = self.probe_memory(experience, &knobs) - knob_mb;
        knobs.optimizer_mode = OptimizerMode::Advanced;
        let advanced_mb = self.probe_memory(experience, &knobs) - knob_mb;
        OptimizerMemory {
            default_mb,
            advanced_mb,
        }
    }

    fn jitter(&mut self) -> f64 {
        // uniform in [-1, 1)
        let u = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * u - 1.0
    }
}

impl TrainingEnvironment for SimulatedEnvironment {
    fn train_experience(&mut self, experience: usize, knobs: &Knobs) -> Result<StepOutcome> {
        if self.failed {
            return Err(Error::EnvironmentFailed);
        }
        if experience != self.next_experience {
            return Err(Error::ExperienceOrder {
                expected: self.next_experience,
                got: experience,
            });
        }
        let memory_peak_mb = self.spec.memory_mb(experience, knobs);
        if memory_peak_mb > self.spec.platform.capacity_mb {
            self.failed = true;
            return Ok(StepOutcome::OutOfMemory { memory_peak_mb });
        }

        let noise = self.spec.response.noise;
        let latency_jitter = self.jitter();
        let accuracy_jitter = self.jitter();

        let compute = self.spec.compute_latency(experience, knobs) * (1.0 + noise * latency_jitter);
        let load = self.spec.load_latency();
        let prefetched = self.prefetched == Some(experience);
        let latency_s = self
            .spec
            .prefetch
            .effective_latency(compute, load, prefetched);

        let fresh =
            (self.spec.new_experience_accuracy(knobs) + noise * accuracy_jitter).clamp(0.0, 1.0);
        let keep = self.spec.retention(knobs);
        let prev = experience - 1;
        let mut row: Vec<f64> = Vec::with_capacity(experience);
        for i in 1..experience {
            let before = self.accuracy.get(prev, i).unwrap_or(0.0);
            row.push((before * keep).clamp(0.0, 1.0));
        }
        row.push(fresh);
        self.accuracy.push_row(&row)?;

        self.next_experience += 1;
        Ok(StepOutcome::Trained {
            latency_s,
            memory_peak_mb,
        })
    }

    fn prefetch_next(&mut self, experience: usize) {
        if !self.failed && self.spec.prefetch.enabled {
            self.prefetched = Some(experience);
        }
    }

    fn accuracy(&self) -> &AccuracyMatrix {
        &self.accuracy
    }

    fn optimizer_memory(&self, experience: usize) -> Option<OptimizerMemory> {
        Some(self.probe_optimizer_memory(experience))
    }
}
