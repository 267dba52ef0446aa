//! The resolved description of one simulated run.

use alloc::format;
use alloc::string::String;

use crate::controller::{ControllerConfig, Knobs, OptimizerMode};
use crate::metrics::Thresholds;
use crate::simulator::{EnvironmentSpec, SimulatedEnvironment};
use crate::urge::{Preference, Weights};
use crate::{Error, Result};

/// Knob presets for the fixed baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BaselinePresets {
    /// Framework defaults with both optimization plugins on.
    pub max_a: Knobs,
    /// Large batch, small buffer, default optimizer.
    pub max_p: Knobs,
    /// Fixed-config proxy; it has no latent-replay mechanism.
    pub fixed: Knobs,
}

impl BaselinePresets {
    pub const MAX_A: Knobs = Knobs::new(32, 1000, OptimizerMode::Advanced);
    pub const MAX_P: Knobs = Knobs::new(1024, 10, OptimizerMode::Default);

    /// Standard MAX-A / MAX-P presets; the fixed proxy uses `fixed`.
    pub fn with_fixed(fixed: Knobs) -> Self {
        Self {
            max_a: Self::MAX_A,
            max_p: Self::MAX_P,
            fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub num_experiences: usize,
    pub seed: u64,
    pub controller: ControllerConfig,
    /// Knobs for the first experience; they set `MB_0` and `MR_0`.
    pub initial: Knobs,
    pub thresholds: Thresholds,
    pub preference: Preference,
    pub normalize_deviations: bool,
    /// Measure `MO_default` and `k_opt` from the environment at start-up and
    /// again before every update.
    pub probe_optimizer: bool,
    pub baselines: BaselinePresets,
    pub environment: EnvironmentSpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.num_experiences == 0 {
            return Err(Error::InvalidConfig(format!(
                "scenario {}: num_experiences must be >= 1",
                self.name
            )));
        }
        self.controller.validate()?;
        self.thresholds.validate()?;
        self.preference.weights()?;
        self.environment.validate()?;
        for (label, k) in [
            ("initial", self.initial),
            ("max_a", self.baselines.max_a),
            ("max_p", self.baselines.max_p),
            ("fixed", self.baselines.fixed),
        ] {
            if k.batch == 0 {
                return Err(Error::InvalidConfig(format!("{label}: batch must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<Weights> {
        self.preference.weights()
    }

    /// A fresh environment seeded with the scenario seed.
    pub fn environment(&self) -> Result<SimulatedEnvironment> {
        SimulatedEnvironment::new(self.environment.clone(), self.seed)
    }

    pub fn with_preference(&self, preference: Preference) -> Self {
        Self {
            preference,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}
