//! Scenario and model files.
//!
//! A scenario file names a platform preset and an algorithm profile; both
//! are looked up in a models file (`models.toml` by default, resolved
//! relative to the scenario's directory). Every table rejects unknown keys
//! and errors carry the dotted key path.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use memtune_core::controller::{ControllerConfig, Knobs, OptimizerMode};
use memtune_core::metrics::Thresholds;
use memtune_core::scenario::{BaselinePresets, Scenario};
use memtune_core::simulator::{
    AlgorithmProfile, EnvironmentSpec, Platform, PrefetchModel, ResponseModel, SimulatedEnvironment,
};
use memtune_core::urge::Preference;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// Scenario files shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    (
        "xavier-er",
        include_str!("../data/scenarios/xavier-er.toml"),
    ),
    (
        "xavier-gss",
        include_str!("../data/scenarios/xavier-gss.toml"),
    ),
    (
        "xavier-gem",
        include_str!("../data/scenarios/xavier-gem.toml"),
    ),
    (
        "xavier-agem",
        include_str!("../data/scenarios/xavier-agem.toml"),
    ),
    ("orin-er", include_str!("../data/scenarios/orin-er.toml")),
    ("orin-gss", include_str!("../data/scenarios/orin-gss.toml")),
    ("orin-gem", include_str!("../data/scenarios/orin-gem.toml")),
    (
        "orin-agem",
        include_str!("../data/scenarios/orin-agem.toml"),
    ),
    (
        "server-er",
        include_str!("../data/scenarios/server-er.toml"),
    ),
    (
        "server-gss",
        include_str!("../data/scenarios/server-gss.toml"),
    ),
    (
        "server-gem",
        include_str!("../data/scenarios/server-gem.toml"),
    ),
    (
        "server-agem",
        include_str!("../data/scenarios/server-agem.toml"),
    ),
];

pub const BUNDLED_MODELS: &str = include_str!("../data/models.toml");
pub const BUNDLED_CALIBRATION: &str = include_str!("../data/calibration.toml");

/// Parses TOML into `T`, reporting the failing key path.
pub fn parse_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, HarnessError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().trim().to_string();
        HarnessError::Config(if path == "." || path.is_empty() {
            format!("{origin}: {msg}")
        } else {
            format!("{origin}: at `{path}`: {msg}")
        })
    })
}

fn check_schema(version: u32, origin: &str) -> Result<(), HarnessError> {
    if version != SCHEMA_VERSION {
        return Err(HarnessError::Config(format!(
            "{origin}: unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Hardware preset: capacity, compute speed and data-loading speed.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformPreset {
    pub capacity_mb: f64,
    pub compute_scale: f64,
    pub load_time_per_sample_s: f64,
    pub overlap_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub algorithm: AlgorithmProfile,
    pub response: ResponseModel,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsFile {
    pub schema_version: u32,
    pub platforms: BTreeMap<String, PlatformPreset>,
    pub profiles: BTreeMap<String, ProfileEntry>,
}

impl ModelsFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let m: ModelsFile = parse_toml(text, origin)?;
        check_schema(m.schema_version, origin)?;
        for (key, p) in &m.profiles {
            if p.algorithm.name != *key {
                return Err(HarnessError::Config(format!(
                    "{origin}: profile `{key}` has algorithm.name `{}`",
                    p.algorithm.name
                )));
            }
            p.algorithm.validate()?;
            p.response.validate()?;
        }
        Ok(m)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_MODELS, "bundled models.toml").expect("bundled models file is valid")
    }

    pub fn platform(&self, name: &str) -> Result<&PlatformPreset, HarnessError> {
        self.platforms.get(name).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown platform `{name}` (known: {})",
                self.platforms
                    .keys()
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
    }

    pub fn profile(&self, name: &str) -> Result<&ProfileEntry, HarnessError> {
        self.profiles.get(name).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown profile `{name}` (known: {})",
                self.profiles.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub t0: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_margin")]
    pub safety_margin: f64,
    #[serde(default = "one")]
    pub min_batch: usize,
    #[serde(default = "one")]
    pub min_buffer: usize,
    /// Defaults to the profile's activation memory per sample.
    pub m_batch_mb: Option<f64>,
    /// Defaults to the profile's memory per replay frame.
    pub m_df_mb: Option<f64>,
    /// Required when `probe_optimizer` is off.
    pub mo_default_mb: Option<f64>,
    pub k_opt: Option<f64>,
}

fn default_margin() -> f64 {
    0.05
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnobsSection {
    pub batch: usize,
    pub buffer: usize,
    #[serde(default)]
    pub optimizer: OptimizerMode,
}

impl From<KnobsSection> for Knobs {
    fn from(k: KnobsSection) -> Self {
        Knobs::new(k.batch, k.buffer, k.optimizer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsSection {
    pub plasticity: f64,
    pub stability: f64,
    pub latency_s: f64,
    /// Defaults to the platform capacity.
    pub memory_max_mb: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PrefetchSection {
    pub enabled: Option<bool>,
    pub load_time_per_sample_s: Option<f64>,
    pub overlap_efficiency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BaselinesSection {
    pub max_a: Option<KnobsSection>,
    pub max_p: Option<KnobsSection>,
    /// Defaults to the controller's initial knobs.
    pub fixed: Option<KnobsSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub num_experiences: usize,
    #[serde(default)]
    pub seed: u64,
    pub platform: String,
    pub profile: String,
    /// Models file, relative to the scenario file.
    pub models: Option<String>,
    pub samples_per_experience: usize,
    #[serde(default = "default_preference")]
    pub preference: String,
    #[serde(default = "yes")]
    pub normalize_deviations: bool,
    #[serde(default = "yes")]
    pub probe_optimizer: bool,
    pub controller: ControllerSection,
    pub initial: KnobsSection,
    pub thresholds: ThresholdsSection,
    #[serde(default)]
    pub prefetch: PrefetchSection,
    #[serde(default)]
    pub baselines: BaselinesSection,
}

fn default_preference() -> String {
    "balanced".into()
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let f: ScenarioFile = parse_toml(text, origin)?;
        check_schema(f.schema_version, origin)?;
        Ok(f)
    }

    /// Resolves profile and platform references into a runnable scenario.
    pub fn resolve(&self, models: &ModelsFile) -> Result<Scenario, HarnessError> {
        if self.num_experiences == 0 {
            return Err(HarnessError::Config(format!(
                "scenario {}: num_experiences must be >= 1",
                self.name
            )));
        }
        let platform = models.platform(&self.platform)?;
        let profile = models.profile(&self.profile)?;
        let environment = EnvironmentSpec {
            profile: profile.algorithm.clone(),
            response: profile.response.clone(),
            platform: Platform {
                name: self.platform.clone(),
                capacity_mb: platform.capacity_mb,
                compute_scale: platform.compute_scale,
            },
            prefetch: PrefetchModel {
                load_time_per_sample_s: self
                    .prefetch
                    .load_time_per_sample_s
                    .unwrap_or(platform.load_time_per_sample_s),
                overlap_efficiency: self
                    .prefetch
                    .overlap_efficiency
                    .unwrap_or(platform.overlap_efficiency),
                enabled: self.prefetch.enabled.unwrap_or(true),
            },
            samples_per_experience: self.samples_per_experience,
        };
        environment.validate()?;

        let c = &self.controller;
        let (mo_default_mb, k_opt) = if self.probe_optimizer {
            let env = SimulatedEnvironment::new(environment.clone(), self.seed)?;
            let probe = env.probe_optimizer_memory(1);
            (probe.default_mb, probe.ratio().max(1.0))
        } else {
            match (c.mo_default_mb, c.k_opt) {
                (Some(mo), Some(k)) => (mo, k),
                _ => {
                    return Err(HarnessError::Config(format!(
                        "scenario {}: controller.mo_default_mb and controller.k_opt are \
                         required when probe_optimizer = false",
                        self.name
                    )))
                }
            }
        };
        let controller = ControllerConfig {
            t0: c.t0,
            delta: c.delta,
            alpha: c.alpha,
            beta: c.beta,
            m_batch_mb: c.m_batch_mb.unwrap_or(profile.response.activation_mb),
            m_df_mb: c.m_df_mb.unwrap_or(profile.response.frame_mb),
            mo_default_mb,
            k_opt,
            capacity_mb: platform.capacity_mb,
            safety_margin: c.safety_margin,
            min_batch: c.min_batch,
            min_buffer: c.min_buffer,
        };
        let initial: Knobs = self.initial.into();
        let b = &self.baselines;
        let baselines = BaselinePresets {
            max_a: b.max_a.map(Into::into).unwrap_or(BaselinePresets::MAX_A),
            max_p: b.max_p.map(Into::into).unwrap_or(BaselinePresets::MAX_P),
            fixed: b.fixed.map(Into::into).unwrap_or(initial),
        };
        let t = &self.thresholds;
        let scenario = Scenario {
            name: self.name.clone(),
            num_experiences: self.num_experiences,
            seed: self.seed,
            controller,
            initial,
            thresholds: Thresholds {
                plasticity: t.plasticity,
                stability: t.stability,
                latency_s: t.latency_s,
                memory_max_mb: t.memory_max_mb.unwrap_or(platform.capacity_mb),
            },
            preference: self.preference.parse()?,
            normalize_deviations: self.normalize_deviations,
            probe_optimizer: self.probe_optimizer,
            baselines,
            environment,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Loads a scenario file and the models file it references.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let origin = path.display().to_string();
    let file = ScenarioFile::parse(&read(path)?, &origin)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let models_path: PathBuf = match &file.models {
        Some(m) => dir.join(m),
        None => dir.join("models.toml"),
    };
    let models = ModelsFile::parse(&read(&models_path)?, &models_path.display().to_string())?;
    file.resolve(&models)
}

/// A bundled scenario by name, resolved against the bundled models.
pub fn bundled_scenario(name: &str) -> Result<Scenario, HarnessError> {
    let text = BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| HarnessError::Config(format!("no bundled scenario `{name}`")))?;
    ScenarioFile::parse(text, name)?.resolve(&ModelsFile::bundled())
}

pub fn bundled_scenarios() -> Result<Vec<Scenario>, HarnessError> {
    BUNDLED_SCENARIOS
        .iter()
        .map(|(n, _)| bundled_scenario(n))
        .collect()
}

/// `--scenario` accepts a path or the name of a bundled scenario.
pub fn scenario_from_arg(arg: &str) -> Result<Scenario, HarnessError> {
    let path = Path::new(arg);
    if path.exists() {
        load_scenario(path)
    } else if BUNDLED_SCENARIOS.iter().any(|(n, _)| *n == arg) {
        bundled_scenario(arg)
    } else {
        Err(HarnessError::Config(format!(
            "`{arg}` is neither a file nor a bundled scenario"
        )))
    }
}

/// The three preference orderings compared by the suite.
pub fn preference_set() -> [Preference; 3] {
    [
        Preference::prefer_latency(),
        Preference::Balanced,
        Preference::prefer_plasticity_stability(),
    ]
}
