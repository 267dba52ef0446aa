#![allow(dead_code)]

use memtune_core::controller::{ControllerConfig, Knobs, OptimizerMode};
use memtune_core::metrics::Thresholds;
use memtune_core::scenario::{BaselinePresets, Scenario};
use memtune_core::simulator::{
    AlgorithmProfile, EnvironmentSpec, Platform, PrefetchModel, ResponseModel,
};
use memtune_core::urge::Preference;

pub fn env_spec(capacity_mb: f64) -> EnvironmentSpec {
    EnvironmentSpec {
        profile: AlgorithmProfile {
            name: "er".into(),
            compute_cost_per_sample: 0.001,
            replay_sampling_cost: 0.0002,
            optimizer_latency_multiplier_advanced: 2.94,
            optimizer_memory_delta: 107.0,
            optimizer_memory_growth: 5.0,
            base_memory: 4100.0,
            per_experience_growth: 1.04,
        },
        response: ResponseModel {
            iteration_floor_s: 0.12,
            activation_mb: 8.0,
            frame_mb: 0.05,
            spike_threshold: 50_000.0,
            spike_mb_per_frame: 0.01,
            stability_max: 0.98,
            stability_scale: 300.0,
            plasticity_max: 0.85,
            plasticity_steps_scale: 40.0,
            advanced_plasticity_bonus: 0.05,
            forgetting_rate: 0.3,
            advanced_forgetting_scale: 0.6,
            noise: 0.0,
        },
        platform: Platform {
            name: "test".into(),
            capacity_mb,
            compute_scale: 1.0,
        },
        prefetch: PrefetchModel {
            load_time_per_sample_s: 0.002,
            overlap_efficiency: 0.9,
            enabled: true,
        },
        samples_per_experience: 5000,
    }
}

pub fn scenario(capacity_mb: f64) -> Scenario {
    let initial = Knobs::new(128, 500, OptimizerMode::Default);
    Scenario {
        name: "test".into(),
        num_experiences: 9,
        seed: 7,
        controller: ControllerConfig {
            t0: 0.075,
            delta: 0.03,
            alpha: 0.1,
            beta: 1.5,
            m_batch_mb: 8.0,
            m_df_mb: 0.05,
            mo_default_mb: 4100.0,
            k_opt: 1.03,
            capacity_mb,
            safety_margin: 0.05,
            min_batch: 16,
            min_buffer: 50,
        },
        initial,
        thresholds: Thresholds {
            plasticity: 0.9,
            stability: 0.95,
            latency_s: 60.0,
            memory_max_mb: capacity_mb,
        },
        preference: Preference::Balanced,
        normalize_deviations: true,
        probe_optimizer: true,
        baselines: BaselinePresets::with_fixed(initial),
        environment: env_spec(capacity_mb),
    }
}
