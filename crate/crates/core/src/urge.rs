//! The URGE health score and preference-derived sensitivity weights.
//!
//! The score is the product of four logistic factors, one per metric. High
//! plasticity, high stability and high memory use each pull the score down;
//! high latency pushes it up. A high score means the run is underperforming
//! while memory is still available, which the controller answers by growing
//! budgets.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::metrics::MetricSnapshot;
use crate::{Error, Result};

/// Floor applied to the threshold magnitude when normalizing deviations.
pub const DEVIATION_EPS: f64 = 1e-9;

/// Each factor is kept inside `[COMPONENT_FLOOR, COMPONENT_CEIL]` so the
/// product of four factors stays strictly inside (0, 1) in f64.
const COMPONENT_FLOOR: f64 = 1e-75;
const COMPONENT_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Metric {
    Memory,
    Plasticity,
    Stability,
    Latency,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Memory,
        Metric::Plasticity,
        Metric::Stability,
        Metric::Latency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Memory => "memory",
            Metric::Plasticity => "plasticity",
            Metric::Stability => "stability",
            Metric::Latency => "latency",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "memory" | "m" => Ok(Metric::Memory),
            "plasticity" | "p" => Ok(Metric::Plasticity),
            "stability" | "s" => Ok(Metric::Stability),
            "latency" | "training latency" | "training_latency" | "l" => Ok(Metric::Latency),
            other => Err(Error::InvalidPreference(format!(
                "unknown metric `{other}`"
            ))),
        }
    }
}

/// Normalized sensitivities `k_p, k_s, k_l, k_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Weights {
    pub plasticity: f64,
    pub stability: f64,
    pub latency: f64,
    pub memory: f64,
}

impl Weights {
    /// Equal importance for all four metrics.
    pub fn uniform() -> Self {
        Weights {
            plasticity: 0.25,
            stability: 0.25,
            latency: 0.25,
            memory: 0.25,
        }
    }

    /// Raw weights, not normalized. Used for the all-zero and scaling cases.
    pub fn raw(plasticity: f64, stability: f64, latency: f64, memory: f64) -> Result<Self> {
        let w = Weights {
            plasticity,
            stability,
            latency,
            memory,
        };
        if w.as_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NumericDomain("weights"));
        }
        Ok(w)
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Memory => self.memory,
            Metric::Plasticity => self.plasticity,
            Metric::Stability => self.stability,
            Metric::Latency => self.latency,
        }
    }

    fn set(&mut self, metric: Metric, value: f64) {
        match metric {
            Metric::Memory => self.memory = value,
            Metric::Plasticity => self.plasticity = value,
            Metric::Stability => self.stability = value,
            Metric::Latency => self.latency = value,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.plasticity, self.stability, self.latency, self.memory]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Assigns positional weights from an importance ordering (most important
/// first): position `p` of `n` gets `n + 1 - p`, then all are normalized to
/// sum to one. For the four metrics this is 4/3/2/1 over 10.
pub fn weights_from_preference(order: &[Metric]) -> Result<Weights> {
    let n = Metric::ALL.len();
    if order.len() != n {
        return Err(Error::InvalidPreference(format!(
            "expected {n} metrics, got {}",
            order.len()
        )));
    }
    let mut seen: Vec<Metric> = Vec::with_capacity(n);
    for m in order {
        if seen.contains(m) {
            return Err(Error::InvalidPreference(format!("duplicate metric `{m}`")));
        }
        seen.push(*m);
    }
    let total = (n * (n + 1) / 2) as f64;
    let mut w = Weights {
        plasticity: 0.0,
        stability: 0.0,
        latency: 0.0,
        memory: 0.0,
    };
    for (idx, m) in order.iter().enumerate() {
        let raw = (n - idx) as f64;
        w.set(*m, raw / total);
    }
    Ok(w)
}

/// How the user ranks the metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Preference {
    /// Most important first.
    Ordered(Vec<Metric>),
    /// Equal weight for every metric.
    Balanced,
}

impl Preference {
    /// `[latency, memory, stability, plasticity]`.
    pub fn prefer_latency() -> Self {
        Preference::Ordered(alloc::vec![
            Metric::Latency,
            Metric::Memory,
            Metric::Stability,
            Metric::Plasticity
        ])
    }

    /// `[plasticity, stability, memory, latency]`.
    pub fn prefer_plasticity_stability() -> Self {
        Preference::Ordered(alloc::vec![
            Metric::Plasticity,
            Metric::Stability,
            Metric::Memory,
            Metric::Latency
        ])
    }

    pub fn weights(&self) -> Result<Weights> {
        match self {
            Preference::Ordered(order) => weights_from_preference(order),
            Preference::Balanced => Ok(Weights::uniform()),
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> alloc::string::String {
        match self {
            Preference::Balanced => "balanced".into(),
            Preference::Ordered(o) if *o == Self::prefer_latency().order() => {
                "prefer-latency".into()
            }
            Preference::Ordered(o) if *o == Self::prefer_plasticity_stability().order() => {
                "prefer-ps".into()
            }
            Preference::Ordered(o) => o.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
        }
    }

    fn order(&self) -> Vec<Metric> {
        match self {
            Preference::Ordered(o) => o.clone(),
            Preference::Balanced => Vec::new(),
        }
    }
}

impl FromStr for Preference {
    type Err = Error;

    /// Accepts `balanced`, `prefer-latency`, `prefer-ps`, or a comma
    /// separated ordering such as `memory,plasticity,stability,latency`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "balanced" => Ok(Preference::Balanced),
            "prefer-latency" | "latency-first" => Ok(Preference::prefer_latency()),
            "prefer-ps" | "prefer-p/s" | "prefer-plasticity-stability" => {
                Ok(Preference::prefer_plasticity_stability())
            }
            list => {
                let order = list
                    .split(',')
                    .map(Metric::from_str)
                    .collect::<Result<Vec<_>>>()?;
                weights_from_preference(&order)?;
                Ok(Preference::Ordered(order))
            }
        }
    }
}

/// A health score together with its four factors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UrgeScore {
    pub value: f64,
    /// Factors in the order plasticity, stability, latency, memory.
    pub components: [f64; 4],
}

impl UrgeScore {
    /// The initial score before any experience has been evaluated.
    pub const INITIAL: UrgeScore = UrgeScore {
        value: 1.0,
        components: [1.0; 4],
    };
}

fn logistic(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    y.clamp(COMPONENT_FLOOR, COMPONENT_CEIL)
}

fn deviation(value: f64, threshold: f64, normalize: bool) -> f64 {
    let raw = value - threshold;
    if normalize {
        raw / libm::fabs(threshold).max(DEVIATION_EPS)
    } else {
        raw
    }
}

/// Computes the health score of a snapshot.
///
/// With `normalize_deviations` each difference is divided by its threshold
/// magnitude so factors with different units share one scale. Without it
/// the raw differences are used, which saturates the latency and memory
/// factors almost immediately for realistic magnitudes.
pub fn compute_urge(
    snapshot: &MetricSnapshot,
    weights: &Weights,
    normalize_deviations: bool,
) -> Result<UrgeScore> {
    let th = &snapshot.thresholds;
    let inputs = [
        snapshot.plasticity,
        snapshot.stability,
        snapshot.latency_s,
        snapshot.memory_peak_mb,
        th.plasticity,
        th.stability,
        th.latency_s,
        th.memory_max_mb,
    ];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain("snapshot"));
    }
    if weights
        .as_array()
        .iter()
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::NumericDomain("weights"));
    }
    let d_p = deviation(snapshot.plasticity, th.plasticity, normalize_deviations);
    let d_s = deviation(snapshot.stability, th.stability, normalize_deviations);
    let d_l = deviation(snapshot.latency_s, th.latency_s, normalize_deviations);
    let d_m = deviation(
        snapshot.memory_peak_mb,
        th.memory_max_mb,
        normalize_deviations,
    );

    let components = [
        logistic(-weights.plasticity * d_p),
        logistic(-weights.stability * d_s),
        logistic(weights.latency * d_l),
        logistic(-weights.memory * d_m),
    ];
    let value = components.iter().product();
    Ok(UrgeScore { value, components })
}
