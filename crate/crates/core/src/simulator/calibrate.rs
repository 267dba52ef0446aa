//! Least-squares fit of the response model to measured trade-off curves.
//!
//! Each family is fitted separately:
//!
//! - latency vs batch: `L(B) = A * max(1/B, 1/knee)`, knee chosen on a
//!   geometric grid, `A` by relative least squares;
//! - memory vs batch: ordinary least-squares line;
//! - stability vs buffer: `s_max * (1 - exp(-R / R0))`, `R0` on a grid;
//! - plugin rows: latency multiplier by regression through the origin,
//!   memory delta as the mean difference.
//!
//! A family whose relative RMS residual exceeds [`MAX_RELATIVE_RESIDUAL`]
//! fails the calibration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{AlgorithmProfile, ResponseModel};
use crate::{Error, Result};

pub const MAX_RELATIVE_RESIDUAL: f64 = 0.20;

/// One plugin-cost observation: the same workload with plugins off and on.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PluginTarget {
    pub latency_default_s: f64,
    pub latency_advanced_s: f64,
    pub memory_default_mb: f64,
    pub memory_advanced_mb: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CalibrationTargets {
    pub name: String,
    /// Samples processed in the run the latency curve was measured on.
    pub latency_samples: f64,
    /// `(batch, seconds)`.
    pub latency_vs_batch: Vec<(f64, f64)>,
    /// `(batch, MB)`.
    pub memory_vs_batch: Vec<(f64, f64)>,
    /// `(buffer, stability response)`.
    pub stability_vs_buffer: Vec<(f64, f64)>,
    pub plugins: Vec<PluginTarget>,
    /// Memory per replay frame, MB; not identifiable from the curves above.
    #[cfg_attr(feature = "serde", serde(default = "default_frame_mb"))]
    pub frame_mb: f64,
}

#[cfg(feature = "serde")]
fn default_frame_mb() -> f64 {
    0.05
}

/// Relative RMS residual per fitted family.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Residuals {
    pub latency: f64,
    pub memory: f64,
    pub stability: f64,
    pub plugin_latency: f64,
    pub plugin_memory: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [
            self.latency,
            self.memory,
            self.stability,
            self.plugin_latency,
            self.plugin_memory,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationResult {
    pub profile: AlgorithmProfile,
    pub response: ResponseModel,
    /// Latency scale `A` of `A * max(1/B, 1/knee)`.
    pub latency_scale: f64,
    /// Compute-bound knee; `f64::INFINITY` if the curve never flattens.
    pub knee: f64,
    pub residuals: Residuals,
}

impl CalibrationResult {
    /// Fitted total latency at batch size `b` for the reference run.
    pub fn latency_at(&self, batch: f64) -> f64 {
        self.latency_scale * (1.0 / batch).max(1.0 / self.knee)
    }

    pub fn memory_at(&self, batch: f64) -> f64 {
        self.profile.base_memory + self.response.activation_mb * batch
    }

    pub fn stability_at(&self, buffer: f64) -> f64 {
        self.response.stability_response(buffer)
    }

    pub fn plugin_latency(&self, default_s: f64) -> f64 {
        default_s * self.profile.optimizer_latency_multiplier_advanced
    }

    pub fn plugin_memory(&self, default_mb: f64) -> f64 {
        default_mb + self.profile.optimizer_memory_delta
    }
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let ratio = libm::pow(hi / lo, 1.0 / (n - 1) as f64);
    (0..n).map(move |i| lo * libm::pow(ratio, i as f64))
}

fn rel_rms(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (fit, target) in pairs {
        let denom = libm::fabs(target).max(1e-12);
        let r = (fit - target) / denom;
        sum += r * r;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        libm::sqrt(sum / n as f64)
    }
}

fn sorted(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn check_points(name: &str, points: &[(f64, f64)], positive_x: bool) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Calibration(format!(
            "{name}: need at least 3 points, got {}",
            points.len()
        )));
    }
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() || (positive_x && x <= 0.0) || x < 0.0 {
            return Err(Error::Calibration(format!(
                "{name}: invalid point ({x}, {y})"
            )));
        }
    }
    Ok(())
}

/// Returns `(A, knee, residual)`.
fn fit_latency(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    check_points("latency", points, true)?;
    let pts = sorted(points);
    let decreasing = pts.windows(2).all(|w| w[1].1 <= w[0].1);
    if !decreasing || pts[pts.len() - 1].1 >= pts[0].1 {
        return Err(Error::Calibration(
            "latency must decrease with batch size".into(),
        ));
    }
    if pts.iter().any(|p| p.1 <= 0.0) {
        return Err(Error::Calibration("latency targets must be > 0".into()));
    }
    let b_min = pts[0].0;
    let b_max = pts[pts.len() - 1].0;
    let mut best: Option<(f64, f64, f64)> = None;
    let knees = geometric_grid(b_min, 8.0 * b_max, 400).chain(core::iter::once(f64::INFINITY));
    for knee in knees {
        // minimize sum ((A x - L) / L)^2  =>  A = sum(x/L) / sum(x^2/L^2)
        let (mut num, mut den) = (0.0, 0.0);
        for &(b, l) in &pts {
            let x = (1.0 / b).max(1.0 / knee);
            num += x / l;
            den += x * x / (l * l);
        }
        let a = num / den;
        let res = rel_rms(pts.iter().map(|&(b, l)| (a * (1.0 / b).max(1.0 / knee), l)));
        if best.is_none_or(|(_, _, r)| res < r) {
            best = Some((a, knee, res));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Returns `(intercept, slope, residual)`.
fn fit_memory(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    check_points("memory", points, false)?;
    let pts = sorted(points);
    let increasing = pts.windows(2).all(|w| w[1].1 >= w[0].1);
    if !increasing || pts[pts.len() - 1].1 <= pts[0].1 {
        return Err(Error::Calibration(
            "memory must increase with batch size".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if !(slope > 0.0) || intercept < 0.0 {
        return Err(Error::Calibration(format!(
            "memory fit is not physical (base {intercept}, slope {slope})"
        )));
    }
    let res = rel_rms(pts.iter().map(|&(b, m)| (intercept + slope * b, m)));
    Ok((intercept, slope, res))
}

/// Returns `(s_max, R0, residual)`.
fn fit_stability(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    check_points("stability", points, false)?;
    let pts = sorted(points);
    if !pts.windows(2).all(|w| w[1].1 >= w[0].1) {
        return Err(Error::Calibration(
            "stability must not decrease with buffer size".into(),
        ));
    }
    if pts.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
        return Err(Error::Calibration(
            "stability targets must lie in [0, 1]".into(),
        ));
    }
    let r_lo = pts
        .iter()
        .map(|p| p.0)
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let r_hi = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    if !r_lo.is_finite() {
        return Err(Error::Calibration(
            "stability needs a non-empty buffer point".into(),
        ));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for r0 in geometric_grid(r_lo / 10.0, r_hi * 10.0, 600) {
        let (mut num, mut den) = (0.0, 0.0);
        for &(r, s) in &pts {
            let g = 1.0 - libm::exp(-r / r0);
            num += g * s;
            den += g * g;
        }
        if den == 0.0 {
            continue;
        }
        let s_max = (num / den).clamp(0.0, 1.0);
        let res = rel_rms(
            pts.iter()
                .filter(|p| p.1 > 0.0)
                .map(|&(r, s)| (s_max * (1.0 - libm::exp(-r / r0)), s)),
        );
        if best.is_none_or(|(_, _, b)| res < b) {
            best = Some((s_max, r0, res));
        }
    }
    best.ok_or_else(|| Error::Calibration("stability fit failed".into()))
}

/// Returns `(multiplier, delta_mb, latency residual, memory residual)`.
fn fit_plugins(rows: &[PluginTarget]) -> Result<(f64, f64, f64, f64)> {
    if rows.is_empty() {
        return Err(Error::Calibration("need at least one plugin row".into()));
    }
    for r in rows {
        if !(r.latency_default_s > 0.0)
            || !(r.latency_advanced_s >= r.latency_default_s)
            || !(r.memory_default_mb > 0.0)
            || !(r.memory_advanced_mb >= r.memory_default_mb)
        {
            return Err(Error::Calibration(format!(
                "plugin row must not be cheaper with plugins enabled: {r:?}"
            )));
        }
    }
    let num: f64 = rows
        .iter()
        .map(|r| r.latency_default_s * r.latency_advanced_s)
        .sum();
    let den: f64 = rows
        .iter()
        .map(|r| r.latency_default_s * r.latency_default_s)
        .sum();
    let mult = (num / den).max(1.0);
    let delta = rows
        .iter()
        .map(|r| r.memory_advanced_mb - r.memory_default_mb)
        .sum::<f64>()
        / rows.len() as f64;
    let lat_res = rel_rms(
        rows.iter()
            .map(|r| (r.latency_default_s * mult, r.latency_advanced_s)),
    );
    let mem_res = rel_rms(
        rows.iter()
            .map(|r| (r.memory_default_mb + delta, r.memory_advanced_mb)),
    );
    Ok((mult, delta, lat_res, mem_res))
}

/// Fits a profile and response model to the targets.
///
/// Parameters the targets cannot identify (accuracy dynamics, spike,
/// growth) are taken from `template`.
pub fn calibrate_profile(
    targets: &CalibrationTargets,
    template: &(AlgorithmProfile, ResponseModel),
) -> Result<CalibrationResult> {
    if !(targets.latency_samples > 0.0) {
        return Err(Error::Calibration("latency_samples must be > 0".into()));
    }
    let (a, knee, lat_res) = fit_latency(&targets.latency_vs_batch)?;
    let (base, slope, mem_res) = fit_memory(&targets.memory_vs_batch)?;
    let (s_max, r0, stab_res) = fit_stability(&targets.stability_vs_buffer)?;
    let (mult, delta, pl_res, pm_res) = fit_plugins(&targets.plugins)?;

    let residuals = Residuals {
        latency: lat_res,
        memory: mem_res,
        stability: stab_res,
        plugin_latency: pl_res,
        plugin_memory: pm_res,
    };
    if residuals.max() > MAX_RELATIVE_RESIDUAL {
        return Err(Error::Calibration(format!(
            "relative residual {:.3} exceeds {MAX_RELATIVE_RESIDUAL}: {residuals:?}",
            residuals.max()
        )));
    }

    let floor = a / targets.latency_samples;
    let mut profile = template.0.clone();
    profile.name = targets.name.clone();
    profile.base_memory = base;
    profile.compute_cost_per_sample = if knee.is_finite() { floor / knee } else { 0.0 };
    profile.optimizer_latency_multiplier_advanced = mult;
    profile.optimizer_memory_delta = delta;
    let mut response = template.1.clone();
    response.iteration_floor_s = floor;
    response.activation_mb = slope;
    response.frame_mb = targets.frame_mb;
    response.stability_max = s_max;
    response.stability_scale = r0;
    profile.validate()?;
    response.validate()?;

    Ok(CalibrationResult {
        profile,
        response,
        latency_scale: a,
        knee,
        residuals,
    })
}
