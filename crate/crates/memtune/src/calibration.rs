//! Calibration target files.

use std::path::Path;

use memtune_core::simulator::{calibrate_profile, CalibrationResult, CalibrationTargets};
use serde::{Deserialize, Serialize};

use crate::config::{parse_toml, ModelsFile, BUNDLED_CALIBRATION, SCHEMA_VERSION};
use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub schema_version: u32,
    /// Profile in the models file supplying the parameters the targets
    /// cannot identify.
    pub template: String,
    pub targets: CalibrationTargets,
}

impl CalibrationFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let f: CalibrationFile = parse_toml(text, origin)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "{origin}: unsupported schema_version {}",
                f.schema_version
            )));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CALIBRATION, "bundled calibration.toml")
            .expect("bundled calibration file is valid")
    }

    pub fn calibrate(&self, models: &ModelsFile) -> Result<CalibrationResult, HarnessError> {
        let template = models.profile(&self.template)?;
        Ok(calibrate_profile(
            &self.targets,
            &(template.algorithm.clone(), template.response.clone()),
        )?)
    }
}

#[derive(Serialize)]
struct FittedEntry<'a> {
    algorithm: &'a memtune_core::simulator::AlgorithmProfile,
    response: &'a memtune_core::simulator::ResponseModel,
}

/// The fitted profile as a models-file fragment, plus fit diagnostics as
/// comments.
pub fn render_fit(result: &CalibrationResult) -> String {
    let mut out = String::new();
    let r = &result.residuals;
    out.push_str(&format!(
        "# relative RMS residuals: latency {:.4}, memory {:.4}, stability {:.4}, \
         plugin latency {:.4}, plugin memory {:.4}\n",
        r.latency, r.memory, r.stability, r.plugin_latency, r.plugin_memory
    ));
    out.push_str(&format!(
        "# latency scale {:.2} s, knee at batch {:.1}\n",
        result.latency_scale, result.knee
    ));
    let entry = FittedEntry {
        algorithm: &result.profile,
        response: &result.response,
    };
    let body = toml::to_string(&entry).expect("fitted profile serializes");
    let name = &result.profile.name;
    for line in body.lines() {
        if let Some(table) = line.strip_prefix('[') {
            out.push_str(&format!("[profiles.{name}.{table}\n"));
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}
