//! The JSON run report written by every registration.
//!
//! Wall-clock timings live in their own `timing` section; everything else
//! is a pure function of inputs, config and seed, and
//! [`RunReport::canonical_bytes`] serializes exactly that part.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, read_json, to_json_bytes, FORMAT_VERSION};
use crate::change::ChangeStats;
use crate::coarse::{EpochAlignment, RNG_NAME};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::fine::FineResult;
use crate::geom::Sim3Transform;
use crate::pipeline::{RegistrationOutput, Timing};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub source: String,
    pub n_points: usize,
    pub n_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: String,
    pub config: PipelineConfig,
    pub rng: String,
    pub inputs: [InputSummary; 2],
    pub keyframes: [Vec<u32>; 2],
    pub alignments: [EpochAlignment; 2],
    pub coarse_transform: Sim3Transform,
    /// Absent in coarse-only runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<FineResult>,
    pub final_transform: Sim3Transform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<ChangeStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn new(config: &PipelineConfig, inputs: [InputSummary; 2], out: &RegistrationOutput) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            config: config.clone(),
            rng: RNG_NAME.into(),
            inputs,
            keyframes: [out.keyframes[0].indices.clone(), out.keyframes[1].indices.clone()],
            alignments: out.alignments.clone(),
            coarse_transform: out.coarse.clone(),
            fine: out.fine.clone(),
            final_transform: out.final_transform.clone(),
            change: None,
            metrics: None,
            timing: Some(out.timing.clone()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_json_bytes(self)
    }

    /// Serialization without the timing section.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_json_bytes(&RunReport { timing: None, ..self.clone() })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let version: serde_json::Value = read_json(path)?;
        let found = version.get("format_version").and_then(|v| v.as_str()).ok_or_else(|| {
            Error::schema(path, "format_version", "missing")
        })?;
        check_version(path, found)?;
        read_json(path)
    }
}
