use serde::{Deserialize, Serialize};

use crate::change::DEFAULT_TAU_RATIO;
use crate::coarse::DEFAULT_CORRESPONDENCE_CAP;
use crate::error::{Error, Result};
use crate::fine::{DEFAULT_ALPHA, DEFAULT_GRID_RESOLUTION};
use crate::keyframes::DEFAULT_BUDGET;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Stage 1 only.
    CoarseOnly,
    /// Stage 1 followed by translation refinement.
    Full,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse_only" | "coarse" => Ok(Mode::CoarseOnly),
            "full" => Ok(Mode::Full),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected coarse_only or full)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::CoarseOnly => "coarse_only",
            Mode::Full => "full",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k_keyframes: usize,
    pub correspondence_cap: usize,
    pub alpha: f64,
    pub grid_resolution: u32,
    pub tau_ratio: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_keyframes: DEFAULT_BUDGET,
            correspondence_cap: DEFAULT_CORRESPONDENCE_CAP,
            alpha: DEFAULT_ALPHA,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            tau_ratio: DEFAULT_TAU_RATIO,
            seed: 0,
            mode: Mode::Full,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be positive")));
        if self.k_keyframes == 0 {
            return bad("k_keyframes");
        }
        if self.correspondence_cap < 3 {
            return Err(Error::InvalidConfig("correspondence_cap must be >= 3".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha");
        }
        if self.grid_resolution == 0 {
            return bad("grid_resolution");
        }
        if !(self.tau_ratio > 0.0 && self.tau_ratio.is_finite()) {
            return bad("tau_ratio");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.k_keyframes, c.correspondence_cap, c.grid_resolution), (5, 5000, 200));
        assert_eq!((c.alpha, c.tau_ratio), (3.0, 0.01));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_non_positive_fields() {
        for c in [
            PipelineConfig { k_keyframes: 0, ..Default::default() },
            PipelineConfig { alpha: 0.0, ..Default::default() },
            PipelineConfig { grid_resolution: 0, ..Default::default() },
            PipelineConfig { tau_ratio: -0.1, ..Default::default() },
            PipelineConfig { correspondence_cap: 2, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("coarse_only".parse::<Mode>().unwrap(), Mode::CoarseOnly);
        assert_eq!("full".parse::<Mode>().unwrap(), Mode::Full);
        assert!("fine".parse::<Mode>().is_err());
        let json = serde_json::to_string(&PipelineConfig::default()).unwrap();
        assert!(json.contains("\"mode\":\"full\""));
    }
}
