//! Stage 3: bidirectional nearest-neighbor change scoring.

use serde::{Deserialize, Serialize};

use crate::cloud::{robust_extent, PointCloud};
use crate::error::{Error, Result};
use crate::index::{nn_distances, SpatialIndex};

/// Default threshold as a fraction of the scene extent.
pub const DEFAULT_TAU_RATIO: f64 = 0.01;

/// Change scores for both directions and, once classified, labels.
///
/// Forward scores belong to the aligned epoch-1 points, backward scores to
/// the epoch-2 points. `labels[i] ⇔ scores[i] > tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeMap {
    pub forward_scores: Vec<f64>,
    pub backward_scores: Vec<f64>,
    pub forward_labels: Vec<bool>,
    pub backward_labels: Vec<bool>,
    pub tau: Option<f64>,
    pub tau_ratio: Option<f64>,
    /// Robust extent of the union of both clouds in the epoch-2 frame.
    pub scene_extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeStats {
    pub forward_points: usize,
    pub backward_points: usize,
    pub forward_changed: usize,
    pub backward_changed: usize,
    pub changed_fraction: f64,
    pub tau: f64,
    pub tau_ratio: f64,
    pub scene_extent: f64,
}

pub fn change_scores(aligned_t1: &PointCloud, t2: &PointCloud) -> Result<ChangeMap> {
    if aligned_t1.is_empty() || t2.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let forward = nn_distances(aligned_t1, &SpatialIndex::build(t2)?)?;
    let backward = nn_distances(t2, &SpatialIndex::build(aligned_t1)?)?;
    let union: Vec<_> = aligned_t1.points().iter().chain(t2.points()).copied().collect();
    Ok(ChangeMap {
        forward_scores: forward.iter().map(|n| n.distance).collect(),
        backward_scores: backward.iter().map(|n| n.distance).collect(),
        forward_labels: Vec::new(),
        backward_labels: Vec::new(),
        tau: None,
        tau_ratio: None,
        scene_extent: robust_extent(&union),
    })
}

/// Labels every point whose score exceeds `tau_ratio × scene_extent`.
pub fn classify_changes(map: &ChangeMap, tau_ratio: f64) -> Result<ChangeMap> {
    if !(tau_ratio >= 0.0 && tau_ratio.is_finite()) {
        return Err(Error::InvalidConfig(format!("tau ratio {tau_ratio} must be >= 0")));
    }
    let tau = tau_ratio * map.scene_extent;
    Ok(ChangeMap {
        forward_labels: map.forward_scores.iter().map(|s| *s > tau).collect(),
        backward_labels: map.backward_scores.iter().map(|s| *s > tau).collect(),
        tau: Some(tau),
        tau_ratio: Some(tau_ratio),
        ..map.clone()
    })
}

impl ChangeMap {
    /// Summary of a classified map; `None` before classification.
    pub fn stats(&self) -> Option<ChangeStats> {
        let tau = self.tau?;
        let fc = self.forward_labels.iter().filter(|l| **l).count();
        let bc = self.backward_labels.iter().filter(|l| **l).count();
        let total = self.forward_scores.len() + self.backward_scores.len();
        Some(ChangeStats {
            forward_points: self.forward_scores.len(),
            backward_points: self.backward_scores.len(),
            forward_changed: fc,
            backward_changed: bc,
            changed_fraction: (fc + bc) as f64 / total.max(1) as f64,
            tau,
            tau_ratio: self.tau_ratio.unwrap_or(f64::NAN),
            scene_extent: self.scene_extent,
        })
    }
}

const fn build_ramp() -> [[u8; 3]; 256] {
    // Three 85-step segments: blue → green → yellow → red.
    let mut lut = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        let v = i as u32;
        lut[i] = if v <= 85 {
            [0, (3 * v) as u8, (255 - 3 * v) as u8]
        } else if v <= 170 {
            [(3 * (v - 85)) as u8, 255, 0]
        } else {
            [255, (255 - 3 * (v - 170)) as u8, 0]
        };
        i += 1;
    }
    lut
}

/// Change color ramp. Entry `i` covers `score / tau ∈ [i/64, (i+1)/64)`;
/// 0 is blue, 85 green, 170 yellow, 255 red.
pub const CHANGE_RAMP: [[u8; 3]; 256] = build_ramp();

/// Ramp color for one score: `CHANGE_RAMP[min(255, ⌊64 · score / tau⌋)]`.
pub fn ramp_color(score: f64, tau: f64) -> [u8; 3] {
    let idx = if tau > 0.0 {
        let x = (score / tau * 64.0).floor();
        if x.is_nan() {
            0
        } else {
            x.clamp(0.0, 255.0) as usize
        }
    } else if score > 0.0 {
        255
    } else {
        0
    };
    CHANGE_RAMP[idx]
}

/// Copies of both clouds colored by their change scores.
pub fn colorize(
    map: &ChangeMap,
    aligned_t1: &PointCloud,
    t2: &PointCloud,
) -> Result<(PointCloud, PointCloud)> {
    let tau = map
        .tau
        .ok_or_else(|| Error::InvalidConfig("change map is not classified".into()))?;
    let paint = |cloud: &PointCloud, scores: &[f64]| {
        if cloud.len() != scores.len() {
            return Err(Error::MisalignedInputs(format!(
                "{} points but {} scores",
                cloud.len(),
                scores.len()
            )));
        }
        cloud
            .clone()
            .with_colors(scores.iter().map(|s| ramp_color(*s, tau)).collect())
    };
    Ok((
        paint(aligned_t1, &map.forward_scores)?,
        paint(t2, &map.backward_scores)?,
    ))
}
