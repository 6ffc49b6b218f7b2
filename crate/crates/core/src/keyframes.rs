//! Temporal farthest-point keyframe selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default keyframe budget per epoch.
pub const DEFAULT_BUDGET: usize = 5;

/// Keyframes of one epoch: sorted, unique, 1-based frame indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub epoch_id: u8,
    pub indices: Vec<u32>,
    pub budget: usize,
}

impl KeyframeSet {
    pub fn select(epoch_id: u8, n_frames: usize, budget: usize) -> Result<Self> {
        if !(epoch_id == 1 || epoch_id == 2) {
            return Err(Error::InvalidConfig(format!("epoch id {epoch_id} is not 1 or 2")));
        }
        Ok(Self {
            epoch_id,
            indices: fps_temporal(n_frames, budget)?,
            budget,
        })
    }
}

/// Greedy farthest-point sampling over frame indices `1..=n_frames`, seeded
/// at frame 1. Ties go to the lowest index. Returns sorted indices.
pub fn fps_temporal(n_frames: usize, k: usize) -> Result<Vec<u32>> {
    if n_frames == 0 || k == 0 {
        return Err(Error::InvalidConfig(format!(
            "need n_frames >= 1 and k >= 1, got n_frames={n_frames}, k={k}"
        )));
    }
    if k >= n_frames {
        return Ok((1..=n_frames as u32).collect());
    }
    // min_dist[i] = distance from frame i+1 to the selected set.
    let mut min_dist: Vec<usize> = (0..n_frames).collect();
    let mut selected = vec![1u32];
    min_dist[0] = 0;
    while selected.len() < k {
        let mut best = 0;
        for i in 1..n_frames {
            if min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        selected.push(best as u32 + 1);
        for (i, d) in min_dist.iter_mut().enumerate() {
            *d = (*d).min(i.abs_diff(best));
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Largest distance from any frame to its nearest keyframe.
pub fn max_gap(n_frames: usize, keyframes: &[u32]) -> usize {
    (1..=n_frames)
        .map(|i| {
            keyframes
                .iter()
                .map(|&k| i.abs_diff(k as usize))
                .min()
                .unwrap_or(usize::MAX)
        })
        .max()
        .unwrap_or(0)
}
