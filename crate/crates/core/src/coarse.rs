//! Stage 1: per-epoch Sim(3) estimates against a joint keyframe
//! reconstruction, composed into the epoch-1 → epoch-2 transform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{median_confidence_indices, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::geom::{compose_relative, umeyama, Sim3Transform};
use crate::keyframes::KeyframeSet;

/// Default cap on correspondences per epoch.
pub const DEFAULT_CORRESPONDENCE_CAP: usize = 5000;

/// Name recorded in reports for the subsampling generator.
pub const RNG_NAME: &str = "ChaCha8Rng/rand_chacha-0.9";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    IngestedFile,
    SyntheticOracle,
}

/// Keyframe clouds of both epochs in one shared frame. Each cloud carries
/// source frame labels and is pixel-aligned with the matching per-epoch
/// keyframe cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct JointReconstruction {
    pub epochs: [PointCloud; 2],
    pub provenance: Provenance,
}

impl JointReconstruction {
    /// Every frame label must belong to the epoch's keyframe set.
    pub fn validate(&self, keyframes: &[KeyframeSet; 2]) -> Result<()> {
        for (cloud, kf) in self.epochs.iter().zip(keyframes) {
            let frames = cloud.source_frames().ok_or_else(|| {
                Error::MisalignedInputs(format!(
                    "joint cloud of epoch {} has no frame labels",
                    kf.epoch_id
                ))
            })?;
            if let Some(f) = frames.iter().find(|f| !kf.indices.contains(f)) {
                return Err(Error::MisalignedInputs(format!(
                    "joint cloud of epoch {} has frame {f}, not a keyframe",
                    kf.epoch_id
                )));
            }
        }
        Ok(())
    }
}

/// Per-epoch frame → joint frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochAlignment {
    pub epoch_id: u8,
    pub transform: Sim3Transform,
    pub n_correspondences: usize,
    pub residual_rms: f64,
}

/// Paired points, `source[i] ↔ target[i]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Correspondences {
    pub source: Vec<Vec3>,
    pub target: Vec<Vec3>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Subsampling generator for one epoch: seeded by the run seed, one stream
/// per epoch.
pub fn correspondence_rng(seed: u64, epoch_id: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(epoch_id));
    rng
}

/// Pairs pixel-aligned keyframe points, keeps those whose per-epoch
/// confidence exceeds the median, and subsamples to at most `cap` pairs.
pub fn build_keyframe_correspondences(
    per_epoch_kf: &PointCloud,
    joint_kf: &PointCloud,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Correspondences> {
    if per_epoch_kf.len() != joint_kf.len() {
        return Err(Error::MisalignedInputs(format!(
            "per-epoch keyframe cloud has {} points, joint has {}",
            per_epoch_kf.len(),
            joint_kf.len()
        )));
    }
    if let (Some(a), Some(b)) = (per_epoch_kf.source_frames(), joint_kf.source_frames()) {
        if a != b {
            return Err(Error::MisalignedInputs(
                "frame labels differ between per-epoch and joint keyframe clouds".into(),
            ));
        }
    }
    if per_epoch_kf.is_empty() {
        return Err(Error::TooFewCorrespondences { found: 0 });
    }
    let mut keep = median_confidence_indices(per_epoch_kf)?;
    if keep.len() > cap {
        let mut picked = rand::seq::index::sample(rng, keep.len(), cap).into_vec();
        picked.sort_unstable();
        keep = picked.into_iter().map(|i| keep[i]).collect();
    }
    if keep.len() < 3 {
        return Err(Error::TooFewCorrespondences { found: keep.len() });
    }
    Ok(Correspondences {
        source: keep.iter().map(|&i| per_epoch_kf.points()[i]).collect(),
        target: keep.iter().map(|&i| joint_kf.points()[i]).collect(),
    })
}

pub fn estimate_epoch_alignment(epoch_id: u8, corr: &Correspondences) -> Result<EpochAlignment> {
    let transform = umeyama(&corr.source, &corr.target, None)?;
    let sq: f64 = corr
        .source
        .iter()
        .zip(&corr.target)
        .map(|(s, t)| (transform.apply(s) - t).norm_squared())
        .sum();
    Ok(EpochAlignment {
        epoch_id,
        transform,
        n_correspondences: corr.len(),
        residual_rms: (sq / corr.len() as f64).sqrt(),
    })
}

/// Transform mapping epoch 1 into the frame of epoch 2.
pub fn coarse_relative_transform(a1: &EpochAlignment, a2: &EpochAlignment) -> Result<Sim3Transform> {
    if a1.epoch_id != 1 || a2.epoch_id != 2 {
        return Err(Error::InvalidConfig(format!(
            "expected epochs (1, 2), got ({}, {})",
            a1.epoch_id, a2.epoch_id
        )));
    }
    Ok(compose_relative(&a1.transform, &a2.transform))
}
