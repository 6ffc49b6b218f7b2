//! End-to-end registration: keyframes → joint reconstruction → coarse
//! Sim(3) → optional translation refinement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::change::{change_scores, classify_changes, ChangeMap};
use crate::cloud::PointCloud;
use crate::coarse::{
    build_keyframe_correspondences, coarse_relative_transform, correspondence_rng,
    estimate_epoch_alignment, EpochAlignment, JointReconstruction,
};
use crate::config::{Mode, PipelineConfig};
use crate::error::{Error, Result};
use crate::fine::{fine_stage, prepare_cloud, FineConfig, FineResult, MIN_STATIC_POINTS};
use crate::geom::{apply_transform, Sim3Transform};
use crate::keyframes::KeyframeSet;
use crate::synth::{mock_joint_from_epochs, JointPerturbation};

/// One epoch's reconstruction in its private frame. Points must carry
/// source frame labels in `1..=n_frames`.
#[derive(Clone, Copy, Debug)]
pub struct EpochInput<'a> {
    pub cloud: &'a PointCloud,
    pub n_frames: usize,
}

impl<'a> EpochInput<'a> {
    /// Frame count taken from the largest frame label.
    pub fn from_cloud(cloud: &'a PointCloud) -> Result<Self> {
        let frames = cloud.source_frames().ok_or_else(|| {
            Error::MisalignedInputs("epoch cloud has no frame labels".into())
        })?;
        let n_frames = frames.iter().copied().max().unwrap_or(0) as usize;
        Ok(Self { cloud, n_frames })
    }
}

/// Source of the joint keyframe reconstruction.
pub trait JointInference {
    fn infer(&self, keyframes: &[KeyframeSet; 2]) -> Result<JointReconstruction>;
}

/// A joint reconstruction computed ahead of time. It may cover more frames
/// than requested; only keyframe points are used.
pub struct PrecomputedJoint(pub JointReconstruction);

impl JointInference for PrecomputedJoint {
    fn infer(&self, keyframes: &[KeyframeSet; 2]) -> Result<JointReconstruction> {
        let pick = |e: usize| {
            let cloud = &self.0.epochs[e];
            if cloud.source_frames().is_none() {
                return Err(Error::MisalignedInputs(format!(
                    "joint cloud of epoch {} has no frame labels",
                    e + 1
                )));
            }
            Ok(cloud.select(&cloud.indices_in_frames(&keyframes[e].indices)))
        };
        Ok(JointReconstruction {
            epochs: [pick(0)?, pick(1)?],
            provenance: self.0.provenance,
        })
    }
}

/// Mock joint pass built from known epoch → world transforms.
pub struct OracleJoint<'a> {
    pub clouds: [&'a PointCloud; 2],
    pub epoch_transforms: [Sim3Transform; 2],
    pub perturbation: JointPerturbation,
}

impl JointInference for OracleJoint<'_> {
    fn infer(&self, keyframes: &[KeyframeSet; 2]) -> Result<JointReconstruction> {
        mock_joint_from_epochs(self.clouds, &self.epoch_transforms, keyframes, &self.perturbation)
    }
}

/// Wall-clock seconds per stage. Registration time covers correspondence
/// building, Umeyama and the fine stage, not joint inference.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub inference_s: f64,
    pub coarse_s: f64,
    pub fine_s: f64,
    pub registration_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationOutput {
    pub keyframes: [KeyframeSet; 2],
    pub alignments: [EpochAlignment; 2],
    pub coarse: Sim3Transform,
    /// Present in full mode.
    pub fine: Option<FineResult>,
    pub final_transform: Sim3Transform,
    /// How many times the fine stage ran (0 in coarse-only mode).
    pub fine_stage_calls: usize,
    pub timing: Timing,
}

/// Stage 1 only.
pub fn coarse_stage(
    epochs: [EpochInput<'_>; 2],
    joint: &JointReconstruction,
    keyframes: &[KeyframeSet; 2],
    config: &PipelineConfig,
) -> Result<[EpochAlignment; 2]> {
    joint.validate(keyframes)?;
    let align = |e: usize| {
        let cloud = epochs[e].cloud;
        let per_epoch = cloud.select(&cloud.indices_in_frames(&keyframes[e].indices));
        let epoch_id = keyframes[e].epoch_id;
        let mut rng = correspondence_rng(config.seed, epoch_id);
        let corr = build_keyframe_correspondences(
            &per_epoch,
            &joint.epochs[e],
            config.correspondence_cap,
            &mut rng,
        )?;
        estimate_epoch_alignment(epoch_id, &corr)
    };
    Ok([align(0)?, align(1)?])
}

/// Estimates the epoch-1 → epoch-2 similarity.
pub fn register(
    epochs: [EpochInput<'_>; 2],
    joint: &dyn JointInference,
    config: &PipelineConfig,
) -> Result<RegistrationOutput> {
    config.validate()?;
    for (e, input) in epochs.iter().enumerate() {
        if input.cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if input.cloud.source_frames().is_none() {
            return Err(Error::MisalignedInputs(format!(
                "epoch {} cloud has no frame labels",
                e + 1
            )));
        }
    }
    let keyframes = [
        KeyframeSet::select(1, epochs[0].n_frames, config.k_keyframes)?,
        KeyframeSet::select(2, epochs[1].n_frames, config.k_keyframes)?,
    ];

    let start = Instant::now();
    let reconstruction = joint.infer(&keyframes)?;
    let inference_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let alignments = coarse_stage(epochs, &reconstruction, &keyframes, config)?;
    let coarse = coarse_relative_transform(&alignments[0], &alignments[1])?;
    let coarse_s = start.elapsed().as_secs_f64();
    log::info!(
        "coarse: scale {:.6}, {} + {} correspondences",
        coarse.scale(),
        alignments[0].n_correspondences,
        alignments[1].n_correspondences
    );

    let start = Instant::now();
    let (fine, fine_stage_calls) = match config.mode {
        Mode::CoarseOnly => (None, 0),
        Mode::Full => {
            let source = prepare_cloud(epochs[0].cloud, config.grid_resolution)?;
            let target = prepare_cloud(epochs[1].cloud, config.grid_resolution)?;
            let fine_config = FineConfig { alpha: config.alpha, min_static: MIN_STATIC_POINTS };
            (Some(fine_stage(&source, &target, &coarse, &fine_config)?), 1)
        }
    };
    let fine_s = start.elapsed().as_secs_f64();
    let final_transform = fine.as_ref().map_or_else(|| coarse.clone(), |f| f.apply_to(&coarse));

    Ok(RegistrationOutput {
        keyframes,
        alignments,
        coarse,
        fine,
        final_transform,
        fine_stage_calls,
        timing: Timing { inference_s, coarse_s, fine_s, registration_s: coarse_s + fine_s },
    })
}

/// Change map of epoch 1 (mapped by `transform`) against epoch 2.
pub fn detect(t1: &PointCloud, t2: &PointCloud, transform: &Sim3Transform, tau_ratio: f64) -> Result<ChangeMap> {
    let scores = change_scores(&apply_transform(transform, t1), t2)?;
    classify_changes(&scores, tau_ratio)
}
