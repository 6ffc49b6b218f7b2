//! Trajectory metrics, transform error against ground truth, and the
//! keyframe/mode ablation harness.
//!
//! ATE and RTE share one convention: the combined predicted camera centers
//! of both epochs are Sim(3)-aligned to the combined ground truth with a
//! single Umeyama fit, so only the inter-epoch error remains visible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cloud::Vec3;
use crate::config::{Mode, PipelineConfig};
use crate::error::{Error, Result};
use crate::fine::{median_residual, prepare_cloud};
use crate::geom::{rotation_angle_deg, umeyama, SE3Pose, Sim3Transform};
use crate::index::SpatialIndex;
use crate::pipeline::{register, EpochInput, OracleJoint};
use crate::synth::{BiTemporalScene, JointPerturbation};

/// Camera poses tagged with their epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrajectoryEntry>", into = "Vec<TrajectoryEntry>")]
pub struct Trajectory {
    poses: Vec<SE3Pose>,
    epoch_ids: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryEntry {
    epoch_id: u8,
    #[serde(flatten)]
    pose: SE3Pose,
}

impl TryFrom<Vec<TrajectoryEntry>> for Trajectory {
    type Error = Error;
    fn try_from(v: Vec<TrajectoryEntry>) -> Result<Self> {
        let (ids, poses) = v.into_iter().map(|e| (e.epoch_id, e.pose)).unzip();
        Trajectory::new(poses, ids)
    }
}

impl From<Trajectory> for Vec<TrajectoryEntry> {
    fn from(t: Trajectory) -> Self {
        t.epoch_ids
            .into_iter()
            .zip(t.poses)
            .map(|(epoch_id, pose)| TrajectoryEntry { epoch_id, pose })
            .collect()
    }
}

impl Trajectory {
    /// Frame indices must increase strictly within each epoch.
    pub fn new(poses: Vec<SE3Pose>, epoch_ids: Vec<u8>) -> Result<Self> {
        if poses.len() != epoch_ids.len() {
            return Err(Error::MisalignedInputs(format!(
                "{} poses but {} epoch ids",
                poses.len(),
                epoch_ids.len()
            )));
        }
        let mut last = std::collections::HashMap::new();
        for (p, e) in poses.iter().zip(&epoch_ids) {
            if let Some(prev) = last.insert(*e, p.frame_index()) {
                if p.frame_index() <= prev {
                    return Err(Error::LabelMismatch(format!(
                        "epoch {e}: frame {} follows frame {prev}",
                        p.frame_index()
                    )));
                }
            }
        }
        Ok(Self { poses, epoch_ids })
    }

    pub fn single_epoch(epoch_id: u8, poses: Vec<SE3Pose>) -> Result<Self> {
        let ids = vec![epoch_id; poses.len()];
        Self::new(poses, ids)
    }

    pub fn concat(parts: &[&Trajectory]) -> Result<Self> {
        let poses = parts.iter().flat_map(|t| t.poses.iter().cloned()).collect();
        let ids = parts.iter().flat_map(|t| t.epoch_ids.iter().copied()).collect();
        Self::new(poses, ids)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[SE3Pose] {
        &self.poses
    }

    pub fn epoch_ids(&self) -> &[u8] {
        &self.epoch_ids
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.poses.iter().map(SE3Pose::center).collect()
    }

    /// `(epoch, frame)` label of every pose.
    pub fn labels(&self) -> Vec<(u8, u32)> {
        self.epoch_ids
            .iter()
            .zip(&self.poses)
            .map(|(e, p)| (*e, p.frame_index()))
            .collect()
    }

    /// The same cameras expressed in the frame `t` maps into.
    pub fn transformed(&self, t: &Sim3Transform) -> Result<Self> {
        let poses = self
            .poses
            .iter()
            .map(|p| {
                SE3Pose::from_center(
                    p.rotation() * t.rotation().transpose(),
                    t.apply(&p.center()),
                    p.frame_index(),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { poses, epoch_ids: self.epoch_ids.clone() })
    }
}

/// Predicted combined trajectory: epoch-1 cameras mapped by `relative`
/// into the epoch-2 frame, followed by the epoch-2 cameras.
pub fn combine_predicted(t1: &Trajectory, t2: &Trajectory, relative: &Sim3Transform) -> Result<Trajectory> {
    Trajectory::concat(&[&t1.transformed(relative)?, t2])
}

fn aligned_centers(predicted: &Trajectory, ground_truth: &Trajectory) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    if predicted.labels() != ground_truth.labels() {
        return Err(Error::LabelMismatch(format!(
            "predicted has {} poses, ground truth {}, labels differ",
            predicted.len(),
            ground_truth.len()
        )));
    }
    let pred = predicted.centers();
    let gt = ground_truth.centers();
    let align = umeyama(&pred, &gt, None)?;
    Ok((pred.iter().map(|p| align.apply(p)).collect(), gt))
}

/// RMSE of camera centers after one global Sim(3) alignment.
pub fn ate(predicted: &Trajectory, ground_truth: &Trajectory) -> Result<f64> {
    let (pred, gt) = aligned_centers(predicted, ground_truth)?;
    let sq: f64 = pred.iter().zip(&gt).map(|(p, g)| (p - g).norm_squared()).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// RMS over consecutive same-epoch pairs of `|‖Δc_pred‖ − ‖Δc_gt‖|`, after
/// the ATE alignment.
pub fn rte(predicted: &Trajectory, ground_truth: &Trajectory) -> Result<f64> {
    for e in [1u8, 2] {
        let n = predicted.epoch_ids.iter().filter(|x| **x == e).count();
        if n < 2 {
            return Err(Error::TooFewPoses(format!("epoch {e} has {n} poses, need >= 2")));
        }
    }
    let (pred, gt) = aligned_centers(predicted, ground_truth)?;
    let ids = &predicted.epoch_ids;
    let mut sq = 0.0;
    let mut pairs = 0usize;
    for e in [1u8, 2] {
        let idx: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == e).collect();
        for w in idx.windows(2) {
            let dp = (pred[w[1]] - pred[w[0]]).norm();
            let dg = (gt[w[1]] - gt[w[0]]).norm();
            sq += (dp - dg).powi(2);
            pairs += 1;
        }
    }
    Ok((sq / pairs as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformError {
    /// `|s_est / s_gt − 1|`.
    pub scale_ratio_error: f64,
    pub rotation_deg: f64,
    /// `‖t_est − t_gt‖`.
    pub translation_norm: f64,
}

pub fn transform_error(estimate: &Sim3Transform, truth: &Sim3Transform) -> TransformError {
    TransformError {
        scale_ratio_error: (estimate.scale() / truth.scale() - 1.0).abs(),
        rotation_deg: rotation_angle_deg(estimate.rotation(), truth.rotation()),
        translation_norm: (estimate.translation() - truth.translation()).norm(),
    }
}

/// Settings echoed into every metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k_keyframes: usize,
    pub alpha: f64,
    pub grid_resolution: u32,
    pub tau_ratio: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl From<&PipelineConfig> for ConfigEcho {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            k_keyframes: c.k_keyframes,
            alpha: c.alpha,
            grid_resolution: c.grid_resolution,
            tau_ratio: c.tau_ratio,
            seed: c.seed,
            mode: c.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ate_m: f64,
    pub rte_m: f64,
    pub transform_error: TransformError,
    /// Left out of run reports so they stay byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registration_time_s: Option<f64>,
    pub config: ConfigEcho,
}

/// Metrics of an estimated relative transform given private-frame predicted
/// trajectories and world-frame ground truth.
pub fn evaluate(
    estimate: &Sim3Transform,
    predicted: [&Trajectory; 2],
    ground_truth: [&Trajectory; 2],
    gt_relative: &Sim3Transform,
    config: &PipelineConfig,
) -> Result<MetricsReport> {
    let pred = combine_predicted(predicted[0], predicted[1], estimate)?;
    let gt = Trajectory::concat(&ground_truth)?;
    Ok(MetricsReport {
        ate_m: ate(&pred, &gt)?,
        rte_m: rte(&pred, &gt)?,
        transform_error: transform_error(estimate, gt_relative),
        registration_time_s: None,
        config: config.into(),
    })
}

/// A keyframe budget in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KBudget {
    Frames(usize),
    All,
}

impl KBudget {
    pub fn resolve(self, n_frames: usize) -> usize {
        match self {
            KBudget::Frames(k) => k.min(n_frames),
            KBudget::All => n_frames,
        }
    }
}

impl FromStr for KBudget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(KBudget::All),
            v => v
                .parse()
                .ok()
                .filter(|k| *k >= 1)
                .map(KBudget::Frames)
                .ok_or_else(|| Error::InvalidConfig(format!("bad keyframe budget {v:?}"))),
        }
    }
}

impl fmt::Display for KBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KBudget::Frames(k) => write!(f, "{k}"),
            KBudget::All => f.write_str("all"),
        }
    }
}

/// One (K, mode) run.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub ate_m: f64,
    pub transform_error: TransformError,
    /// Median all-point nearest-neighbor residual of the prepared clouds.
    pub median_residual: f64,
    pub coarse_time_s: f64,
    pub registration_time_s: f64,
    pub fine_stage_calls: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub k: KBudget,
    pub k_resolved: usize,
    pub coarse: Option<AblationCell>,
    pub full: Option<AblationCell>,
}

impl AblationRow {
    /// Relative ATE improvement of full over coarse, in percent.
    pub fn ate_delta_pct(&self) -> Option<f64> {
        let (c, f) = (self.coarse.as_ref()?, self.full.as_ref()?);
        Some(if c.ate_m > 0.0 { 100.0 * (c.ate_m - f.ate_m) / c.ate_m } else { 0.0 })
    }

    /// Relative median-residual improvement of full over coarse, in percent.
    pub fn residual_delta_pct(&self) -> Option<f64> {
        let (c, f) = (self.coarse.as_ref()?, self.full.as_ref()?);
        Some(if c.median_residual > 0.0 {
            100.0 * (c.median_residual - f.median_residual) / c.median_residual
        } else {
            0.0
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

#[derive(Serialize)]
struct CsvRow {
    k: String,
    k_frames: usize,
    coarse_ate_m: Option<f64>,
    full_ate_m: Option<f64>,
    ate_delta_pct: Option<f64>,
    coarse_median_residual: Option<f64>,
    full_median_residual: Option<f64>,
    residual_delta_pct: Option<f64>,
    coarse_time_s: Option<f64>,
    coarse_fine_calls: Option<usize>,
    full_fine_calls: Option<usize>,
}

impl AblationTable {
    /// One row per budget; cells for modes that were not run stay empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            let c = r.coarse.as_ref();
            let f = r.full.as_ref();
            w.serialize(CsvRow {
                k: r.k.to_string(),
                k_frames: r.k_resolved,
                coarse_ate_m: c.map(|c| c.ate_m),
                full_ate_m: f.map(|f| f.ate_m),
                ate_delta_pct: r.ate_delta_pct(),
                coarse_median_residual: c.map(|c| c.median_residual),
                full_median_residual: f.map(|f| f.median_residual),
                residual_delta_pct: r.residual_delta_pct(),
                coarse_time_s: c.or(f).map(|x| x.coarse_time_s),
                coarse_fine_calls: c.map(|c| c.fine_stage_calls),
                full_fine_calls: f.map(|f| f.fine_stage_calls),
            })
            .expect("in-memory csv write");
        }
        let bytes = w.into_inner().expect("in-memory csv flush");
        String::from_utf8(bytes).expect("csv output is utf-8")
    }
}

/// Runs the pipeline on `scene` for every budget and mode, with the joint
/// pass mocked by `perturbation`.
pub fn ablation_sweep(
    scene: &BiTemporalScene,
    k_values: &[KBudget],
    modes: &[Mode],
    base: &PipelineConfig,
    perturbation: &JointPerturbation,
) -> Result<AblationTable> {
    let e = &scene.epochs;
    let n_frames = scene.n_frames();
    let source = prepare_cloud(&e[0].cloud, base.grid_resolution)?;
    let target = prepare_cloud(&e[1].cloud, base.grid_resolution)?;
    let target_index = SpatialIndex::build(&target)?;
    let joint = OracleJoint {
        clouds: [&e[0].cloud, &e[1].cloud],
        epoch_transforms: scene.spec.epoch_transforms.clone(),
        perturbation: perturbation.clone(),
    };
    let inputs = [
        EpochInput { cloud: &e[0].cloud, n_frames },
        EpochInput { cloud: &e[1].cloud, n_frames },
    ];
    let gt = Trajectory::concat(&[&e[0].gt_trajectory, &e[1].gt_trajectory])?;

    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let k_resolved = k.resolve(n_frames);
        let mut row = AblationRow { k, k_resolved, coarse: None, full: None };
        for &mode in modes {
            let config = PipelineConfig { k_keyframes: k_resolved, mode, ..base.clone() };
            let out = register(inputs, &joint, &config)?;
            let pred = combine_predicted(&e[0].trajectory, &e[1].trajectory, &out.final_transform)?;
            let cell = AblationCell {
                ate_m: ate(&pred, &gt)?,
                transform_error: transform_error(&out.final_transform, &scene.spec.gt_relative),
                median_residual: median_residual(&source, &target_index, &out.final_transform)?,
                coarse_time_s: out.timing.coarse_s,
                registration_time_s: out.timing.registration_s,
                fine_stage_calls: out.fine_stage_calls,
            };
            match mode {
                Mode::CoarseOnly => row.coarse = Some(cell),
                Mode::Full => row.full = Some(cell),
            }
        }
        rows.push(row);
    }
    Ok(AblationTable { rows })
}
