//! Stage 2: static-set purification and translation-only refinement with a
//! residual self-check.
//!
//! Scale and rotation stay at their coarse values on every path; only the
//! translation may change, and only when it strictly lowers the median
//! all-point nearest-neighbor residual.

use serde::{Deserialize, Serialize};

use crate::cloud::{
    filter_by_median_confidence, median_lower, voxel_downsample, PointCloud, Vec3,
};
use crate::error::{Error, Result};
use crate::geom::{apply_transform, Sim3Transform};
use crate::index::{nn_distances, nn_of_points, SpatialIndex};

pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_GRID_RESOLUTION: u32 = 200;
/// Below this many static correspondences the coarse translation is kept.
pub const MIN_STATIC_POINTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct PurificationResult {
    pub distances: Vec<f64>,
    /// Target index of each source point's nearest neighbor.
    pub neighbors: Vec<usize>,
    pub static_mask: Vec<bool>,
    pub median_distance: f64,
    pub threshold: f64,
    pub alpha: f64,
}

impl PurificationResult {
    pub fn n_static(&self) -> usize {
        self.static_mask.iter().filter(|s| **s).count()
    }
}

/// Outcome of the fine stage. `translation` is the final translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineResult {
    pub translation: [f64; 3],
    pub accepted_refinement: bool,
    pub coarse_median_residual: f64,
    pub refined_median_residual: f64,
    pub n_static: usize,
    /// Candidate translation, when one was computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_translation: Option<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FineConfig {
    pub alpha: f64,
    pub min_static: usize,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            min_static: MIN_STATIC_POINTS,
        }
    }
}

/// Nearest-neighbor distances of the aligned source into the target and the
/// static set `{i | dᵢ < α · median(d)}`.
pub fn purify(
    aligned_source: &PointCloud,
    target_index: &SpatialIndex,
    alpha: f64,
) -> Result<PurificationResult> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} must be >= 0")));
    }
    let nn = nn_distances(aligned_source, target_index)?;
    let distances: Vec<f64> = nn.iter().map(|n| n.distance).collect();
    let median_distance = median_lower(&distances).ok_or(Error::EmptyCloud)?;
    let threshold = alpha * median_distance;
    Ok(PurificationResult {
        static_mask: distances.iter().map(|d| *d < threshold).collect(),
        neighbors: nn.iter().map(|n| n.index).collect(),
        distances,
        median_distance,
        threshold,
        alpha,
    })
}

/// Mean of `target[nn(i)] − s·R·source[i]` over the static set, using the
/// neighbors frozen in `purification`.
pub fn refine_translation(
    source: &PointCloud,
    target_index: &SpatialIndex,
    coarse: &Sim3Transform,
    purification: &PurificationResult,
) -> Result<Vec3> {
    if purification.static_mask.len() != source.len() {
        return Err(Error::MisalignedInputs(format!(
            "purification covers {} points, source has {}",
            purification.static_mask.len(),
            source.len()
        )));
    }
    let linear = coarse.linear();
    let mut sum = Vec3::zeros();
    let mut count = 0usize;
    for (i, p) in source.points().iter().enumerate() {
        if purification.static_mask[i] {
            sum += target_index.point(purification.neighbors[i]) - linear * p;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyStaticSet);
    }
    Ok(sum / count as f64)
}

/// Median nearest-neighbor distance of `transform(source)` into the target.
pub fn median_residual(
    source: &PointCloud,
    target_index: &SpatialIndex,
    transform: &Sim3Transform,
) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let moved: Vec<Vec3> = source.points().iter().map(|p| transform.apply(p)).collect();
    let d: Vec<f64> = nn_of_points(&moved, target_index)
        .iter()
        .map(|n| n.distance)
        .collect();
    Ok(median_lower(&d).unwrap())
}

/// Confidence filter followed by adaptive voxel downsampling.
pub fn prepare_cloud(cloud: &PointCloud, grid_resolution: u32) -> Result<PointCloud> {
    voxel_downsample(&filter_by_median_confidence(cloud)?, grid_resolution)
}

/// Single-shot translation refinement of `coarse`, which maps `source` into
/// the frame of `target`. Both clouds should already be prepared with
/// [`prepare_cloud`].
pub fn fine_stage(
    source: &PointCloud,
    target: &PointCloud,
    coarse: &Sim3Transform,
    config: &FineConfig,
) -> Result<FineResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let target_index = SpatialIndex::build(target)?;
    fine_stage_indexed(source, &target_index, coarse, config)
}

pub fn fine_stage_indexed(
    source: &PointCloud,
    target_index: &SpatialIndex,
    coarse: &Sim3Transform,
    config: &FineConfig,
) -> Result<FineResult> {
    let aligned = apply_transform(coarse, source);
    let purification = purify(&aligned, target_index, config.alpha)?;
    let coarse_median = purification.median_distance;
    let n_static = purification.n_static();
    let keep = |candidate| FineResult {
        translation: (*coarse.translation()).into(),
        accepted_refinement: false,
        coarse_median_residual: coarse_median,
        refined_median_residual: coarse_median,
        n_static,
        candidate_translation: candidate,
    };

    if n_static < config.min_static {
        log::debug!("only {n_static} static points, keeping coarse translation");
        return Ok(keep(None));
    }

    let refined = refine_translation(source, target_index, coarse, &purification)?;
    let candidate = coarse.with_translation(refined);
    let refined_median = median_residual(source, target_index, &candidate)?;
    if refined_median < coarse_median {
        Ok(FineResult {
            translation: refined.into(),
            accepted_refinement: true,
            coarse_median_residual: coarse_median,
            refined_median_residual: refined_median,
            n_static,
            candidate_translation: Some(refined.into()),
        })
    } else {
        log::debug!("refined median {refined_median} >= coarse {coarse_median}, reverting");
        Ok(keep(Some(refined.into())))
    }
}

impl FineResult {
    /// The coarse transform with this result's translation.
    pub fn apply_to(&self, coarse: &Sim3Transform) -> Sim3Transform {
        coarse.with_translation(Vec3::from(self.translation))
    }
}
