//! Point cloud container, confidence filtering and adaptive voxel downsampling.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Rgb = [u8; 3];

/// Points with per-point confidence and optional color / source frame.
///
/// All parallel arrays have the same length and every confidence lies in
/// `[0, 1]`; the constructors enforce both.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    confidence: Vec<f64>,
    color: Option<Vec<Rgb>>,
    source_frame: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, confidence: Vec<f64>) -> Result<Self> {
        if points.len() != confidence.len() {
            return Err(Error::MisalignedInputs(format!(
                "{} points but {} confidences",
                points.len(),
                confidence.len()
            )));
        }
        if let Some((i, c)) = confidence
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::InvalidConfig(format!(
                "confidence {c} of point {i} outside [0, 1]"
            )));
        }
        Ok(Self {
            points,
            confidence,
            color: None,
            source_frame: None,
        })
    }

    /// Cloud with every confidence set to 1.
    pub fn from_points(points: Vec<Vec3>) -> Self {
        let confidence = vec![1.0; points.len()];
        Self {
            points,
            confidence,
            color: None,
            source_frame: None,
        }
    }

    pub fn with_colors(mut self, colors: Vec<Rgb>) -> Result<Self> {
        if colors.len() != self.len() {
            return Err(Error::MisalignedInputs(format!(
                "{} points but {} colors",
                self.len(),
                colors.len()
            )));
        }
        self.color = Some(colors);
        Ok(self)
    }

    pub fn with_source_frames(mut self, frames: Vec<u32>) -> Result<Self> {
        if frames.len() != self.len() {
            return Err(Error::MisalignedInputs(format!(
                "{} points but {} frame indices",
                self.len(),
                frames.len()
            )));
        }
        self.source_frame = Some(frames);
        Ok(self)
    }

    pub fn without_colors(mut self) -> Self {
        self.color = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.color.as_deref()
    }

    pub fn source_frames(&self) -> Option<&[u32]> {
        self.source_frame.as_deref()
    }

    /// Subset in the order given by `indices`, carrying every attribute along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            confidence: indices.iter().map(|&i| self.confidence[i]).collect(),
            color: self
                .color
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            source_frame: self
                .source_frame
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i]).collect()),
        }
    }

    /// Same attributes, points replaced by `f(point)`.
    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Concatenates clouds. Colors / frames survive only if every part has them.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let parts: Vec<&PointCloud> = parts.into_iter().collect();
        let all_color = !parts.is_empty() && parts.iter().all(|p| p.color.is_some());
        let all_frames = !parts.is_empty() && parts.iter().all(|p| p.source_frame.is_some());
        let mut out = PointCloud::default();
        for p in &parts {
            out.points.extend_from_slice(&p.points);
            out.confidence.extend_from_slice(&p.confidence);
        }
        if all_color {
            out.color = Some(parts.iter().flat_map(|p| p.color.clone().unwrap()).collect());
        }
        if all_frames {
            out.source_frame = Some(
                parts
                    .iter()
                    .flat_map(|p| p.source_frame.clone().unwrap())
                    .collect(),
            );
        }
        out
    }

    /// Indices of the points whose source frame is in `frames`, in cloud order.
    pub fn indices_in_frames(&self, frames: &[u32]) -> Vec<usize> {
        match &self.source_frame {
            Some(sf) => sf
                .iter()
                .enumerate()
                .filter(|(_, f)| frames.contains(f))
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Median with the lower-midpoint convention for even counts.
pub fn median_lower(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    Some(*m)
}

/// Linear-interpolation percentile of an ascending slice, `q` in `[0, 100]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-axis 1st and 99th percentile of the coordinates.
pub fn percentile_bounds(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    if points.is_empty() {
        return None;
    }
    let mut lo = Vec3::zeros();
    let mut hi = Vec3::zeros();
    let mut axis = Vec::with_capacity(points.len());
    for a in 0..3 {
        axis.clear();
        axis.extend(points.iter().map(|p| p[a]));
        axis.sort_unstable_by(f64::total_cmp);
        lo[a] = percentile_sorted(&axis, 1.0);
        hi[a] = percentile_sorted(&axis, 99.0);
    }
    Some((lo, hi))
}

/// Robust spatial extent: max over axes of (99th − 1st percentile).
pub fn robust_extent(points: &[Vec3]) -> f64 {
    match percentile_bounds(points) {
        Some((lo, hi)) => (hi - lo).max(),
        None => 0.0,
    }
}

/// Indices of the points whose confidence strictly exceeds the median.
///
/// When nothing exceeds the median (all confidences equal, or the median
/// coincides with the maximum) every index is returned.
pub fn median_confidence_indices(cloud: &PointCloud) -> Result<Vec<usize>> {
    let median = median_lower(cloud.confidence()).ok_or(Error::EmptyCloud)?;
    let kept: Vec<usize> = cloud
        .confidence()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > median)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        Ok((0..cloud.len()).collect())
    } else {
        Ok(kept)
    }
}

pub fn filter_by_median_confidence(cloud: &PointCloud) -> Result<PointCloud> {
    let idx = median_confidence_indices(cloud)?;
    if idx.len() == cloud.len() {
        return Ok(cloud.clone());
    }
    Ok(cloud.select(&idx))
}

/// Axis-aligned voxel lattice anchored at `origin`.
///
/// Points outside the lattice fall into the nearest boundary voxel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub edge: f64,
    pub dims: [i64; 3],
}

impl VoxelGrid {
    /// Grid with edge `L / resolution`, where `L` is the robust extent,
    /// anchored at the percentile-clipped minimum corner.
    ///
    /// Returns `None` when the cloud has zero extent even without clipping.
    pub fn adaptive(cloud: &PointCloud, resolution: u32) -> Result<Option<VoxelGrid>> {
        if resolution == 0 {
            return Err(Error::InvalidConfig("grid resolution must be >= 1".into()));
        }
        let (mut lo, mut hi) = percentile_bounds(cloud.points()).ok_or(Error::EmptyCloud)?;
        if (hi - lo).max() <= 0.0 {
            // Clipping collapsed the box; fall back to the raw bounds.
            let (rlo, rhi) = raw_bounds(cloud.points());
            if (rhi - rlo).max() <= 0.0 {
                return Ok(None);
            }
            lo = rlo;
            hi = rhi;
        }
        let extent = (hi - lo).max();
        let edge = extent / f64::from(resolution);
        let mut dims = [1i64; 3];
        for a in 0..3 {
            dims[a] = (((hi[a] - lo[a]) / edge).ceil() as i64).max(1);
        }
        Ok(Some(VoxelGrid {
            origin: lo,
            edge,
            dims,
        }))
    }

    pub fn key(&self, p: &Vec3) -> [i64; 3] {
        let mut k = [0i64; 3];
        for a in 0..3 {
            let raw = ((p[a] - self.origin[a]) / self.edge).floor();
            // NaN-safe clamp: saturating cast, then limit to the lattice.
            k[a] = (raw as i64).clamp(0, self.dims[a] - 1);
        }
        k
    }
}

fn raw_bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Indices of the highest-confidence point of every occupied voxel
/// (ties to the lowest index), ascending.
pub fn voxel_representatives(cloud: &PointCloud, grid: &VoxelGrid) -> Vec<usize> {
    let mut best: HashMap<[i64; 3], usize> = HashMap::with_capacity(cloud.len() / 2);
    let conf = cloud.confidence();
    for (i, p) in cloud.points().iter().enumerate() {
        best.entry(grid.key(p))
            .and_modify(|b| {
                if conf[i] > conf[*b] {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let mut idx: Vec<usize> = best.into_values().collect();
    idx.sort_unstable();
    idx
}

/// Indices kept by [`voxel_downsample`].
pub fn voxel_downsample_indices(cloud: &PointCloud, resolution: u32) -> Result<Vec<usize>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    match VoxelGrid::adaptive(cloud, resolution)? {
        Some(grid) => Ok(voxel_representatives(cloud, &grid)),
        None => {
            // All points coincide: keep the single most confident one.
            let conf = cloud.confidence();
            let best = (0..cloud.len())
                .reduce(|b, i| if conf[i] > conf[b] { i } else { b })
                .unwrap();
            Ok(vec![best])
        }
    }
}

/// Confidence-preserving voxel downsampling with an adaptive voxel edge.
pub fn voxel_downsample(cloud: &PointCloud, resolution: u32) -> Result<PointCloud> {
    let idx = voxel_downsample_indices(cloud, resolution)?;
    Ok(cloud.select(&idx))
}
