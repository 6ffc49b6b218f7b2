//! Exact nearest-neighbor search over a point cloud.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Nearest stored point for one query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
}

/// Immutable balanced KD-tree.
///
/// The tree is implicit: `perm` is reordered so that every subrange
/// `[lo, hi)` stores its splitting point at `(lo + hi) / 2`, with smaller
/// coordinates on the left. Queries are exact; among equidistant points the
/// lowest original index wins, so results match a linear scan exactly.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    coords: Vec<[f64; 3]>,
    perm: Vec<u32>,
    axis: Vec<u8>,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let n = points.len();
        assert!(n <= u32::MAX as usize, "index holds at most u32::MAX points");
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut perm: Vec<u32> = (0..n as u32).collect();
        let mut axis = vec![0u8; n];
        build_range(&coords, &mut perm, &mut axis, 0, n);
        Ok(Self { coords, perm, axis })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, index: usize) -> Vec3 {
        Vec3::from(self.coords[index])
    }

    pub fn nearest(&self, query: &Vec3) -> Neighbor {
        let q = [query.x, query.y, query.z];
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(&q, 0, self.perm.len(), &mut best);
        Neighbor {
            distance: best.0.sqrt(),
            index: best.1,
        }
    }

    fn search(&self, q: &[f64; 3], lo: usize, hi: usize, best: &mut (f64, usize)) {
        if hi - lo <= LEAF_SIZE {
            for &pi in &self.perm[lo..hi] {
                let i = pi as usize;
                consider(best, dist2(q, &self.coords[i]), i);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.perm[mid] as usize;
        consider(best, dist2(q, &self.coords[i]), i);
        let a = self.axis[mid] as usize;
        let diff = q[a] - self.coords[i][a];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        // `<=` so that equidistant points on the far side still compete on index.
        if diff * diff <= best.0 {
            self.search(q, far.0, far.1, best);
        }
    }
}

#[inline]
fn consider(best: &mut (f64, usize), d2: f64, i: usize) {
    if d2 < best.0 || (d2 == best.0 && i < best.1) {
        *best = (d2, i);
    }
}

fn build_range(coords: &[[f64; 3]], perm: &mut [u32], axis: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= LEAF_SIZE {
        return;
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &pi in &perm[lo..hi] {
        let p = &coords[pi as usize];
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let a = (0..3)
        .max_by(|&x, &y| (max[x] - min[x]).total_cmp(&(max[y] - min[y])))
        .unwrap();
    let mid = (lo + hi) / 2;
    perm[lo..hi].select_nth_unstable_by(mid - lo, |&x, &y| {
        coords[x as usize][a].total_cmp(&coords[y as usize][a])
    });
    axis[mid] = a as u8;
    build_range(coords, perm, axis, lo, mid);
    build_range(coords, perm, axis, mid + 1, hi);
}

/// Nearest-neighbor distance and index in the target for every source
/// point, in source order. Parallel over the source; deterministic.
pub fn nn_distances(source: &PointCloud, target: &SpatialIndex) -> Result<Vec<Neighbor>> {
    if source.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(nn_of_points(source.points(), target))
}

pub(crate) fn nn_of_points(points: &[Vec3], target: &SpatialIndex) -> Vec<Neighbor> {
    points
        .par_iter()
        .with_min_len(256)
        .map(|p| target.nearest(p))
        .collect()
}
