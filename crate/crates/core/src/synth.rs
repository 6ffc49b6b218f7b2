//! Deterministic bi-temporal synthetic scenes and a mock of the joint
//! keyframe reconstruction.
//!
//! The world is the unit cube (extent 1). Static geometry is a set of
//! axis-aligned boxes whose surfaces are sampled once and shared by both
//! epochs, so every static point has an exact counterpart. Each epoch sees
//! the world through its own private similarity frame.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::coarse::{JointReconstruction, Provenance};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geom::{compose_relative, CameraFrame, Mat3, SE3Pose, Sim3Transform};
use crate::index::SpatialIndex;
use crate::keyframes::KeyframeSet;

/// Confidence bound separating edge outliers (below) from inliers.
pub const OUTLIER_CONFIDENCE: f64 = 0.3;
pub const INLIER_CONFIDENCE: f64 = 0.5;

const SCENE_CENTER: Vec3 = Vec3::new(0.5, 0.5, 0.5);

pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner()
}

/// Random similarity: log-uniform scale in `scale`, uniform rotation,
/// translation components uniform in `±translation`.
pub fn random_sim3<R: Rng + ?Sized>(rng: &mut R, scale: Range<f64>, translation: f64) -> Sim3Transform {
    let s = rng.random_range(scale.start.ln()..scale.end.ln()).exp();
    let t = Vec3::from_fn(|_, _| rng.random_range(-translation..=translation));
    Sim3Transform::from_parts(s, random_rotation(rng), t)
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    Vec3::from_fn(|_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * sigma
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    /// Present only in epoch 2.
    Added,
    /// Present only in epoch 1.
    Removed,
    /// Rigidly offset by `displacement` between the epochs.
    Moved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub kind: ChangeKind,
    pub n_points: usize,
    #[serde(default)]
    pub displacement: [f64; 3],
}

/// Everything that determines a synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_static: usize,
    pub n_frames_per_epoch: usize,
    #[serde(default)]
    pub change_spec: Vec<ChangeSpec>,
    /// Gaussian position noise, as a fraction of the scene extent.
    pub noise_sigma: f64,
    #[serde(default)]
    pub edge_noise_fraction: f64,
    /// Ray elongation of edge outliers, as a fraction of the extent.
    #[serde(default)]
    pub edge_noise_elongation: f64,
    /// Epoch frame → world.
    pub epoch_transforms: [Sim3Transform; 2],
    /// Epoch-1 frame → epoch-2 frame.
    pub gt_relative: Sim3Transform,
}

impl SceneSpec {
    pub fn new(seed: u64, epoch_transforms: [Sim3Transform; 2]) -> Self {
        let gt_relative = compose_relative(&epoch_transforms[0], &epoch_transforms[1]);
        Self {
            seed,
            n_static: 10_000,
            n_frames_per_epoch: 20,
            change_spec: Vec::new(),
            noise_sigma: 0.001,
            edge_noise_fraction: 0.0,
            edge_noise_elongation: 0.0,
            epoch_transforms,
            gt_relative,
        }
    }

    /// Random epoch frames (scale in `[0.2, 5]`) drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x5eed);
        let t1 = random_sim3(&mut rng, 0.2..5.0, 5.0);
        let t2 = random_sim3(&mut rng, 0.2..5.0, 5.0);
        Self::new(seed, [t1, t2])
    }

    /// The default demo scene: one object of each change kind and mild
    /// edge noise.
    pub fn demo(seed: u64) -> Self {
        let mut s = Self::random(seed);
        s.change_spec = vec![
            ChangeSpec { kind: ChangeKind::Added, n_points: 500, displacement: [0.0; 3] },
            ChangeSpec { kind: ChangeKind::Removed, n_points: 400, displacement: [0.0; 3] },
            ChangeSpec { kind: ChangeKind::Moved, n_points: 400, displacement: [0.3, 0.0, 0.1] },
        ];
        s.edge_noise_fraction = 0.05;
        s.edge_noise_elongation = 0.05;
        s
    }

    pub fn with_epoch_transforms(mut self, epoch_transforms: [Sim3Transform; 2]) -> Self {
        self.gt_relative = compose_relative(&epoch_transforms[0], &epoch_transforms[1]);
        self.epoch_transforms = epoch_transforms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_static < 3 {
            return bad(format!("n_static = {} (need >= 3)", self.n_static));
        }
        if self.n_frames_per_epoch == 0 {
            return bad("n_frames_per_epoch must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma < 0.1) {
            return bad(format!("noise_sigma {} outside [0, 0.1)", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.edge_noise_fraction) {
            return bad(format!("edge_noise_fraction {} outside [0, 1]", self.edge_noise_fraction));
        }
        if !(self.edge_noise_elongation >= 0.0 && self.edge_noise_elongation.is_finite()) {
            return bad("edge_noise_elongation must be >= 0".into());
        }
        let expect = compose_relative(&self.epoch_transforms[0], &self.epoch_transforms[1]);
        let g = &self.gt_relative;
        let close = (g.scale() - expect.scale()).abs() <= 1e-12 * expect.scale()
            && (g.rotation() - expect.rotation()).norm() <= 1e-12
            && (g.translation() - expect.translation()).norm()
                <= 1e-12 * (1.0 + expect.translation().norm());
        if !close {
            return bad("gt_relative does not match the epoch transforms".into());
        }
        for c in &self.change_spec {
            if c.n_points == 0 {
                return bad("change with zero points".into());
            }
            if c.kind == ChangeKind::Moved {
                let d = Vec3::from(c.displacement).norm();
                if d < 10.0 * self.noise_sigma || d == 0.0 {
                    return bad(format!(
                        "moved object displacement {d} is below 10 x noise_sigma"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    fn size(&self) -> Vec3 {
        Vec3::from(self.max) - Vec3::from(self.min)
    }

    fn area(&self) -> f64 {
        let s = self.size();
        2.0 * (s.x * s.y + s.y * s.z + s.x * s.z)
    }

    fn translated(&self, d: &Vec3) -> Aabb {
        Aabb {
            min: (Vec3::from(self.min) + d).into(),
            max: (Vec3::from(self.max) + d).into(),
        }
    }

    fn sample_surface<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let s = self.size();
        let faces = [s.y * s.z, s.x * s.z, s.x * s.y];
        let mut pick = rng.random_range(0.0..faces.iter().sum::<f64>());
        let mut axis = 2;
        for (a, f) in faces.iter().enumerate() {
            if pick < *f {
                axis = a;
                break;
            }
            pick -= f;
        }
        let mut p = Vec3::from(self.min) + Vec3::from_fn(|i, _| rng.random::<f64>() * s[i]);
        p[axis] = if rng.random::<bool>() { self.max[axis] } else { self.min[axis] };
        p
    }

    /// Entry distance along `dir` from `origin`, if hit in front.
    fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut near, mut far) = ((self.min[a] - origin[a]) * inv, (self.max[a] - origin[a]) * inv);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
        }
        (t0 <= t1 && t0 > 1e-9).then_some(t0)
    }
}

fn sample_boxes<R: Rng + ?Sized>(rng: &mut R, boxes: &[Aabb], n: usize) -> Vec<Vec3> {
    let areas: Vec<f64> = boxes.iter().map(Aabb::area).collect();
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut b = boxes.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    b = i;
                    break;
                }
                pick -= a;
            }
            boxes[b].sample_surface(rng)
        })
        .collect()
}

/// World geometry, kept for depth rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub static_boxes: Vec<Aabb>,
    /// Change objects present in each epoch.
    pub objects: [Vec<Aabb>; 2],
}

/// One epoch of a synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochData {
    /// Points in the epoch's private frame, grouped by frame.
    pub cloud: PointCloud,
    /// Ground truth: point belongs to a change object.
    pub changed: Vec<bool>,
    /// Point turned into an edge-flying outlier.
    pub outlier: Vec<bool>,
    /// Identity of the underlying world sample; static points share ids
    /// across epochs.
    pub point_ids: Vec<u32>,
    /// Camera poses in the private frame.
    pub trajectory: Trajectory,
    /// Camera poses in the world frame.
    pub gt_trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiTemporalScene {
    pub spec: SceneSpec,
    pub geometry: SceneGeometry,
    pub epochs: [EpochData; 2],
}

impl BiTemporalScene {
    pub fn n_frames(&self) -> usize {
        self.spec.n_frames_per_epoch
    }

    /// Keyframe points of one epoch, expressed in the world frame.
    pub fn world_keyframe_cloud(&self, epoch: usize, keyframes: &KeyframeSet) -> PointCloud {
        let data = &self.epochs[epoch];
        let idx = data.cloud.indices_in_frames(&keyframes.indices);
        let t = &self.spec.epoch_transforms[epoch];
        data.cloud.select(&idx).map_points(|p| t.apply(p))
    }
}

fn camera_arc<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<(Mat3, Vec3)> {
    let start = rng.random_range(0.0..2.0 * PI);
    let span = 1.5 * PI;
    let radius = rng.random_range(1.4..1.8);
    let target = Vec3::new(0.5, 0.5, 0.3);
    (0..n)
        .map(|i| {
            let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let a = start + span * f;
            let c = Vec3::new(
                0.5 + radius * a.cos(),
                0.5 + radius * a.sin(),
                0.8 + 0.2 * (3.0 * a).sin(),
            );
            let fwd = (target - c).normalize();
            let right = fwd.cross(&Vec3::z()).normalize();
            let down = fwd.cross(&right);
            let r = Mat3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
            (r, c)
        })
        .collect()
}

/// Places one change object with clearance from everything placed so far.
fn place_object<R: Rng + ?Sized>(
    rng: &mut R,
    index: &mut Vec<Vec3>,
    n_points: usize,
    offset: Option<Vec3>,
    clearance: f64,
) -> Result<(Aabb, Vec<Vec3>)> {
    let tree = SpatialIndex::from_points(index)?;
    for _ in 0..2000 {
        let size = Vec3::from_fn(|_, _| rng.random_range(0.06..0.14));
        let lo = Vec3::from_fn(|_, _| rng.random_range(0.05..0.8));
        let b = Aabb { min: lo.into(), max: (lo + size).into() };
        let pts = sample_boxes(rng, &[b], n_points);
        let probe = |p: &Vec3| tree.nearest(p).distance >= clearance;
        let clear_here = pts.iter().all(probe);
        let clear_there = match offset {
            Some(d) => pts.iter().all(|p| probe(&(p + d))),
            None => true,
        };
        if clear_here && clear_there {
            index.extend(pts.iter().copied());
            if let Some(d) = offset {
                index.extend(pts.iter().map(|p| p + d));
            }
            return Ok((b, pts));
        }
    }
    Err(Error::InvalidSpec("could not place a change object with clearance".into()))
}

struct WorldPoint {
    p: Vec3,
    id: u32,
    changed: bool,
}

/// Builds the scene described by `spec`. Deterministic in `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<BiTemporalScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut static_boxes = vec![Aabb { min: [0.0, 0.0, 0.0], max: [1.0, 1.0, 0.04] }];
    let n_boxes = rng.random_range(3..=10);
    for _ in 1..n_boxes {
        let size = Vec3::new(
            rng.random_range(0.1..0.35),
            rng.random_range(0.1..0.35),
            rng.random_range(0.1..0.5),
        );
        let x = rng.random_range(0.0..1.0 - size.x);
        let y = rng.random_range(0.0..1.0 - size.y);
        let lo = Vec3::new(x, y, 0.04);
        static_boxes.push(Aabb { min: lo.into(), max: (lo + size).into() });
    }
    let static_pts = sample_boxes(&mut rng, &static_boxes, spec.n_static);

    let clearance = (0.03f64).max(8.0 * spec.noise_sigma);
    let mut occupied = static_pts.clone();
    let mut world: [Vec<WorldPoint>; 2] = [Vec::new(), Vec::new()];
    for (i, p) in static_pts.iter().enumerate() {
        for w in world.iter_mut() {
            w.push(WorldPoint { p: *p, id: i as u32, changed: false });
        }
    }
    let mut objects: [Vec<Aabb>; 2] = [Vec::new(), Vec::new()];
    let mut next_id = spec.n_static as u32;
    for change in &spec.change_spec {
        let offset = (change.kind == ChangeKind::Moved).then(|| Vec3::from(change.displacement));
        let (b, pts) = place_object(&mut rng, &mut occupied, change.n_points, offset, clearance)?;
        let mut push = |epoch: usize, shift: Vec3| {
            for (k, p) in pts.iter().enumerate() {
                world[epoch].push(WorldPoint { p: p + shift, id: next_id + k as u32, changed: true });
            }
        };
        match change.kind {
            ChangeKind::Added => {
                push(1, Vec3::zeros());
                objects[1].push(b);
            }
            ChangeKind::Removed => {
                push(0, Vec3::zeros());
                objects[0].push(b);
            }
            ChangeKind::Moved => {
                let d = offset.unwrap();
                push(0, Vec3::zeros());
                push(1, d);
                objects[0].push(b);
                objects[1].push(b.translated(&d));
            }
        }
        next_id += pts.len() as u32;
    }

    let epochs = [0, 1].map(|e| build_epoch(spec, e, &world[e], &mut rng));
    let [e1, e2] = epochs;
    Ok(BiTemporalScene {
        spec: spec.clone(),
        geometry: SceneGeometry { static_boxes, objects },
        epochs: [e1?, e2?],
    })
}

fn build_epoch(
    spec: &SceneSpec,
    epoch: usize,
    world: &[WorldPoint],
    rng: &mut ChaCha8Rng,
) -> Result<EpochData> {
    let n_frames = spec.n_frames_per_epoch;
    let cams = camera_arc(rng, n_frames);

    // Each point is seen by its closest camera.
    let frame_of: Vec<usize> = world
        .iter()
        .map(|w| {
            (0..n_frames)
                .min_by(|&a, &b| (cams[a].1 - w.p).norm_squared().total_cmp(&(cams[b].1 - w.p).norm_squared()))
                .unwrap()
        })
        .collect();
    let mut order: Vec<usize> = (0..world.len()).collect();
    order.sort_by_key(|&i| frame_of[i]);

    let n = world.len();
    let n_out = (spec.edge_noise_fraction * n as f64).floor() as usize;
    let mut outlier = vec![false; n];
    let mut pick: Vec<usize> = (0..n).collect();
    pick.shuffle(rng);
    for &i in &pick[..n_out] {
        outlier[i] = true;
    }

    let to_private = spec.epoch_transforms[epoch].inverse();
    let mut points = Vec::with_capacity(n);
    let mut conf = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    let mut changed = Vec::with_capacity(n);
    let mut is_out = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for &i in &order {
        let w = &world[i];
        let mut p = w.p + gaussian3(rng, spec.noise_sigma);
        let c = if outlier[i] {
            let ray = (p - cams[frame_of[i]].1).normalize();
            let len = rng.random_range(0.3..=1.0) * spec.edge_noise_elongation;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            p += ray * (sign * len);
            rng.random_range(0.05..OUTLIER_CONFIDENCE)
        } else {
            rng.random_range(INLIER_CONFIDENCE..=1.0)
        };
        points.push(to_private.apply(&p));
        conf.push(c);
        frames.push(frame_of[i] as u32 + 1);
        changed.push(w.changed);
        is_out.push(outlier[i]);
        ids.push(w.id);
    }
    let cloud = PointCloud::new(points, conf)?.with_source_frames(frames)?;

    let t = &spec.epoch_transforms[epoch];
    let epoch_id = epoch as u8 + 1;
    let mut private = Vec::with_capacity(n_frames);
    let mut world_poses = Vec::with_capacity(n_frames);
    for (i, (r_wc, c)) in cams.iter().enumerate() {
        let f = i as u32 + 1;
        world_poses.push(SE3Pose::from_center(*r_wc, *c, f)?);
        private.push(SE3Pose::from_center(r_wc * t.rotation(), to_private.apply(c), f)?);
    }
    Ok(EpochData {
        cloud,
        changed,
        outlier: is_out,
        point_ids: ids,
        trajectory: Trajectory::single_epoch(epoch_id, private)?,
        gt_trajectory: Trajectory::single_epoch(epoch_id, world_poses)?,
    })
}

/// How the mocked joint reconstruction deviates from the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointPerturbation {
    /// Per-point Gaussian noise (world units).
    pub sigma: f64,
    /// Offset magnitude for low-confidence points, modelling edge noise
    /// that differs between the two passes (world units).
    pub edge_jitter: f64,
    /// Systematic per-epoch distortion of the joint pass: rotation angle
    /// about the scene center, relative scale error, translation norm.
    pub bias_rotation_deg: f64,
    pub bias_scale: f64,
    pub bias_translation: f64,
    pub seed: u64,
}

impl Default for JointPerturbation {
    fn default() -> Self {
        Self {
            sigma: 0.002,
            edge_jitter: 0.05,
            bias_rotation_deg: 0.0,
            bias_scale: 0.0,
            bias_translation: 0.0,
            seed: 0,
        }
    }
}

impl JointPerturbation {
    pub fn none() -> Self {
        Self { sigma: 0.0, edge_jitter: 0.0, ..Self::default() }
    }

    fn bias(&self, epoch: usize) -> Sim3Transform {
        // Both epochs draw from one stream, epoch 1 first.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(100);
        let mut draw = || {
            let axis = random_unit(&mut rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (axis, sign, random_unit(&mut rng))
        };
        let first = draw();
        let (axis, sign, dir) = if epoch == 0 { first } else { draw() };
        let r = UnitQuaternion::from_scaled_axis(axis * self.bias_rotation_deg.to_radians())
            .to_rotation_matrix()
            .into_inner();
        let s = 1.0 + sign * self.bias_scale;
        // About the scene center: p ↦ s·R·(p − c) + c + t.
        let t = SCENE_CENTER - s * (r * SCENE_CENTER) + dir * self.bias_translation;
        Sim3Transform::from_parts(s, r, t)
    }
}

/// Joint keyframe clouds from per-epoch clouds and their true frames.
///
/// Keyframe points are mapped into the world by the epoch transform, then
/// by the perturbation's per-epoch bias, and receive independent noise.
/// The noise for a point depends only on the seed, the epoch and the
/// point's position in the epoch cloud, so different keyframe budgets see
/// consistent joint predictions.
pub fn mock_joint_from_epochs(
    epoch_clouds: [&PointCloud; 2],
    epoch_transforms: &[Sim3Transform; 2],
    keyframes: &[KeyframeSet; 2],
    perturbation: &JointPerturbation,
) -> Result<JointReconstruction> {
    let mut out = Vec::with_capacity(2);
    for e in 0..2 {
        let cloud = epoch_clouds[e];
        let mut rng = ChaCha8Rng::seed_from_u64(perturbation.seed);
        rng.set_stream(e as u64 + 1);
        let noise: Vec<Vec3> = (0..cloud.len())
            .map(|_| gaussian3(&mut rng, perturbation.sigma))
            .collect();
        let jitter: Vec<Vec3> = (0..cloud.len())
            .map(|_| random_unit(&mut rng) * (perturbation.edge_jitter * rng.random_range(0.3..=1.0)))
            .collect();
        let world = perturbation.bias(e).compose(&epoch_transforms[e]);
        let idx = cloud.indices_in_frames(&keyframes[e].indices);
        if idx.is_empty() {
            return Err(Error::MisalignedInputs(format!(
                "epoch {} has no points in its keyframes",
                e + 1
            )));
        }
        let kf = cloud.select(&idx);
        let pts = idx
            .iter()
            .map(|&i| {
                let mut p = world.apply(&cloud.points()[i]) + noise[i];
                if cloud.confidence()[i] < OUTLIER_CONFIDENCE {
                    p += jitter[i];
                }
                p
            })
            .collect();
        let joint = PointCloud::new(pts, kf.confidence().to_vec())?
            .with_source_frames(kf.source_frames().unwrap_or_default().to_vec())?;
        out.push(joint);
    }
    let [a, b]: [PointCloud; 2] = out.try_into().expect("two epochs");
    Ok(JointReconstruction { epochs: [a, b], provenance: Provenance::SyntheticOracle })
}

pub fn mock_joint_inference(
    scene: &BiTemporalScene,
    keyframes: &[KeyframeSet; 2],
    perturbation: &JointPerturbation,
) -> Result<JointReconstruction> {
    mock_joint_from_epochs(
        [&scene.epochs[0].cloud, &scene.epochs[1].cloud],
        &scene.spec.epoch_transforms,
        keyframes,
        perturbation,
    )
}

/// Ray-cast depth maps of one epoch's geometry, in the epoch's private
/// frame. Pixels that miss everything get depth 0.
pub fn render_depth_frames(
    scene: &BiTemporalScene,
    epoch: usize,
    width: usize,
    height: usize,
) -> Result<Vec<CameraFrame>> {
    let scale = scene.spec.epoch_transforms[epoch].scale();
    let fx = 0.8 * width as f64;
    let k = Mat3::new(fx, 0.0, width as f64 / 2.0, 0.0, fx, height as f64 / 2.0, 0.0, 0.0, 1.0);
    let k_inv = k.try_inverse().expect("intrinsics are invertible");
    let boxes: Vec<&Aabb> = scene
        .geometry
        .static_boxes
        .iter()
        .chain(&scene.geometry.objects[epoch])
        .collect();
    let data = &scene.epochs[epoch];
    data.gt_trajectory
        .poses()
        .iter()
        .zip(data.trajectory.poses())
        .map(|(world_pose, private_pose)| {
            let c = world_pose.center();
            let r_cw = world_pose.rotation().transpose();
            let mut depth = vec![0.0f32; width * height];
            for row in 0..height {
                for col in 0..width {
                    let dir = r_cw * (k_inv * Vec3::new(col as f64, row as f64, 1.0));
                    let hit = boxes
                        .iter()
                        .filter_map(|b| b.ray_hit(&c, &dir))
                        .fold(f64::INFINITY, f64::min);
                    if hit.is_finite() {
                        // `dir` has unit camera-z, so the hit distance is the depth.
                        depth[row * width + col] = (hit / scale) as f32;
                    }
                }
            }
            let conf = depth.iter().map(|d| if *d > 0.0 { 0.9 } else { 0.0 }).collect();
            CameraFrame::new(k, private_pose.clone(), height, width, depth, conf)
        })
        .collect()
}
