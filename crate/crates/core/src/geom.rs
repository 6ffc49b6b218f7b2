//! Similarity / rigid transforms, the closed-form Umeyama solver and depth
//! back-projection.

use nalgebra::{Matrix3, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;

/// Frobenius tolerance for `RᵀR = I`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Ratio below which the second principal variance of a point set counts as
/// zero (collinear / coincident input).
pub const DEGENERACY_RATIO: f64 = 1e-12;

fn check_rotation(r: &Mat3) -> Result<()> {
    let err = (r.transpose() * r - Mat3::identity()).norm();
    if !err.is_finite() || err > ROTATION_TOLERANCE {
        return Err(Error::InvalidTransform(format!(
            "rotation not orthonormal (|RᵀR - I| = {err:e})"
        )));
    }
    if r.determinant() <= 0.0 {
        return Err(Error::InvalidTransform("rotation has determinant <= 0".into()));
    }
    Ok(())
}

/// `p ↦ scale · rotation · p + translation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Sim3Repr", into = "Sim3Repr")]
pub struct Sim3Transform {
    scale: f64,
    rotation: Mat3,
    translation: Vec3,
}

impl Sim3Transform {
    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!("scale {scale} is not positive")));
        }
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("translation is not finite".into()));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_parts(scale: f64, rotation: Mat3, translation: Vec3) -> Self {
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(1.0, Mat3::identity(), Vec3::zeros())
    }

    pub fn from_quaternion(scale: f64, q: [f64; 4], translation: Vec3) -> Result<Self> {
        Self::new(scale, rotation_from_quaternion(q)?, translation)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Same scale and rotation, new translation.
    pub fn with_translation(&self, translation: Vec3) -> Self {
        Self {
            translation,
            ..self.clone()
        }
    }

    /// Linear part `s·R`.
    pub fn linear(&self) -> Mat3 {
        self.rotation * self.scale
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Self::from_parts(inv_s, rt, -(rt * self.translation) * inv_s)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Sim3Transform) -> Self {
        Self::from_parts(
            self.scale * other.scale,
            self.rotation * other.rotation,
            self.scale * (self.rotation * other.translation) + self.translation,
        )
    }

    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        [q.w, q.i, q.j, q.k]
    }
}

/// Relative transform mapping frame 1 into frame 2, given each frame's
/// transform into a common frame: `t2⁻¹ ∘ t1`.
pub fn compose_relative(t1: &Sim3Transform, t2: &Sim3Transform) -> Sim3Transform {
    let r2t = t2.rotation.transpose();
    Sim3Transform::from_parts(
        t1.scale / t2.scale,
        r2t * t1.rotation,
        (r2t * (t1.translation - t2.translation)) / t2.scale,
    )
}

pub fn apply_transform(t: &Sim3Transform, cloud: &PointCloud) -> PointCloud {
    cloud.map_points(|p| t.apply(p))
}

/// Angle of `a ᵀ b` in degrees.
pub fn rotation_angle_deg(a: &Mat3, b: &Mat3) -> f64 {
    let r = a.transpose() * b;
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Unit quaternion `[w, x, y, z]` to a rotation matrix. Non-unit input is
/// normalized.
pub fn rotation_from_quaternion(q: [f64; 4]) -> Result<Mat3> {
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = quat.norm();
    if !(norm.is_finite() && norm > 1e-12) {
        return Err(Error::InvalidTransform(format!("quaternion {q:?} has zero norm")));
    }
    if (norm - 1.0).abs() > 1e-6 {
        log::warn!("renormalizing quaternion with norm {norm}");
    }
    Ok(UnitQuaternion::from_quaternion(quat)
        .to_rotation_matrix()
        .into_inner())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RotationRepr {
    Matrix { rotation: [[f64; 3]; 3] },
    Quaternion { quaternion: [f64; 4] },
}

impl RotationRepr {
    fn to_matrix(&self) -> Result<Mat3> {
        match self {
            RotationRepr::Matrix { rotation } => Ok(Mat3::from_fn(|r, c| rotation[r][c])),
            RotationRepr::Quaternion { quaternion } => rotation_from_quaternion(*quaternion),
        }
    }

    fn from_matrix(m: &Mat3) -> Self {
        RotationRepr::Matrix {
            rotation: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Sim3Repr {
    scale: f64,
    #[serde(flatten)]
    rotation: RotationRepr,
    translation: [f64; 3],
}

impl TryFrom<Sim3Repr> for Sim3Transform {
    type Error = Error;
    fn try_from(r: Sim3Repr) -> Result<Self> {
        Sim3Transform::new(r.scale, r.rotation.to_matrix()?, Vec3::from(r.translation))
    }
}

impl From<Sim3Transform> for Sim3Repr {
    fn from(t: Sim3Transform) -> Self {
        Sim3Repr {
            scale: t.scale,
            rotation: RotationRepr::from_matrix(&t.rotation),
            translation: t.translation.into(),
        }
    }
}

/// World-to-camera extrinsics `p_cam = R·p + t` of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct SE3Pose {
    rotation: Mat3,
    translation: Vec3,
    frame_index: u32,
}

impl SE3Pose {
    pub fn new(rotation: Mat3, translation: Vec3, frame_index: u32) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
            frame_index,
        })
    }

    /// Pose of a camera at `center` with world-to-camera rotation `rotation`.
    pub fn from_center(rotation: Mat3, center: Vec3, frame_index: u32) -> Result<Self> {
        Self::new(rotation, -(rotation * center), frame_index)
    }

    pub fn identity(frame_index: u32) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            frame_index,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn frame_index(&self) -> u32 {
        self.frame_index
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    frame_index: u32,
    #[serde(flatten)]
    rotation: RotationRepr,
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for SE3Pose {
    type Error = Error;
    fn try_from(r: PoseRepr) -> Result<Self> {
        SE3Pose::new(r.rotation.to_matrix()?, Vec3::from(r.translation), r.frame_index)
    }
}

impl From<SE3Pose> for PoseRepr {
    fn from(p: SE3Pose) -> Self {
        PoseRepr {
            frame_index: p.frame_index,
            rotation: RotationRepr::from_matrix(&p.rotation),
            translation: p.translation.into(),
        }
    }
}

/// One camera view: intrinsics, pose and row-major depth/confidence grids.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraFrame {
    intrinsics: Mat3,
    pose: SE3Pose,
    height: usize,
    width: usize,
    depth: Vec<f32>,
    confidence: Vec<f32>,
}

impl CameraFrame {
    pub fn new(
        intrinsics: Mat3,
        pose: SE3Pose,
        height: usize,
        width: usize,
        depth: Vec<f32>,
        confidence: Vec<f32>,
    ) -> Result<Self> {
        check_intrinsics(&intrinsics)?;
        let n = height * width;
        if depth.len() != n || confidence.len() != n {
            return Err(Error::MisalignedInputs(format!(
                "{height}x{width} frame with {} depths and {} confidences",
                depth.len(),
                confidence.len()
            )));
        }
        if depth.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidConfig("negative depth".into()));
        }
        if confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidConfig("confidence outside [0, 1]".into()));
        }
        Ok(Self {
            intrinsics,
            pose,
            height,
            width,
            depth,
            confidence,
        })
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.intrinsics
    }

    pub fn pose(&self) -> &SE3Pose {
        &self.pose
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn confidence(&self) -> &[f32] {
        &self.confidence
    }

    /// Pixel `(u, v)` and depth of a world point seen by this camera.
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        project(&self.intrinsics, &self.pose, p)
    }
}

pub fn check_intrinsics(k: &Mat3) -> Result<()> {
    if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
        return Err(Error::InvalidConfig(
            "intrinsics need positive focal and K[2][2] entries".into(),
        ));
    }
    if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
        return Err(Error::InvalidConfig("intrinsics must be upper triangular".into()));
    }
    Ok(())
}

pub fn project(intrinsics: &Mat3, pose: &SE3Pose, p: &Vec3) -> (f64, f64, f64) {
    let cam = pose.rotation * p + pose.translation;
    let h = intrinsics * cam;
    (h.x / h.z, h.y / h.z, cam.z)
}

/// Lifts every pixel with positive depth into world coordinates,
/// `p = R⁻¹(D(u)·K⁻¹ũ − t)`, with `ũ = (column, row, 1)`.
pub fn backproject(frame: &CameraFrame) -> Result<PointCloud> {
    let k_inv = frame
        .intrinsics
        .try_inverse()
        .ok_or_else(|| Error::InvalidConfig("singular intrinsics".into()))?;
    let r_inv = frame.pose.rotation.transpose();
    let t = frame.pose.translation;
    let mut points = Vec::new();
    let mut conf = Vec::new();
    for row in 0..frame.height {
        for col in 0..frame.width {
            let i = row * frame.width + col;
            let d = f64::from(frame.depth[i]);
            if !(d > 0.0 && d.is_finite()) {
                continue;
            }
            let ray = k_inv * Vec3::new(col as f64, row as f64, 1.0);
            points.push(r_inv * (ray * d - t));
            conf.push(f64::from(frame.confidence[i]));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let n = points.len();
    PointCloud::new(points, conf)?.with_source_frames(vec![frame.pose.frame_index; n])
}

/// Closed-form least-squares similarity transform mapping `source` onto
/// `target` (Umeyama). Weights default to uniform.
///
/// Fails with [`Error::DegenerateInput`] for fewer than three pairs or a
/// source set whose second principal variance vanishes.
pub fn umeyama(source: &[Vec3], target: &[Vec3], weights: Option<&[f64]>) -> Result<Sim3Transform> {
    let n = source.len();
    if n != target.len() {
        return Err(Error::MisalignedInputs(format!(
            "{n} source points but {} target points",
            target.len()
        )));
    }
    if n < 3 {
        return Err(Error::DegenerateInput(format!("{n} correspondences, need >= 3")));
    }
    let w_sum = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::MisalignedInputs(format!("{} weights for {n} pairs", w.len())));
            }
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::DegenerateInput("weights must be finite and >= 0".into()));
            }
            w.iter().sum::<f64>()
        }
        None => n as f64,
    };
    if !(w_sum > 0.0) {
        return Err(Error::DegenerateInput("weights sum to zero".into()));
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]) / w_sum;

    let mut mu_s = Vec3::zeros();
    let mut mu_t = Vec3::zeros();
    for i in 0..n {
        let w = weight(i);
        mu_s += source[i] * w;
        mu_t += target[i] * w;
    }

    let mut cov_ss = Mat3::zeros();
    let mut cov_ts = Mat3::zeros();
    for i in 0..n {
        let w = weight(i);
        let xs = source[i] - mu_s;
        let xt = target[i] - mu_t;
        cov_ss += (xs * xs.transpose()) * w;
        cov_ts += (xt * xs.transpose()) * w;
    }
    let var_s = cov_ss.trace();

    let mut spread = SymmetricEigen::new(cov_ss).eigenvalues;
    spread
        .as_mut_slice()
        .sort_unstable_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] < DEGENERACY_RATIO * spread[0] {
        return Err(Error::DegenerateInput(
            "source points are coincident or collinear".into(),
        ));
    }

    let svd = cov_ts.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let sv = svd.singular_values;
    let mut sign = Vec3::repeat(1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // Flip the direction with the smallest singular value.
        let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
        sign[smallest] = -1.0;
    }
    let rotation = u * Mat3::from_diagonal(&sign) * v_t;
    let scale = sv.component_mul(&sign).sum() / var_s;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateInput(format!("estimated scale {scale} is not positive")));
    }
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(Sim3Transform::from_parts(scale, rotation, translation))
}

/// Weighted sum of squared residuals `Σ wᵢ‖T(sᵢ) − tᵢ‖²`.
pub fn weighted_residual(
    t: &Sim3Transform,
    source: &[Vec3],
    target: &[Vec3],
    weights: Option<&[f64]>,
) -> f64 {
    source
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (s, d))| weights.map_or(1.0, |w| w[i]) * (t.apply(s) - d).norm_squared())
        .sum()
}
