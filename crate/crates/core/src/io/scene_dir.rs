//! Scene directories as written by the generator and read by the CLI.
//!
//! ```text
//! spec.json            scene spec
//! gt.json              epoch transforms, relative transform, world trajectories
//! e1/cloud.ply         epoch cloud in its private frame, with frame labels
//! e1/trajectory.json   cameras in the private frame
//! e1/labels.json       per-point changed / outlier flags
//! e1/bundle/           optional rendered depth bundle
//! joint/e1.ply         joint reconstruction of all frames (world frame)
//! ```
//!
//! An epoch directory without `cloud.ply` is ingested from its bundle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, read_json, write_json, FORMAT_VERSION};
use crate::cloud::PointCloud;
use crate::coarse::{JointReconstruction, Provenance};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geom::{backproject, Sim3Transform};
use crate::io::bundle::{read_depth_bundle, write_depth_bundle};
use crate::io::ply::{read_ply, write_ply, PlyEncoding};
use crate::synth::{render_depth_frames, BiTemporalScene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: String,
    pub epoch_transforms: [Sim3Transform; 2],
    pub gt_relative: Sim3Transform,
    pub trajectories: [Trajectory; 2],
}

impl GroundTruth {
    pub fn of_scene(scene: &BiTemporalScene) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            epoch_transforms: scene.spec.epoch_transforms.clone(),
            gt_relative: scene.spec.gt_relative.clone(),
            trajectories: [
                scene.epochs[0].gt_trajectory.clone(),
                scene.epochs[1].gt_trajectory.clone(),
            ],
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let gt: GroundTruth = read_json(path)?;
        check_version(path, &gt.format_version)?;
        Ok(gt)
    }
}

#[derive(Serialize, Deserialize)]
struct Labels {
    format_version: String,
    changed: Vec<bool>,
    outlier: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    format_version: String,
    poses: Trajectory,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `scene` with an optional all-frame joint reconstruction and
/// optional depth bundles of the given `(width, height)`.
pub fn write_scene_dir(
    scene: &BiTemporalScene,
    joint: Option<&JointReconstruction>,
    bundle_size: Option<(usize, usize)>,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    write_json(&dir.join("spec.json"), &scene.spec)?;
    write_json(&dir.join("gt.json"), &GroundTruth::of_scene(scene))?;
    for (e, data) in scene.epochs.iter().enumerate() {
        let sub = dir.join(format!("e{}", e + 1));
        create_dir(&sub)?;
        write_ply(&data.cloud, sub.join("cloud.ply"), PlyEncoding::BinaryLittleEndian)?;
        write_json(
            &sub.join("trajectory.json"),
            &TrajectoryFile { format_version: FORMAT_VERSION.into(), poses: data.trajectory.clone() },
        )?;
        write_json(
            &sub.join("labels.json"),
            &Labels {
                format_version: FORMAT_VERSION.into(),
                changed: data.changed.clone(),
                outlier: data.outlier.clone(),
            },
        )?;
        if let Some((w, h)) = bundle_size {
            write_depth_bundle(&render_depth_frames(scene, e, w, h)?, sub.join("bundle"))?;
        }
    }
    if let Some(joint) = joint {
        let sub = dir.join("joint");
        create_dir(&sub)?;
        for (e, cloud) in joint.epochs.iter().enumerate() {
            write_ply(cloud, sub.join(format!("e{}.ply", e + 1)), PlyEncoding::BinaryLittleEndian)?;
        }
    }
    Ok(())
}

/// One epoch as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochDir {
    pub cloud: PointCloud,
    pub trajectory: Option<Trajectory>,
    /// Per-point changed flags, when the directory has labels.
    pub changed: Option<Vec<bool>>,
}

pub fn read_epoch_dir(dir: impl AsRef<Path>) -> Result<EpochDir> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let ply = dir.join("cloud.ply");
    let cloud = if ply.exists() {
        read_ply(&ply)?
    } else if dir.join("bundle").is_dir() {
        let frames = read_depth_bundle(dir.join("bundle"))?;
        let clouds = frames
            .iter()
            .filter_map(|f| match backproject(f) {
                Err(Error::EmptyFrame) => None,
                other => Some(other),
            })
            .collect::<Result<Vec<_>>>()?;
        PointCloud::concat(&clouds)
    } else {
        return Err(Error::schema(&ply, "cloud", "epoch has neither cloud.ply nor bundle/"));
    };
    let tpath = dir.join("trajectory.json");
    let trajectory = if tpath.exists() {
        let t: TrajectoryFile = read_json(&tpath)?;
        check_version(&tpath, &t.format_version)?;
        Some(t.poses)
    } else {
        None
    };
    let lpath = dir.join("labels.json");
    let changed = if lpath.exists() {
        let l: Labels = read_json(&lpath)?;
        check_version(&lpath, &l.format_version)?;
        if l.changed.len() != cloud.len() {
            return Err(Error::schema(&lpath, "changed", format!(
                "{} labels for {} points", l.changed.len(), cloud.len()
            )));
        }
        Some(l.changed)
    } else {
        None
    };
    Ok(EpochDir { cloud, trajectory, changed })
}

/// Joint reconstruction stored as `e1.ply` / `e2.ply` in `dir`.
pub fn read_joint_dir(dir: impl AsRef<Path>) -> Result<JointReconstruction> {
    let dir = dir.as_ref();
    Ok(JointReconstruction {
        epochs: [read_ply(dir.join("e1.ply"))?, read_ply(dir.join("e2.ply"))?],
        provenance: Provenance::IngestedFile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn scene_round_trip() {
        let mut spec = SceneSpec::demo(3);
        spec.n_static = 1500;
        spec.n_frames_per_epoch = 4;
        let scene = generate_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene_dir(&scene, None, Some((8, 6)), dir.path()).unwrap();
        for e in 0..2 {
            let back = read_epoch_dir(dir.path().join(format!("e{}", e + 1))).unwrap();
            assert_eq!(back.cloud, scene.epochs[e].cloud);
            assert_eq!(back.trajectory.as_ref(), Some(&scene.epochs[e].trajectory));
            assert_eq!(back.changed.as_ref(), Some(&scene.epochs[e].changed));
            let frames = read_depth_bundle(dir.path().join(format!("e{}/bundle", e + 1))).unwrap();
            assert_eq!(frames, render_depth_frames(&scene, e, 8, 6).unwrap());
        }
        let gt = GroundTruth::read(dir.path().join("gt.json")).unwrap();
        assert_eq!(gt, GroundTruth::of_scene(&scene));
    }

    #[test]
    fn bundle_only_epoch_is_backprojected() {
        let mut spec = SceneSpec::random(4);
        spec.n_static = 500;
        spec.n_frames_per_epoch = 3;
        let scene = generate_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene_dir(&scene, None, Some((10, 8)), dir.path()).unwrap();
        let e1 = dir.path().join("e1");
        fs::remove_file(e1.join("cloud.ply")).unwrap();
        fs::remove_file(e1.join("labels.json")).unwrap();
        let back = read_epoch_dir(&e1).unwrap();
        assert!(!back.cloud.is_empty());
        let frames = back.cloud.source_frames().unwrap();
        assert!(frames.iter().all(|f| (1..=3).contains(f)));
    }

    #[test]
    fn missing_epoch_dir() {
        assert!(matches!(read_epoch_dir("/nonexistent/e1"), Err(Error::Io { .. })));
    }
}
