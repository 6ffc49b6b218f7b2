//! Depth bundles: one directory of per-frame camera JSON plus flat f32
//! depth and confidence grids, each grid with a small JSON header.
//!
//! ```text
//! frame_0001.json             {"format_version", "intrinsics", "pose"}
//! frame_0001.depth.bin/.json  grid + {"height", "width", "endianness", "dtype"}
//! frame_0001.confidence.bin/.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_version, read_json, write_json, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::geom::{CameraFrame, Mat3, SE3Pose};

#[derive(Serialize, Deserialize)]
struct FrameFile {
    format_version: String,
    intrinsics: [[f64; 3]; 3],
    pose: SE3Pose,
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    format_version: String,
    height: usize,
    width: usize,
    endianness: String,
    dtype: String,
}

fn frame_stem(frame_index: u32) -> String {
    format!("frame_{frame_index:04}")
}

fn write_grid(dir: &Path, name: &str, height: usize, width: usize, data: &[f32]) -> Result<()> {
    let header = GridHeader {
        format_version: FORMAT_VERSION.into(),
        height,
        width,
        endianness: "little".into(),
        dtype: "float32".into(),
    };
    write_json(&dir.join(format!("{name}.json")), &header)?;
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let bin = dir.join(format!("{name}.bin"));
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
}

pub fn write_depth_bundle(frames: &[CameraFrame], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        let stem = frame_stem(f.pose().frame_index());
        let k = f.intrinsics();
        let meta = FrameFile {
            format_version: FORMAT_VERSION.into(),
            intrinsics: std::array::from_fn(|r| std::array::from_fn(|c| k[(r, c)])),
            pose: f.pose().clone(),
        };
        write_json(&dir.join(format!("{stem}.json")), &meta)?;
        write_grid(dir, &format!("{stem}.depth"), f.height(), f.width(), f.depth())?;
        write_grid(dir, &format!("{stem}.confidence"), f.height(), f.width(), f.confidence())?;
    }
    Ok(())
}

fn read_grid(dir: &Path, name: &str, field: &str) -> Result<(usize, usize, Vec<f32>)> {
    let header_path = dir.join(format!("{name}.json"));
    let bin = dir.join(format!("{name}.bin"));
    if !header_path.exists() || !bin.exists() {
        return Err(Error::schema(&bin, field, "grid file or header is missing"));
    }
    let header: GridHeader = read_json(&header_path)?;
    check_version(&header_path, &header.format_version)?;
    if header.endianness != "little" {
        return Err(Error::schema(&header_path, "endianness", format!(
            "expected `little`, found `{}`", header.endianness
        )));
    }
    if header.dtype != "float32" {
        return Err(Error::schema(&header_path, "dtype", format!(
            "expected `float32`, found `{}`", header.dtype
        )));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expect = header.height * header.width * 4;
    if bytes.len() != expect {
        return Err(Error::schema(&bin, field, format!(
            "{} bytes, header {}x{} needs {expect}",
            bytes.len(),
            header.height,
            header.width
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header.height, header.width, data))
}

fn read_frame(dir: &Path, meta_path: &Path, stem: &str) -> Result<CameraFrame> {
    let meta: FrameFile = read_json(meta_path)?;
    check_version(meta_path, &meta.format_version)?;
    let (h, w, depth) = read_grid(dir, &format!("{stem}.depth"), "depth")?;
    let (hc, wc, conf) = read_grid(dir, &format!("{stem}.confidence"), "confidence")?;
    if (h, w) != (hc, wc) {
        return Err(Error::schema(
            dir.join(format!("{stem}.confidence.json")),
            "height/width",
            format!("confidence grid is {hc}x{wc}, depth grid is {h}x{w}"),
        ));
    }
    let k = Mat3::from_fn(|r, c| meta.intrinsics[r][c]);
    CameraFrame::new(k, meta.pose, h, w, depth, conf)
        .map_err(|e| Error::schema(meta_path, "intrinsics", e.to_string()))
}

/// Frames of a bundle directory, ordered by frame index.
pub fn read_depth_bundle(dir: impl AsRef<Path>) -> Result<Vec<CameraFrame>> {
    let dir = dir.as_ref();
    let mut metas: Vec<(PathBuf, String)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            let name = path.file_name()?.to_str()?;
            let stem = name.strip_suffix(".json")?;
            (stem.starts_with("frame_") && !stem.contains('.')).then(|| (path.clone(), stem.to_string()))
        })
        .collect();
    metas.sort();
    let mut frames = metas
        .iter()
        .map(|(path, stem)| read_frame(dir, path, stem))
        .collect::<Result<Vec<_>>>()?;
    frames.sort_by_key(|f| f.pose().frame_index());
    if let Some(w) = frames.windows(2).find(|w| w[0].pose().frame_index() == w[1].pose().frame_index()) {
        return Err(Error::schema(dir, "frame_index", format!(
            "frame {} appears twice", w[0].pose().frame_index()
        )));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: u32, h: usize, w: usize) -> CameraFrame {
        let k = Mat3::new(50.0, 0.0, 8.0, 0.0, 50.0, 6.0, 0.0, 0.0, 1.0);
        let depth = (0..h * w).map(|i| 1.0 + i as f32 * 0.01).collect();
        let conf = (0..h * w).map(|i| (i % 7) as f32 / 7.0).collect();
        CameraFrame::new(k, SE3Pose::identity(index), h, w, depth, conf).unwrap()
    }

    #[test]
    fn round_trip_in_frame_order() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![frame(2, 4, 5), frame(1, 4, 5), frame(10, 3, 2)];
        write_depth_bundle(&frames, dir.path()).unwrap();
        let back = read_depth_bundle(dir.path()).unwrap();
        let mut expect = frames.clone();
        expect.sort_by_key(|f| f.pose().frame_index());
        assert_eq!(back, expect);
    }

    #[test]
    fn missing_confidence_grid() {
        let dir = tempfile::tempdir().unwrap();
        write_depth_bundle(&[frame(1, 2, 2)], dir.path()).unwrap();
        fs::remove_file(dir.path().join("frame_0001.confidence.bin")).unwrap();
        match read_depth_bundle(dir.path()) {
            Err(Error::Schema { field, file, .. }) => {
                assert_eq!(field, "confidence");
                assert!(file.ends_with("frame_0001.confidence.bin"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_depth_bundle(&[frame(1, 2, 3)], dir.path()).unwrap();
        let other = dir.path().join("other");
        write_depth_bundle(&[frame(1, 3, 2)], &other).unwrap();
        for ext in ["bin", "json"] {
            let name = format!("frame_0001.confidence.{ext}");
            fs::copy(other.join(&name), dir.path().join(&name)).unwrap();
        }
        assert!(matches!(read_depth_bundle(dir.path()), Err(Error::Schema { .. })));
    }

    #[test]
    fn unknown_major_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_depth_bundle(&[frame(1, 2, 2)], dir.path()).unwrap();
        let p = dir.path().join("frame_0001.json");
        let text = fs::read_to_string(&p).unwrap().replace("\"1.0\"", "\"2.0\"");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_depth_bundle(dir.path()), Err(Error::UnsupportedVersion { .. })));
    }
}
