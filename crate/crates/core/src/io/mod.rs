//! On-disk formats: PLY clouds, depth bundles, scene directories and run
//! reports. Every JSON file carries a `format_version`; readers accept any
//! `1.x`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub mod bundle;
pub mod ply;
pub mod report;
pub mod scene_dir;

pub use bundle::{read_depth_bundle, write_depth_bundle};
pub use ply::{encode_ply, parse_ply, read_ply, write_ply, PlyEncoding};
pub use report::RunReport;
pub use scene_dir::{read_epoch_dir, write_scene_dir, EpochDir, GroundTruth};

pub const FORMAT_VERSION: &str = "1.0";

pub(crate) fn check_version(file: &Path, found: &str) -> Result<()> {
    let major = FORMAT_VERSION.split('.').next();
    if found.split('.').next() != major {
        return Err(Error::UnsupportedVersion {
            file: file.to_path_buf(),
            found: found.to_string(),
        });
    }
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
