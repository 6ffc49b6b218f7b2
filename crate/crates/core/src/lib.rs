//! Training-free registration of two reconstructions of the same scene
//! captured at different times, followed by change detection.
//!
//! Each epoch lives in its own similarity frame. A joint reconstruction of
//! a few keyframes from both epochs provides a shared frame: per-epoch
//! Umeyama fits against it compose into a coarse epoch-1 → epoch-2 Sim(3).
//! A single translation-only refinement on a purified static set follows,
//! kept only if it lowers the median nearest-neighbor residual. Changes are
//! bidirectional nearest-neighbor distances above a scale-relative
//! threshold.

pub mod change;
pub mod cloud;
pub mod coarse;
pub mod config;
pub mod error;
pub mod eval;
pub mod fine;
pub mod geom;
pub mod index;
pub mod io;
pub mod keyframes;
pub mod pipeline;
pub mod synth;

pub use change::{ChangeMap, ChangeStats};
pub use cloud::{PointCloud, Rgb, Vec3};
pub use coarse::{EpochAlignment, JointReconstruction, Provenance};
pub use config::{Mode, PipelineConfig};
pub use error::{Error, Result};
pub use eval::{MetricsReport, TransformError, Trajectory};
pub use fine::FineResult;
pub use geom::{CameraFrame, Mat3, SE3Pose, Sim3Transform};
pub use index::{Neighbor, SpatialIndex};
pub use keyframes::KeyframeSet;
pub use pipeline::{register, EpochInput, RegistrationOutput};
pub use synth::{BiTemporalScene, SceneSpec};
