//! Semantic occupancy ground truth from a metric point cloud, calibrated
//! camera frames and sparse 2D annotations.
//!
//! Stages, in pipeline order: [`selection`] picks the frames to annotate,
//! [`lifting`] transfers their masks to the points, [`densify`] builds the
//! scene voxel grid, and [`gt`] cuts per-frame samples with their invalid,
//! surface and occluded masks. [`synth`] generates verifiable synthetic
//! scenes, [`io`] holds the file formats and [`cli`] the command line.

pub mod cli;
pub mod densify;
pub mod error;
pub mod geometry;
pub mod gt;
pub mod io;
pub mod lifting;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod raster;
pub mod selection;
pub mod spatial;
pub mod synth;
pub mod taxonomy;
pub mod validate;

pub use error::{Error, Result};
pub use geometry::{CameraFrame, CameraIntrinsics, GridAnchor, GridSpec, Point3, Pose, VoxelIndex};
pub use taxonomy::{ClassGroup, ClassId, Taxonomy};
