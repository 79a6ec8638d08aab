//! File formats: point clouds, cameras, rasters, samples, scene grids and
//! the pipeline configuration.

pub mod cameras;
pub mod config;
pub mod ply;
pub mod raster;
pub mod sample;
pub mod scene;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use cameras::{read_cameras, write_cameras};
pub use config::PipelineConfig;
pub use ply::{read_point_cloud, write_point_cloud, PlyFormat};
pub use raster::{read_depth, read_mask, write_depth, write_mask};
pub use sample::{read_sample, write_sample, SampleRecord};
pub use scene::{read_scene_grid, write_scene_grid};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Pack booleans 8 per byte, most significant bit first.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

/// Inverse of [`pack_bits`] for `len` values.
pub fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect()
}
