//! Per-frame sample files in a flat directory: `<id>.label` holds one u16 LE
//! per voxel, `<id>.invalid`, `<id>.surface` and `<id>.occluded` are bit
//! packed MSB first, `<id>.depth` is an optional raw depth raster. Ids are
//! zero padded to six digits.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::gt::{BitVolume, FrameGrid, GtSample, MaskVolume};
use crate::taxonomy::ClassId;

use super::raster::{read_depth, write_depth};
use super::{pack_bits, read_bytes, unpack_bits, write_bytes};

pub type SampleRecord = GtSample;

pub const MASK_KINDS: [&str; 3] = ["invalid", "surface", "occluded"];

pub fn sample_path(dir: &Path, id: u32, ext: &str) -> PathBuf {
    dir.join(format!("{id:06}.{ext}"))
}

pub fn encode_labels(labels: &[ClassId]) -> Vec<u8> {
    labels.iter().flat_map(|c| c.to_le_bytes()).collect()
}

pub fn decode_labels(path: &Path, bytes: &[u8], len: usize) -> Result<Vec<ClassId>> {
    if bytes.len() != len * 2 {
        return Err(Error::format(path, format!("expected {} label bytes, got {}", len * 2, bytes.len())));
    }
    Ok(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
}

fn read_bits(path: &Path, dims: [usize; 3]) -> Result<BitVolume> {
    let len = dims.iter().product::<usize>();
    let bytes = read_bytes(path)?;
    if bytes.len() != len.div_ceil(8) {
        return Err(Error::format(path, format!("expected {} mask bytes, got {}", len.div_ceil(8), bytes.len())));
    }
    Ok(BitVolume { dims, bits: unpack_bits(&bytes, len) })
}

pub fn write_sample(record: &SampleRecord, dir: &Path) -> Result<()> {
    let id = record.grid.frame_id;
    let dims = record.grid.spec.dims;
    for m in [&record.masks.invalid, &record.masks.surface, &record.masks.occluded] {
        if m.dims != dims {
            return Err(Error::DimensionMismatch { expected: format!("{dims:?}"), actual: format!("{:?}", m.dims) });
        }
    }
    write_bytes(&sample_path(dir, id, "label"), &encode_labels(&record.grid.labels))?;
    let masks = [&record.masks.invalid, &record.masks.surface, &record.masks.occluded];
    for (kind, m) in MASK_KINDS.iter().zip(masks) {
        write_bytes(&sample_path(dir, id, kind), &pack_bits(&m.bits))?;
    }
    if let Some(depth) = &record.depth {
        write_depth(&sample_path(dir, id, "depth"), depth)?;
    }
    Ok(())
}

/// Read sample `id` written for frame grids of `spec`. A missing depth file
/// yields `depth: None`.
pub fn read_sample(dir: &Path, id: u32, spec: &GridSpec) -> Result<SampleRecord> {
    let label_path = sample_path(dir, id, "label");
    let labels = decode_labels(&label_path, &read_bytes(&label_path)?, spec.len())?;
    let grid = FrameGrid { frame_id: id, spec: *spec, labels };
    let invalid = read_bits(&sample_path(dir, id, "invalid"), spec.dims)?;
    let surface = read_bits(&sample_path(dir, id, "surface"), spec.dims)?;
    let occluded = read_bits(&sample_path(dir, id, "occluded"), spec.dims)?;
    let depth_path = sample_path(dir, id, "depth");
    let depth = if depth_path.exists() { Some(read_depth(&depth_path)?) } else { None };
    Ok(GtSample { grid, masks: MaskVolume { invalid, surface, occluded }, depth })
}

/// Frame ids with a `.label` file in `dir`, ascending.
pub fn list_samples(dir: &Path) -> Result<Vec<u32>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "label") {
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VoxelIndex;

    fn record(labels: Vec<ClassId>, surface: Vec<bool>) -> SampleRecord {
        let spec = GridSpec::camera([2, 2, 2], 0.5, 0.5).unwrap();
        let dims = spec.dims;
        GtSample {
            grid: FrameGrid { frame_id: 4, spec, labels },
            masks: MaskVolume {
                invalid: BitVolume::zeros(dims),
                surface: BitVolume { dims, bits: surface },
                occluded: BitVolume::zeros(dims),
            },
            depth: None,
        }
    }

    #[test]
    fn all_zero_golden_bytes() {
        let dir = tempfile::tempdir().unwrap();
        write_sample(&record(vec![0; 8], vec![false; 8]), dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("000004.label")).unwrap(), vec![0u8; 16]);
        for kind in MASK_KINDS {
            assert_eq!(std::fs::read(sample_path(dir.path(), 4, kind)).unwrap(), vec![0x00]);
        }
    }

    #[test]
    fn single_voxel_golden_bytes() {
        let mut labels = vec![0; 8];
        let mut surface = vec![false; 8];
        let spec = GridSpec::camera([2, 2, 2], 0.5, 0.5).unwrap();
        let i = spec.linear(VoxelIndex::new(0, 0, 0));
        labels[i] = 7;
        surface[i] = true;
        let dir = tempfile::tempdir().unwrap();
        let rec = record(labels, surface);
        write_sample(&rec, dir.path()).unwrap();
        let label = std::fs::read(dir.path().join("000004.label")).unwrap();
        assert_eq!(&label[..2], &[0x07, 0x00]);
        assert_eq!(std::fs::read(dir.path().join("000004.surface")).unwrap(), vec![0x80]);
        assert_eq!(read_sample(dir.path(), 4, &spec).unwrap(), rec);
    }

    #[test]
    fn bit_order_is_msb_first_and_padded() {
        let bits: Vec<bool> = (0..11).map(|i| i == 1 || i == 8 || i == 10).collect();
        let packed = pack_bits(&bits);
        assert_eq!(packed, vec![0b0100_0000, 0b1010_0000]);
        assert_eq!(unpack_bits(&packed, 11), bits);
    }

    #[test]
    fn short_file_and_dims_mismatch_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record(vec![0; 8], vec![false; 8]);
        write_sample(&rec, dir.path()).unwrap();
        let bigger = GridSpec::camera([2, 2, 4], 0.5, 0.5).unwrap();
        assert!(matches!(read_sample(dir.path(), 4, &bigger), Err(Error::Format { .. })));
        std::fs::write(dir.path().join("000004.label"), [0u8; 15]).unwrap();
        assert!(matches!(read_sample(dir.path(), 4, &rec.grid.spec), Err(Error::Format { .. })));
        assert_eq!(list_samples(dir.path()).unwrap(), vec![4]);
    }
}
