//! Scene voxel grid: `scene_grid.toml` with the grid geometry and
//! `scene.label` with one u16 LE class per voxel.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::densify::SceneGrid;
use crate::error::{Error, Result};
use crate::geometry::{GridAnchor, GridSpec, Point3};

use super::sample::{decode_labels, encode_labels};
use super::{read_bytes, read_text, write_bytes};

pub const SCENE_META: &str = "scene_grid.toml";
pub const SCENE_LABELS: &str = "scene.label";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneMeta {
    dims: [usize; 3],
    voxel_size_m: f64,
    origin_m: [f64; 3],
}

pub fn write_scene_grid(dir: &Path, scene: &SceneGrid) -> Result<()> {
    let GridAnchor::World { origin } = scene.spec.anchor else {
        return Err(Error::InvalidInput("scene grid must be world anchored".into()));
    };
    let meta = SceneMeta { dims: scene.spec.dims, voxel_size_m: scene.spec.voxel_size, origin_m: [origin.x, origin.y, origin.z] };
    let text = toml::to_string(&meta).map_err(|e| Error::format(dir.join(SCENE_META), e.to_string()))?;
    write_bytes(&dir.join(SCENE_META), text.as_bytes())?;
    write_bytes(&dir.join(SCENE_LABELS), &encode_labels(scene.labels()))
}

pub fn read_scene_grid(dir: &Path) -> Result<SceneGrid> {
    let meta_path = dir.join(SCENE_META);
    let meta: SceneMeta =
        toml::from_str(&read_text(&meta_path)?).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    let [x, y, z] = meta.origin_m;
    let spec = GridSpec::world(meta.dims, meta.voxel_size_m, Point3::new(x, y, z))
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    let label_path = dir.join(SCENE_LABELS);
    let labels = decode_labels(&label_path, &read_bytes(&label_path)?, spec.len())?;
    SceneGrid::from_labels(spec, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_identical() {
        let spec = GridSpec::world([3, 2, 4], 0.25, Point3::new(-1.5, 0.1, 7.0)).unwrap();
        let labels = (0..spec.len() as u16).map(|i| i % 5).collect();
        let scene = SceneGrid::from_labels(spec, labels).unwrap();
        let a = tempfile::tempdir().unwrap();
        write_scene_grid(a.path(), &scene).unwrap();
        let back = read_scene_grid(a.path()).unwrap();
        assert_eq!(back.spec, scene.spec);
        assert_eq!(back.labels(), scene.labels());
        let b = tempfile::tempdir().unwrap();
        write_scene_grid(b.path(), &back).unwrap();
        for f in [SCENE_META, SCENE_LABELS] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }
}
