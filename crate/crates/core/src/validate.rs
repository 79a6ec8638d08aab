//! Invariant suite for ground-truth samples.

use crate::densify::SceneGrid;
use crate::error::{Error, Result};
use crate::geometry::{CameraFrame, CameraIntrinsics, GridSpec, Pose, VoxelIndex};
use crate::gt::{frustum_cull, invalid_mask, occluded_mask, render_depth, surface_mask, BitVolume, FrameGrid, GtParams, GtSample};
use crate::taxonomy::{Taxonomy, EMPTY};

/// One broken invariant in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub frame_id: u32,
    pub invariant: &'static str,
    /// Offending voxels or pixels.
    pub count: usize,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "frame {}: {} ({} elements)", self.frame_id, self.invariant, self.count)
    }
}

fn mismatches(a: &BitVolume, b: &BitVolume) -> usize {
    a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count()
}

fn outside_labels(mask: &BitVolume, grid: &FrameGrid) -> usize {
    mask.bits.iter().zip(&grid.labels).filter(|(&m, &c)| m && c == EMPTY).count()
}

/// Check one sample against its frame. With `scene`, also check that the
/// labels are the frustum cull of the scene grid.
pub fn check_sample(
    sample: &GtSample,
    frame: &CameraFrame,
    params: &GtParams,
    taxonomy: &Taxonomy,
    scene: Option<&SceneGrid>,
) -> Result<Vec<Violation>> {
    let grid = &sample.grid;
    let m = &sample.masks;
    if grid.spec != params.spec {
        return Err(Error::DimensionMismatch { expected: format!("{:?}", params.spec), actual: format!("{:?}", grid.spec) });
    }
    let mut out = Vec::new();
    let mut push = |invariant: &'static str, count: usize| {
        if count > 0 {
            out.push(Violation { frame_id: grid.frame_id, invariant, count });
        }
    };
    push("label outside taxonomy", grid.labels.iter().filter(|&&c| c != EMPTY && !taxonomy.contains(c)).count());
    let invalid = invalid_mask(frame, params.d_min, params.d_max, &params.spec);
    push("invalid mask differs from frustum complement", mismatches(&m.invalid, &invalid));
    push("label set on invalid voxel", m.invalid.bits.iter().zip(&grid.labels).filter(|(&i, &c)| i && c != EMPTY).count());
    push("surface bit on empty voxel", outside_labels(&m.surface, grid));
    push("surface mask differs from 6-neighborhood boundary", mismatches(&m.surface, &surface_mask(grid)));
    push("occluded bit on empty voxel", outside_labels(&m.occluded, grid));
    push("occluded mask differs from ray traversal", mismatches(&m.occluded, &occluded_mask(grid, frame, params.ray_stride)?));
    if let Some(depth) = &sample.depth {
        let expect = render_depth(grid, frame)?;
        push("depth differs from first hits", depth.data().iter().zip(expect.data()).filter(|(a, b)| a != b).count());
    }
    if let Some(scene) = scene {
        let culled = frustum_cull(scene, frame, params.d_min, params.d_max, &params.spec)?;
        push("labels differ from frustum cull of scene", culled.labels.iter().zip(&grid.labels).filter(|(a, b)| a != b).count());
    }
    Ok(out)
}

/// Built-in reference cases: the shell of a solid cube and two voxels
/// stacked along one ray.
pub fn self_test() -> Result<()> {
    let spec = GridSpec::camera([9, 9, 9], 0.5, 0.5)?;
    let mut cube = FrameGrid::empty(0, spec);
    for i in 2..7 {
        for j in 2..7 {
            for k in 2..7 {
                cube.set(VoxelIndex::new(i, j, k), 1);
            }
        }
    }
    let shell = surface_mask(&cube).count();
    if shell != 98 {
        return Err(Error::Invariant(format!("self-test: 5^3 cube shell has {shell} voxels, expected 98")));
    }

    let spec = GridSpec::camera([8, 4, 4], 0.5, 0.5)?;
    let frame = CameraFrame { id: 0, intrinsics: CameraIntrinsics::new(32.0, 32.0, 16.0, 16.0, 32, 32)?, pose: Pose::identity() };
    let mut stack = FrameGrid::empty(0, spec);
    let (near, far) = (VoxelIndex::new(2, 2, 2), VoxelIndex::new(5, 2, 2));
    stack.set(near, 1);
    stack.set(far, 1);
    let occ = occluded_mask(&stack, &frame, 1)?;
    if occ.bits[spec.linear(near)] || !occ.bits[spec.linear(far)] {
        return Err(Error::Invariant("self-test: stacked voxels not resolved near visible, far occluded".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gt::sample_frame;
    use crate::geometry::Point3;

    fn setup() -> (SceneGrid, CameraFrame, GtParams) {
        let spec = GridSpec::world([20, 20, 12], 0.5, Point3::new(-5.0, -5.0, 0.0)).unwrap();
        let mut scene = SceneGrid::empty(spec);
        for i in 0..20 {
            for j in 0..20 {
                scene.set(VoxelIndex::new(i, j, 0), 14);
            }
        }
        for i in 8..12 {
            for j in 8..12 {
                for k in 1..6 {
                    scene.set(VoxelIndex::new(i, j, k), 1);
                }
            }
        }
        let eye = Point3::new(0.1, 0.2, 8.0);
        let pose = Pose::look_at(&eye, &Point3::new(0.0, 0.0, 0.0), &nalgebra::Vector3::y()).unwrap();
        let frame = CameraFrame { id: 3, intrinsics: CameraIntrinsics::new(20.0, 20.0, 12.0, 12.0, 24, 24).unwrap(), pose };
        let params = GtParams::for_spec(GridSpec::camera([20, 16, 16], 0.5, 0.5).unwrap());
        (scene, frame, params)
    }

    #[test]
    fn self_test_passes() {
        self_test().unwrap();
    }

    #[test]
    fn pipeline_sample_is_clean() {
        let (scene, frame, params) = setup();
        let s = sample_frame(&scene, &frame, &params).unwrap();
        assert!(s.masks.occluded.count() > 0);
        let v = check_sample(&s, &frame, &params, &Taxonomy::aerial(), Some(&scene)).unwrap();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn occluded_bit_on_empty_voxel_is_named() {
        let (scene, frame, params) = setup();
        let mut s = sample_frame(&scene, &frame, &params).unwrap();
        let empty = s.grid.labels.iter().position(|&c| c == EMPTY).unwrap();
        s.masks.occluded.bits[empty] = true;
        let v = check_sample(&s, &frame, &params, &Taxonomy::aerial(), None).unwrap();
        assert!(v.iter().any(|x| x.invariant == "occluded bit on empty voxel"));
    }

    #[test]
    fn foreign_label_is_flagged() {
        let (scene, frame, params) = setup();
        let mut s = sample_frame(&scene, &frame, &params).unwrap();
        let occ = s.grid.labels.iter().position(|&c| c != EMPTY).unwrap();
        s.grid.labels[occ] = 999;
        let v = check_sample(&s, &frame, &params, &Taxonomy::aerial(), None).unwrap();
        assert!(v.iter().any(|x| x.invariant == "label outside taxonomy"));
    }
}
