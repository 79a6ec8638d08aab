//! Visual-hull carving into scene-grid voxels.

use rayon::prelude::*;

use crate::geometry::{project, GridSpec, Point3, VoxelIndex};

use super::dbscan::InstanceCluster;
use super::views::VirtualView;
use super::{Aabb, OccupiedSet};

/// Default dilation of the carving domain, in voxels.
pub const DEFAULT_MARGIN_VOXELS: f64 = 2.0;

/// Carving domain of a cluster: its bbox grown by `margin_voxels` voxel edges.
pub fn carve_domain(bbox: &Aabb, grid: &GridSpec, margin_voxels: f64) -> Aabb {
    bbox.dilated(margin_voxels.max(0.0) * grid.voxel_size)
}

/// Whether `p` projects into the silhouette of every view.
#[inline]
pub fn inside_all(p: &Point3, views: &[VirtualView]) -> bool {
    views.iter().all(|view| {
        project(p, &view.camera)
            .pixel(&view.camera.intrinsics)
            .is_some_and(|(u, v)| view.silhouette.get(u, v))
    })
}

/// Index range per grid axis whose voxel centers may fall inside `domain`.
fn index_range(domain: &Aabb, grid: &GridSpec) -> Option<[(usize, usize); 3]> {
    let r = grid.voxel_size;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in domain.corners() {
        let l = grid.to_local(&c);
        for a in 0..3 {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(l[a]);
        }
    }
    let mut out = [(0, 0); 3];
    for a in 0..3 {
        // one extra cell each side; exact membership is re-checked on the centers
        let first = ((lo[a] / r - 0.5).ceil() - 1.0).max(0.0);
        let last = ((hi[a] / r - 0.5).floor() + 1.0).min(grid.dims[a] as f64 - 1.0);
        if !(first <= last) {
            return None;
        }
        out[a] = (first as usize, last as usize);
    }
    Some(out)
}

/// Voxels of `grid` whose centers lie in the dilated cluster box and project
/// inside every silhouette, labeled with the cluster class.
pub fn carve(cluster: &InstanceCluster, views: &[VirtualView], grid: &GridSpec, margin_voxels: f64) -> OccupiedSet {
    let domain = carve_domain(&cluster.bbox, grid, margin_voxels);
    let Some([(i0, i1), (j0, j1), (k0, k1)]) = index_range(&domain, grid) else {
        return OccupiedSet::new();
    };
    let hits: Vec<VoxelIndex> = (i0..=i1)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut slab = Vec::new();
            for j in j0..=j1 {
                for k in k0..=k1 {
                    let v = VoxelIndex { i, j, k };
                    let c = grid.center_unchecked(v);
                    if domain.contains(&c) && inside_all(&c, views) {
                        slab.push(v);
                    }
                }
            }
            slab
        })
        .collect();
    hits.into_iter().map(|v| (v, cluster.class)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densify::views::place_virtual_cameras;
    use crate::raster::Raster;

    fn cluster(min: [f64; 3], max: [f64; 3]) -> InstanceCluster {
        InstanceCluster {
            id: 0,
            class: 3,
            members: vec![],
            bbox: Aabb { min: Point3::from(min), max: Point3::from(max) },
        }
    }

    #[test]
    fn full_silhouette_keeps_whole_domain() {
        let grid = GridSpec::world([16, 16, 16], 0.5, Point3::origin()).unwrap();
        let c = cluster([2.0, 2.0, 1.0], [4.0, 3.0, 2.0]);
        let cams = place_virtual_cameras(&c.bbox, 1.0, 2).unwrap();
        let views: Vec<VirtualView> = cams[..1]
            .iter()
            .map(|cam| VirtualView { camera: *cam, silhouette: Raster::filled(256, 256, true) })
            .collect();
        let out = carve(&c, &views, &grid, 2.0);
        // centers at 1.25..=4.75 on x, 1.25..=3.75 on y, 0.25..=2.75 on z
        assert_eq!(out.len(), 8 * 6 * 6);
        assert!(out.iter().all(|(_, &cl)| cl == 3));
    }

    #[test]
    fn empty_silhouette_in_one_view_empties_the_set() {
        let grid = GridSpec::world([16, 16, 16], 0.5, Point3::origin()).unwrap();
        let c = cluster([2.0, 2.0, 1.0], [4.0, 3.0, 2.0]);
        let cams = place_virtual_cameras(&c.bbox, 1.0, 3).unwrap();
        let mut views: Vec<VirtualView> =
            cams.iter().map(|cam| VirtualView { camera: *cam, silhouette: Raster::filled(256, 256, true) }).collect();
        views[1].silhouette = Raster::filled(256, 256, false);
        assert!(carve(&c, &views, &grid, 2.0).is_empty());
    }

    #[test]
    fn domain_outside_grid_is_empty() {
        let grid = GridSpec::world([4, 4, 4], 0.5, Point3::origin()).unwrap();
        let c = cluster([20.0, 20.0, 20.0], [21.0, 21.0, 21.0]);
        assert!(carve(&c, &[], &grid, 0.0).is_empty());
    }
}
