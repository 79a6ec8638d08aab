//! The full densification stage: semantic cloud in, scene grid out.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point3};
use crate::lifting::SemanticPointCloud;
use crate::taxonomy::Taxonomy;

use super::aggregate::{aggregate, SceneGrid};
use super::alpha::{extract_silhouette, DEFAULT_ALPHA};
use super::carve::{carve, DEFAULT_MARGIN_VOXELS};
use super::dbscan::{cluster_instances, DbscanTable, InstanceCluster};
use super::ground::reconstruct_ground;
use super::views::{place_virtual_cameras, VirtualView, DEFAULT_VIEWS};
use super::voxelize::{voxelize_mesh, voxelize_points};
use super::{partition_groups, Aabb, OccupiedSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyParams {
    pub dbscan: DbscanTable,
    pub alpha: f64,
    pub views: usize,
    pub margin_voxels: f64,
    /// Keep the virtual views of every cluster in the output.
    pub keep_views: bool,
}

impl DensifyParams {
    pub fn aerial(taxonomy: &Taxonomy) -> Self {
        Self {
            dbscan: DbscanTable::aerial(taxonomy),
            alpha: DEFAULT_ALPHA,
            views: DEFAULT_VIEWS,
            margin_voxels: DEFAULT_MARGIN_VOXELS,
            keep_views: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensifyReport {
    pub clusters: usize,
    pub noise_points: usize,
    pub dropped_points: usize,
    pub instance_voxels: usize,
    pub ground_voxels: usize,
    pub other_voxels: usize,
}

#[derive(Debug, Clone)]
pub struct DensifyOutput {
    pub scene: SceneGrid,
    pub report: DensifyReport,
    pub clusters: Vec<InstanceCluster>,
    /// Per-cluster views, only filled when requested.
    pub views: Vec<Vec<VirtualView>>,
}

/// World grid of edge `r` covering `positions` padded by `pad` meters, with
/// the origin snapped to a multiple of `r`.
pub fn scene_grid_for(positions: &[Point3], r: f64, pad: f64) -> Result<GridSpec> {
    let b = Aabb::from_points(positions).ok_or_else(|| Error::InvalidInput("empty point cloud".into()))?;
    let b = b.dilated(pad.max(0.0));
    let origin = Point3::new((b.min.x / r).floor() * r, (b.min.y / r).floor() * r, (b.min.z / r).floor() * r);
    let dims = [0, 1, 2].map(|a| ((b.max[a] - origin[a]) / r).floor() as usize + 1);
    GridSpec::world(dims, r, origin)
}

/// Carve one cluster. Silhouettes are cut from the member points together
/// with the centers of the voxels they occupy, so every occupied voxel of the
/// input survives carving.
pub fn carve_cluster(
    cloud: &SemanticPointCloud,
    cluster: &InstanceCluster,
    grid: &GridSpec,
    params: &DensifyParams,
) -> Result<(OccupiedSet, Vec<VirtualView>)> {
    let mut pts: Vec<Point3> = cluster.members.iter().map(|&i| cloud.positions[i]).collect();
    let cells: BTreeSet<_> = pts.iter().filter_map(|p| grid.voxel_index(p).ok()).collect();
    pts.extend(cells.iter().map(|v| grid.center_unchecked(*v)));
    let margin_m = params.margin_voxels * grid.voxel_size;
    let cams = place_virtual_cameras(&cluster.bbox.dilated(1e-6), margin_m, params.views)?;
    let views: Vec<VirtualView> = cams
        .into_iter()
        .map(|camera| VirtualView { silhouette: extract_silhouette(&pts, &camera, params.alpha), camera })
        .collect();
    Ok((carve(cluster, &views, grid, params.margin_voxels), views))
}

pub fn densify_scene(cloud: &SemanticPointCloud, taxonomy: &Taxonomy, grid: &GridSpec, params: &DensifyParams) -> Result<DensifyOutput> {
    let groups = partition_groups(cloud, taxonomy)?;
    let clustered = cluster_instances(&groups.instance, &params.dbscan)?;
    let mut report = DensifyReport {
        clusters: clustered.clusters.len(),
        noise_points: clustered.noise.len(),
        ..Default::default()
    };

    let carved: Vec<(OccupiedSet, Vec<VirtualView>)> = clustered
        .clusters
        .par_iter()
        .map(|c| carve_cluster(&groups.instance, c, grid, params))
        .collect::<Result<_>>()?;
    let mut inst = OccupiedSet::new();
    let mut views = Vec::new();
    for (set, v) in carved {
        inst.union_with(&set, taxonomy);
        if params.keep_views {
            views.push(v);
        }
    }

    let mut other = groups.other;
    for (p, c) in clustered.noise.positions.iter().zip(&clustered.noise.labels) {
        other.push(*p, *c);
    }
    let (oth, dropped) = voxelize_points(&other, grid, taxonomy);
    report.dropped_points += dropped;

    let gnd = if groups.ground.is_empty() {
        OccupiedSet::new()
    } else {
        match reconstruct_ground(&groups.ground, grid.voxel_size) {
            Ok(mesh) => voxelize_mesh(&mesh, grid, taxonomy),
            Err(Error::Degenerate(msg)) => {
                log::warn!("ground meshing skipped ({msg}), binning points directly");
                let (set, dropped) = voxelize_points(&groups.ground, grid, taxonomy);
                report.dropped_points += dropped;
                set
            }
            Err(e) => return Err(e),
        }
    };
    report.instance_voxels = inst.len();
    report.other_voxels = oth.len();
    report.ground_voxels = gnd.len();
    let scene = aggregate(&inst, &oth, &gnd, grid)?;
    Ok(DensifyOutput { scene, report, clusters: clustered.clusters, views })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VoxelIndex;
    use crate::taxonomy::EMPTY;

    #[test]
    fn grid_covers_points() {
        let pts = [Point3::new(-3.2, 1.0, 0.0), Point3::new(10.0, 4.9, 2.5)];
        let g = scene_grid_for(&pts, 0.5, 1.0).unwrap();
        for p in &pts {
            assert!(g.voxel_index(p).is_ok());
        }
        assert_eq!(g.anchor, crate::geometry::GridAnchor::World { origin: Point3::new(-4.5, 0.0, -1.0) });
    }

    #[test]
    fn box_on_ground_end_to_end() {
        let t = Taxonomy::aerial();
        let (vehicle, road) = (t.id_of("vehicle").unwrap(), t.id_of("road").unwrap());
        let mut cloud = SemanticPointCloud::default();
        for a in 0..40 {
            for b in 0..40 {
                cloud.push(Point3::new(a as f64 * 0.5 + 0.13, b as f64 * 0.5 + 0.07, 0.01), road);
            }
        }
        // hollow box shell 4 x 2 x 1.5 densely sampled on its faces
        let n = 40;
        for a in 0..=n {
            for b in 0..=n {
                let (s, u) = (a as f64 / n as f64, b as f64 / n as f64);
                for p in [
                    [8.0 + 4.0 * s, 9.0 + 2.0 * u, 1.5],
                    [8.0 + 4.0 * s, 9.0, 0.1 + 1.4 * u],
                    [8.0 + 4.0 * s, 11.0, 0.1 + 1.4 * u],
                    [8.0, 9.0 + 2.0 * s, 0.1 + 1.4 * u],
                    [12.0, 9.0 + 2.0 * s, 0.1 + 1.4 * u],
                ] {
                    cloud.push(Point3::from(p), vehicle);
                }
            }
        }
        let grid = scene_grid_for(&cloud.positions, 0.5, 1.0).unwrap();
        let out = densify_scene(&cloud, &t, &grid, &DensifyParams::aerial(&t)).unwrap();
        assert_eq!(out.report.clusters, 1);
        let inside = grid.voxel_index(&Point3::new(10.1, 10.1, 0.8)).unwrap();
        assert_eq!(out.scene.get(inside), vehicle, "hull interior is filled");
        let ground = grid.voxel_index(&Point3::new(2.0, 2.0, 0.01)).unwrap();
        assert_eq!(out.scene.get(ground), road);
        let above = grid.voxel_index(&Point3::new(2.0, 2.0, 2.2)).unwrap();
        assert_eq!(out.scene.get(above), EMPTY);
        assert_eq!(out.scene.get(VoxelIndex::new(0, 0, grid.dims[2] - 1)), EMPTY);
    }
}
