//! Scan conversion of ground meshes and direct binning of point sets.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::geometry::{GridSpec, Point3, VoxelIndex};
use crate::lifting::SemanticPointCloud;
use crate::taxonomy::{ClassId, Taxonomy};

use super::ground::GroundMesh;
use super::OccupiedSet;

/// Separating-axis triangle/box test. Touching counts as overlap.
pub fn tri_box_overlap(center: &Point3, half: f64, tri: &[Point3; 3]) -> bool {
    let v = tri.map(|p| p - center);
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let separated = |axis: &Vector3<f64>| {
        let p = [axis.dot(&v[0]), axis.dot(&v[1]), axis.dot(&v[2])];
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        let rad = half * (axis.x.abs() + axis.y.abs() + axis.z.abs());
        lo > rad || hi < -rad
    };
    let units = [Vector3::x(), Vector3::y(), Vector3::z()];
    for u in &units {
        if separated(u) {
            return false;
        }
    }
    let normal = e[0].cross(&e[1]);
    if separated(&normal) {
        return false;
    }
    for edge in &e {
        for u in &units {
            let axis = u.cross(edge);
            if axis.norm_squared() > 0.0 && separated(&axis) {
                return false;
            }
        }
    }
    true
}

fn index_bounds(grid: &GridSpec, pts: &[Point3]) -> Option<[(usize, usize); 3]> {
    let r = grid.voxel_size;
    let mut out = [(0, 0); 3];
    for a in 0..3 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in pts {
            let l = grid.to_local(p)[a];
            lo = lo.min(l);
            hi = hi.max(l);
        }
        // closed overlap: a vertex exactly on a face touches both neighbors
        let first = ((lo / r).ceil() - 1.0).max(0.0);
        let last = (hi / r).floor().min(grid.dims[a] as f64 - 1.0);
        if !(first <= last) {
            return None;
        }
        out[a] = (first as usize, last as usize);
    }
    Some(out)
}

/// Voxels of `grid` that a world-space triangle overlaps.
pub fn triangle_voxels(grid: &GridSpec, tri: &[Point3; 3]) -> Vec<VoxelIndex> {
    let Some([(i0, i1), (j0, j1), (k0, k1)]) = index_bounds(grid, tri) else {
        return Vec::new();
    };
    let half = 0.5 * grid.voxel_size;
    let local = tri.map(|p| Point3::from(grid.to_local(&p)));
    let mut out = Vec::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            for k in k0..=k1 {
                let c = Point3::new((i as f64 + 0.5) * 2.0 * half, (j as f64 + 0.5) * 2.0 * half, (k as f64 + 0.5) * 2.0 * half);
                if tri_box_overlap(&c, half, &local) {
                    out.push(VoxelIndex { i, j, k });
                }
            }
        }
    }
    out
}

fn is_degenerate(tri: &[Point3; 3]) -> bool {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let scale = (tri[1] - tri[0]).norm_squared().max((tri[2] - tri[0]).norm_squared());
    !(n.norm_squared() > 1e-24 * scale * scale) || scale == 0.0
}

type Votes = BTreeMap<VoxelIndex, BTreeMap<ClassId, u32>>;

fn vote(votes: &mut Votes, v: VoxelIndex, c: ClassId) {
    *votes.entry(v).or_default().entry(c).or_default() += 1;
}

fn resolve(votes: &Votes, v: &VoxelIndex, taxonomy: &Taxonomy) -> Option<ClassId> {
    votes.get(v).and_then(|m| taxonomy.pick(m.iter().map(|(&c, &n)| (c, n))))
}

/// Scan-convert `mesh` into `grid`. Every triangle-overlapped voxel is occupied.
/// Classes come from a per-voxel majority over surface samples spaced at most
/// `r / 2` apart, each sample taking the class of its dominant vertex; voxels
/// without samples vote over the vertex classes of their triangles.
pub fn voxelize_mesh(mesh: &GroundMesh, grid: &GridSpec, taxonomy: &Taxonomy) -> OccupiedSet {
    let step = 0.5 * grid.voxel_size;
    let mut samples = Votes::new();
    let mut fallback = Votes::new();
    for (t, ids) in mesh.triangles.iter().enumerate() {
        let tri = mesh.triangle(t);
        let cls = ids.map(|i| mesh.classes[i as usize]);
        if is_degenerate(&tri) {
            for (p, &c) in tri.iter().zip(&cls) {
                if let Ok(v) = grid.voxel_index(p) {
                    vote(&mut samples, v, c);
                }
            }
            continue;
        }
        for v in triangle_voxels(grid, &tri) {
            for &c in &cls {
                vote(&mut fallback, v, c);
            }
        }
        let longest = [(tri[1] - tri[0]).norm(), (tri[2] - tri[1]).norm(), (tri[0] - tri[2]).norm()]
            .into_iter()
            .fold(0.0, f64::max);
        let n = (longest / step).ceil().max(1.0) as usize;
        for a in 0..=n {
            for b in 0..=n - a {
                let w = [(n - a - b) as f64 / n as f64, a as f64 / n as f64, b as f64 / n as f64];
                let p = Point3::from(tri[0].coords * w[0] + tri[1].coords * w[1] + tri[2].coords * w[2]);
                let dom = if w[0] >= w[1] && w[0] >= w[2] {
                    0
                } else if w[1] >= w[2] {
                    1
                } else {
                    2
                };
                if let Ok(v) = grid.voxel_index(&p) {
                    vote(&mut samples, v, cls[dom]);
                }
            }
        }
    }
    let mut out = OccupiedSet::new();
    for v in fallback.keys().chain(samples.keys()) {
        if out.contains(v) {
            continue;
        }
        let c = resolve(&samples, v, taxonomy).or_else(|| resolve(&fallback, v, taxonomy));
        if let Some(c) = c {
            out.insert_raw(*v, c);
        }
    }
    out
}

/// Bin points into `grid` with a per-voxel majority vote. Returns the set
/// and the number of points that fell outside the grid.
pub fn voxelize_points(cloud: &SemanticPointCloud, grid: &GridSpec, taxonomy: &Taxonomy) -> (OccupiedSet, usize) {
    let mut votes = Votes::new();
    let mut dropped = 0;
    for (p, &c) in cloud.positions.iter().zip(&cloud.labels) {
        match grid.voxel_index(p) {
            Ok(v) => vote(&mut votes, v, c),
            Err(_) => dropped += 1,
        }
    }
    let set = votes.keys().filter_map(|v| resolve(&votes, v, taxonomy).map(|c| (*v, c))).collect();
    (set, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::world([8, 8, 4], 0.5, Point3::origin()).unwrap()
    }

    fn mesh(tris: &[[[f64; 3]; 3]], class: ClassId) -> GroundMesh {
        let mut m = GroundMesh::default();
        for t in tris {
            let base = m.vertices.len() as u32;
            for p in t {
                m.vertices.push(Point3::from(*p));
                m.classes.push(class);
            }
            m.triangles.push([base, base + 1, base + 2]);
        }
        m
    }

    #[test]
    fn triangle_inside_one_voxel() {
        let t = Taxonomy::aerial();
        let m = mesh(&[[[0.6, 0.6, 0.6], [0.9, 0.6, 0.6], [0.6, 0.9, 0.7]]], 14);
        let out = voxelize_mesh(&m, &grid(), &t);
        assert_eq!(out.iter().map(|(v, c)| (*v, *c)).collect::<Vec<_>>(), vec![(VoxelIndex::new(1, 1, 1), 14)]);
    }

    #[test]
    fn unit_square_at_quarter_height() {
        let t = Taxonomy::aerial();
        let m = mesh(&[[[0.0, 0.0, 0.25], [1.0, 0.0, 0.25], [1.0, 1.0, 0.25]], [[0.0, 0.0, 0.25], [1.0, 1.0, 0.25], [0.0, 1.0, 0.25]]], 14);
        let out = voxelize_mesh(&m, &grid(), &t);
        let got: Vec<VoxelIndex> = out.indices().copied().collect();
        // closed overlap: the square edges at x = 1 and y = 1 touch the next cells
        let mut want = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                want.push(VoxelIndex::new(i, j, 0));
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn degenerate_triangle_marks_vertex_voxels() {
        let t = Taxonomy::aerial();
        let m = mesh(&[[[0.1, 0.1, 0.1], [1.2, 0.1, 0.1], [1.2, 0.1, 0.1]]], 9);
        let out = voxelize_mesh(&m, &grid(), &t);
        let got: Vec<VoxelIndex> = out.indices().copied().collect();
        assert_eq!(got, vec![VoxelIndex::new(0, 0, 0), VoxelIndex::new(2, 0, 0)]);
    }

    #[test]
    fn point_majority_and_drops() {
        let t = Taxonomy::aerial();
        let (tree, rock) = (t.id_of("tree").unwrap(), t.id_of("rock").unwrap());
        let mut cloud = SemanticPointCloud::default();
        cloud.push(Point3::new(0.1, 0.1, 0.1), tree);
        let (one, _) = voxelize_points(&cloud, &grid(), &t);
        assert_eq!(one.get(&VoxelIndex::new(0, 0, 0)), Some(tree));
        for _ in 0..2 {
            cloud.push(Point3::new(0.2, 0.3, 0.4), tree);
        }
        cloud.push(Point3::new(0.4, 0.4, 0.4), rock);
        cloud.push(Point3::new(-1.0, 0.0, 0.0), rock);
        cloud.push(Point3::new(4.0, 0.0, 0.0), rock);
        let (set, dropped) = voxelize_points(&cloud, &grid(), &t);
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(&VoxelIndex::new(0, 0, 0)), Some(tree));
        assert_eq!(dropped, 2);
    }

    #[test]
    fn sat_agrees_with_sampling_on_clear_cases() {
        let c = Point3::new(0.0, 0.0, 0.0);
        let far = [Point3::new(2.0, 2.0, 2.0), Point3::new(3.0, 2.0, 2.0), Point3::new(2.0, 3.0, 2.0)];
        assert!(!tri_box_overlap(&c, 0.5, &far));
        let through = [Point3::new(-5.0, -5.0, 0.0), Point3::new(5.0, -5.0, 0.0), Point3::new(0.0, 5.0, 0.0)];
        assert!(tri_box_overlap(&c, 0.5, &through));
        // plane z = x + y + 1.6 clears the box corner (0.5, 0.5, 0.5) only along the normal
        let diag = [Point3::new(-10.0, -10.0, -18.4), Point3::new(10.0, -10.0, 1.6), Point3::new(0.0, 10.0, 11.6)];
        assert!(!tri_box_overlap(&c, 0.5, &diag));
        let touching = [Point3::new(0.5, -1.0, -1.0), Point3::new(0.5, 1.0, -1.0), Point3::new(0.5, 0.0, 1.0)];
        assert!(tri_box_overlap(&c, 0.5, &touching));
    }
}
