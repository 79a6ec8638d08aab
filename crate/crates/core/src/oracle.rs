//! Brute-force reference implementations for auditing the main path.
//!
//! Every oracle scans exhaustively, keeps no spatial index and runs on one
//! thread. They share only the camera model, grid algebra and taxonomy tie
//! rule with the code they check.

use std::collections::VecDeque;

use crate::densify::{InstanceCluster, OccupiedSet, SceneGrid, VirtualView};
use crate::geometry::{project, CameraFrame, GridSpec, Point3, VoxelIndex};
use crate::gt::{BitVolume, FrameGrid};
use crate::raster::Raster;
use crate::taxonomy::{ClassId, Taxonomy, EMPTY};

fn grid_indices(grid: &GridSpec) -> impl Iterator<Item = VoxelIndex> + '_ {
    let [x, y, z] = grid.dims;
    (0..x).flat_map(move |i| (0..y).flat_map(move |j| (0..z).map(move |k| VoxelIndex { i, j, k })))
}

fn in_silhouette(p: &Point3, view: &VirtualView) -> bool {
    let pr = project(p, &view.camera);
    let (w, h) = view.silhouette.dims();
    if pr.depth <= 0.0 || pr.u < 0.0 || pr.v < 0.0 || pr.u >= w as f64 || pr.v >= h as f64 {
        return false;
    }
    view.silhouette.get(pr.u.floor() as u32, pr.v.floor() as u32)
}

/// Every grid voxel whose center lies in the cluster box grown by
/// `margin_voxels` voxels and falls inside all silhouettes.
pub fn oracle_carve(cluster: &InstanceCluster, views: &[VirtualView], grid: &GridSpec, margin_voxels: f64) -> OccupiedSet {
    let m = margin_voxels.max(0.0) * grid.voxel_size;
    let (lo, hi) = (cluster.bbox.min, cluster.bbox.max);
    let mut out = OccupiedSet::new();
    for v in grid_indices(grid) {
        let c = grid.center_unchecked(v);
        let inside_box = (0..3).all(|a| c[a] >= lo[a] - m && c[a] <= hi[a] + m);
        if inside_box && views.iter().all(|view| in_silhouette(&c, view)) {
            out.insert_raw(v, cluster.class);
        }
    }
    out
}

/// All other points sorted by `(squared distance, index)`.
fn ranked(points: &[Point3], q: &Point3, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, p)| ((p - q).norm_squared(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all
}

fn weighted_vote(neighbors: &[(f64, usize)], labels: &[ClassId], epsilon_d: f64, taxonomy: &Taxonomy) -> Option<ClassId> {
    let mut scores: Vec<(ClassId, f64)> = Vec::new();
    for &(d2, i) in neighbors {
        let w = 1.0 / (d2.sqrt() + epsilon_d);
        match scores.iter_mut().find(|(c, _)| *c == labels[i]) {
            Some((_, s)) => *s += w,
            None => scores.push((labels[i], w)),
        }
    }
    taxonomy.pick(scores)
}

/// Inverse-distance-weighted class of each query among its `k` nearest
/// labeled points, by full scan.
pub fn oracle_knn_assign(
    positions: &[Point3],
    labels: &[ClassId],
    queries: &[Point3],
    k: usize,
    epsilon_d: f64,
    taxonomy: &Taxonomy,
) -> Vec<ClassId> {
    queries
        .iter()
        .map(|q| {
            let mut nn = ranked(positions, q, None);
            nn.truncate(k);
            weighted_vote(&nn, labels, epsilon_d, taxonomy).unwrap_or(EMPTY)
        })
        .collect()
}

/// One simultaneous relabeling pass over the `k` nearest other points, by
/// full scan.
pub fn oracle_knn_refine(positions: &[Point3], labels: &[ClassId], k: usize, epsilon_d: f64, taxonomy: &Taxonomy) -> Vec<ClassId> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut nn = ranked(positions, p, Some(i));
            nn.truncate(k);
            weighted_vote(&nn, labels, epsilon_d, taxonomy).unwrap_or(labels[i])
        })
        .collect()
}

/// Textbook DBSCAN with linear region queries. Closed `eps` ball, the point
/// itself counts toward `min_pts`, seeds taken in index order.
pub fn oracle_dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Vec<Option<u32>> {
    let region = |i: usize| -> Vec<usize> {
        (0..points.len()).filter(|&j| (points[i] - points[j]).norm_squared() <= eps * eps).collect()
    };
    let mut label: Vec<Option<Option<u32>>> = vec![None; points.len()];
    let mut next = 0u32;
    for i in 0..points.len() {
        if label[i].is_some() {
            continue;
        }
        let seeds = region(i);
        if seeds.len() < min_pts {
            label[i] = Some(None);
            continue;
        }
        let c = next;
        next += 1;
        label[i] = Some(Some(c));
        let mut queue: VecDeque<usize> = seeds.into();
        while let Some(q) = queue.pop_front() {
            match label[q] {
                Some(None) => label[q] = Some(Some(c)),
                Some(Some(_)) => {}
                None => {
                    label[q] = Some(Some(c));
                    let nb = region(q);
                    if nb.len() >= min_pts {
                        queue.extend(nb);
                    }
                }
            }
        }
    }
    label.into_iter().map(|l| l.flatten()).collect()
}

/// Whether two clusterings are the same partition up to renaming clusters.
pub fn same_partition(a: &[Option<u32>], b: &[Option<u32>]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd: HashMap<u32, u32> = HashMap::new();
    let mut back: HashMap<u32, u32> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                if *fwd.entry(*x).or_insert(*y) != *y || *back.entry(*y).or_insert(*x) != *x {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

/// Entry and exit ray parameters of `origin + t * dir` through a box, if the
/// ray crosses it over a positive length.
fn slab(origin: &Point3, dir: &[f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
        } else {
            let (ta, tb) = ((lo[a] - origin[a]) / dir[a], (hi[a] - origin[a]) / dir[a]);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t0 < t1).then_some((t0, t1))
}

/// First occupied voxel per pixel ray, `(linear index, entry depth)`, found
/// by testing every occupied voxel box in camera coordinates. Pixels in row
/// order.
pub fn oracle_raycast(grid: &FrameGrid, frame: &CameraFrame) -> Vec<Option<(usize, f64)>> {
    let spec = &grid.spec;
    let half = spec.voxel_size / 2.0;
    let boxes: Vec<(usize, [f64; 3], [f64; 3])> = (0..spec.len())
        .filter(|&lin| grid.labels[lin] != EMPTY)
        .map(|lin| {
            let c = spec.center_unchecked(spec.unlinear(lin));
            (lin, [c.x - half, c.y - half, c.z - half], [c.x + half, c.y + half, c.z + half])
        })
        .collect();
    let intr = &frame.intrinsics;
    let origin = Point3::origin();
    let mut out = Vec::with_capacity(intr.pixel_count());
    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = [(u as f64 + 0.5 - intr.cx) / intr.fx, (v as f64 + 0.5 - intr.cy) / intr.fy, 1.0];
            let mut best: Option<(usize, f64)> = None;
            for (lin, lo, hi) in &boxes {
                if let Some((t_in, _)) = slab(&origin, &dir, lo, hi) {
                    if best.is_none_or(|(_, t)| t_in < t) {
                        best = Some((*lin, t_in));
                    }
                }
            }
            out.push(best);
        }
    }
    out
}

/// Occluded mask from exhaustive box tests: every occupied voxel a pixel ray
/// crosses after its first hit, minus all first hits.
pub fn oracle_occluded(grid: &FrameGrid, frame: &CameraFrame) -> BitVolume {
    let spec = &grid.spec;
    let half = spec.voxel_size / 2.0;
    let boxes: Vec<(usize, [f64; 3], [f64; 3])> = (0..spec.len())
        .filter(|&lin| grid.labels[lin] != EMPTY)
        .map(|lin| {
            let c = spec.center_unchecked(spec.unlinear(lin));
            (lin, [c.x - half, c.y - half, c.z - half], [c.x + half, c.y + half, c.z + half])
        })
        .collect();
    let intr = &frame.intrinsics;
    let origin = Point3::origin();
    let mut behind = BitVolume::zeros(spec.dims);
    let mut first = BitVolume::zeros(spec.dims);
    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = [(u as f64 + 0.5 - intr.cx) / intr.fx, (v as f64 + 0.5 - intr.cy) / intr.fy, 1.0];
            let mut hits: Vec<(f64, usize)> =
                boxes.iter().filter_map(|(lin, lo, hi)| slab(&origin, &dir, lo, hi).map(|(t, _)| (t, *lin))).collect();
            hits.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, lin)) = hits.first() {
                first.bits[*lin] = true;
            }
            for (_, lin) in hits.iter().skip(1) {
                behind.bits[*lin] = true;
            }
        }
    }
    for (b, f) in behind.bits.iter_mut().zip(&first.bits) {
        *b &= !f;
    }
    behind
}

/// Frame grid culled voxel by voxel: a center inside the truncated frustum
/// takes the scene label under it.
pub fn oracle_frustum(scene: &SceneGrid, frame: &CameraFrame, d_min: f64, d_max: f64, spec: &GridSpec) -> Vec<ClassId> {
    let intr = &frame.intrinsics;
    grid_indices(spec)
        .map(|v| {
            let c = spec.center_unchecked(v);
            if c.z <= 0.0 || c.z < d_min || c.z > d_max {
                return EMPTY;
            }
            let u = intr.fx * c.x / c.z + intr.cx;
            let w = intr.fy * c.y / c.z + intr.cy;
            if u < 0.0 || w < 0.0 || u >= intr.width as f64 || w >= intr.height as f64 {
                return EMPTY;
            }
            let world = frame.pose.camera_to_world(&c);
            match scene.spec.voxel_index(&world) {
                Ok(idx) => scene.get(idx),
                Err(_) => EMPTY,
            }
        })
        .collect()
}

/// Triangle/box overlap by clipping the triangle against the six closed box
/// half-spaces and checking that something is left.
pub fn oracle_tri_box(center: &Point3, half: f64, tri: &[Point3; 3]) -> bool {
    let mut poly: Vec<Point3> = tri.to_vec();
    for a in 0..3 {
        for (sign, bound) in [(1.0, center[a] + half), (-1.0, -(center[a] - half))] {
            // keep s(p) = bound - sign * p[a] >= 0
            let s = |p: &Point3| bound - sign * p[a];
            let mut next = Vec::new();
            for i in 0..poly.len() {
                let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
                let (sp, sq) = (s(&p), s(&q));
                if sp >= 0.0 {
                    next.push(p);
                }
                if (sp >= 0.0) != (sq >= 0.0) {
                    let t = sp / (sp - sq);
                    let mut x = p + (q - p) * t;
                    // pin the crossing onto the plane against rounding
                    x[a] = sign * bound;
                    next.push(x);
                }
            }
            poly = next;
            if poly.is_empty() {
                return false;
            }
        }
    }
    true
}

/// α-complex triangles by definition: triples whose circumcircle has squared
/// radius at most `alpha` and no other point strictly inside.
pub fn oracle_alpha_triangles(points: &[[f64; 2]], alpha: f64) -> Vec<[[f64; 2]; 3]> {
    let n = points.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
                if d == 0.0 {
                    continue;
                }
                let sa = a[0] * a[0] + a[1] * a[1];
                let sb = b[0] * b[0] + b[1] * b[1];
                let sc = c[0] * c[0] + c[1] * c[1];
                let ux = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d;
                let uy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d;
                let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
                if r2 > alpha {
                    continue;
                }
                let empty = (0..n)
                    .filter(|&m| m != i && m != j && m != k)
                    .all(|m| (points[m][0] - ux).powi(2) + (points[m][1] - uy).powi(2) >= r2 * (1.0 - 1e-12));
                if empty {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

/// Silhouette from the definitional α-complex: point pixels plus pixel
/// centers covered by a complex triangle, dilated by one pixel.
pub fn oracle_silhouette(points: &[Point3], camera: &CameraFrame, alpha: f64) -> Raster<bool> {
    let intr = &camera.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let scale = w.max(h) as f64;
    let mut mask = Raster::filled(w, h, false);
    let mut uv = Vec::new();
    for p in points {
        let pr = project(p, camera);
        if pr.depth <= 0.0 {
            continue;
        }
        if let Some((u, v)) = pr.pixel(intr) {
            mask.set(u, v, true);
        }
        uv.push([pr.u / scale, pr.v / scale]);
    }
    let tris = oracle_alpha_triangles(&uv, alpha);
    let cross = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    for v in 0..h {
        for u in 0..w {
            let p = [(u as f64 + 0.5) / scale, (v as f64 + 0.5) / scale];
            let covered = tris.iter().any(|t| {
                let e = [cross(t[0], t[1], p), cross(t[1], t[2], p), cross(t[2], t[0], p)];
                e.iter().all(|&x| x >= 0.0) || e.iter().all(|&x| x <= 0.0)
            });
            if covered {
                mask.set(u, v, true);
            }
        }
    }
    let mut out = Raster::filled(w, h, false);
    for v in 0..h as i64 {
        for u in 0..w as i64 {
            let hit = (-1..=1).any(|dv| (-1..=1).any(|du| mask.get_checked(u + du, v + dv) == Some(true)));
            out.set(u as u32, v as u32, hit);
        }
    }
    out
}
