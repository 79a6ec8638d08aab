//! Ground surface completion as a 2.5D height-field mesh.

use std::collections::HashSet;

use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::lifting::SemanticPointCloud;
use crate::spatial::KdTree;
use crate::taxonomy::ClassId;

/// Triangle mesh with one class per vertex.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundMesh {
    pub vertices: Vec<Point3>,
    pub classes: Vec<ClassId>,
    pub triangles: Vec<[u32; 3]>,
}

impl GroundMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }
}

#[derive(Debug, Clone, Copy)]
struct HeightVertex {
    xy: Point2<f64>,
    z: f64,
}

impl HasPosition for HeightVertex {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.xy
    }
}

type HeightField = DelaunayTriangulation<HeightVertex>;

fn triangulate(verts: Vec<HeightVertex>) -> Result<HeightField> {
    let tri = HeightField::bulk_load_stable(verts).map_err(|e| Error::InvalidInput(format!("ground triangulation: {e:?}")))?;
    if tri.num_inner_faces() == 0 {
        return Err(Error::Degenerate("ground points are collinear or fewer than 3".into()));
    }
    Ok(tri)
}

/// Triangulate the ground points over the xy plane and densify large
/// triangles with lattice vertices at `spacing`, whose heights come from
/// natural-neighbor interpolation. Vertex classes are taken from the nearest
/// input point.
pub fn reconstruct_ground(cloud: &SemanticPointCloud, spacing: f64) -> Result<GroundMesh> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput(format!("fill spacing must be positive, got {spacing}")));
    }
    let mut seen = HashSet::new();
    let mut verts = Vec::new();
    for p in &cloud.positions {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::InvalidInput("non-finite ground point".into()));
        }
        if seen.insert((p.x.to_bits(), p.y.to_bits())) {
            verts.push(HeightVertex { xy: Point2::new(p.x, p.y), z: p.z });
        }
    }
    if verts.len() < 3 {
        return Err(Error::Degenerate(format!("{} distinct ground points", verts.len())));
    }
    let base = triangulate(verts.clone())?;

    let max_edge = 2.0 * spacing;
    let mut lattice = HashSet::new();
    let interp = base.natural_neighbor();
    for face in base.inner_faces() {
        let pts = face.vertices().map(|v| v.position());
        let long = (0..3).any(|e| {
            let (a, b) = (pts[e], pts[(e + 1) % 3]);
            (a.x - b.x).hypot(a.y - b.y) > max_edge
        });
        if !long {
            continue;
        }
        let lo_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let hi_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let tri = pts.map(|p| [p.x, p.y]);
        for a in (lo_x / spacing).ceil() as i64..=(hi_x / spacing).floor() as i64 {
            for b in (lo_y / spacing).ceil() as i64..=(hi_y / spacing).floor() as i64 {
                let q = [a as f64 * spacing, b as f64 * spacing];
                if !super::alpha::in_triangle(&tri, q) || !lattice.insert((a, b)) {
                    continue;
                }
                if seen.contains(&(q[0].to_bits(), q[1].to_bits())) {
                    continue;
                }
                let pos = Point2::new(q[0], q[1]);
                if let Some(z) = interp.interpolate(|v| v.data().z, pos) {
                    verts.push(HeightVertex { xy: pos, z });
                }
            }
        }
    }
    drop(interp);

    let mesh = if verts.len() > base.num_vertices() { triangulate(verts)? } else { base };
    let vertices: Vec<Point3> = mesh.vertices().map(|v| Point3::new(v.data().xy.x, v.data().xy.y, v.data().z)).collect();
    let triangles: Vec<[u32; 3]> = mesh.inner_faces().map(|f| f.vertices().map(|v| v.fix().index() as u32)).collect();
    let tree = KdTree::new(&cloud.positions);
    let classes = vertices
        .iter()
        .map(|v| cloud.labels[tree.nearest(v, 1, None)[0].index as usize])
        .collect();
    Ok(GroundMesh { vertices, classes, triangles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn planar_input_stays_planar() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let plane = |x: f64, y: f64| 0.1 * x - 0.05 * y + 3.0;
        let pts: Vec<Point3> = (0..400)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
                Point3::new(x, y, plane(x, y))
            })
            .collect();
        let cloud = SemanticPointCloud::new(pts, vec![14; 400]).unwrap();
        let mesh = reconstruct_ground(&cloud, 0.5).unwrap();
        assert!(mesh.vertices.len() > 400);
        for v in &mesh.vertices {
            assert!((v.z - plane(v.x, v.y)).abs() < 1e-6);
        }
        assert!(mesh.classes.iter().all(|&c| c == 14));
    }

    #[test]
    fn two_class_split_keeps_sides() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for a in 0..20 {
            for b in 0..10 {
                pts.push(Point3::new(a as f64 * 0.7 + 0.05 * b as f64, b as f64 * 0.9, 0.0));
                labels.push(if a < 10 { 14 } else { 9 });
            }
        }
        let cloud = SemanticPointCloud::new(pts, labels).unwrap();
        let mesh = reconstruct_ground(&cloud, 0.5).unwrap();
        for (v, &c) in mesh.vertices.iter().zip(&mesh.classes) {
            if v.x < 6.0 {
                assert_eq!(c, 14);
            }
            if v.x > 7.5 {
                assert_eq!(c, 9);
            }
        }
    }

    #[test]
    fn degenerate_ground() {
        let line: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let cloud = SemanticPointCloud::new(line, vec![14; 10]).unwrap();
        assert!(matches!(reconstruct_ground(&cloud, 0.5), Err(Error::Degenerate(_))));
        let two = SemanticPointCloud::new(vec![Point3::origin(), Point3::origin(), Point3::new(1.0, 0.0, 0.0)], vec![14; 3]).unwrap();
        assert!(matches!(reconstruct_ground(&two, 0.5), Err(Error::Degenerate(_))));
    }
}
