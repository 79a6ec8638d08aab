//! Filled α-shape silhouettes of projected point sets.

use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::geometry::{project, CameraFrame, Point3};
use crate::raster::Raster;

/// Default α, a squared radius in image coordinates normalized to [0, 1].
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Triangles of the α-complex of `points`: Delaunay triangles whose squared
/// circumradius is at most `alpha`. Returns `None` when the points span no
/// area (fewer than 3 distinct points, or all collinear).
pub fn alpha_triangles(points: &[[f64; 2]], alpha: f64) -> Option<Vec<[[f64; 2]; 3]>> {
    let verts: Vec<Point2<f64>> = points
        .iter()
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .map(|p| Point2::new(p[0], p[1]))
        .collect();
    let tri = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(verts).ok()?;
    if tri.num_inner_faces() == 0 {
        return None;
    }
    let kept = tri
        .inner_faces()
        .filter(|f| f.circumcircle().1 <= alpha)
        .map(|f| {
            let [a, b, c] = f.vertices().map(|v| {
                let p = v.position();
                [p.x, p.y]
            });
            [a, b, c]
        })
        .collect();
    Some(kept)
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Closed point-in-triangle test, either orientation.
pub fn in_triangle(t: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    let e0 = edge(t[0], t[1], p);
    let e1 = edge(t[1], t[2], p);
    let e2 = edge(t[2], t[0], p);
    (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
}

/// Set every pixel whose center lies in a triangle (pixel coordinates).
pub fn fill_triangles(mask: &mut Raster<bool>, triangles: &[[[f64; 2]; 3]]) {
    let (w, h) = mask.dims();
    for t in triangles {
        let lo_u = t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi_u = t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_v = t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let hi_v = t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let u0 = (lo_u - 0.5).ceil().max(0.0) as i64;
        let v0 = (lo_v - 0.5).ceil().max(0.0) as i64;
        let u1 = ((hi_u - 0.5).floor() as i64).min(w as i64 - 1);
        let v1 = ((hi_v - 0.5).floor() as i64).min(h as i64 - 1);
        for v in v0..=v1 {
            for u in u0..=u1 {
                if in_triangle(t, [u as f64 + 0.5, v as f64 + 0.5]) {
                    mask.set(u as u32, v as u32, true);
                }
            }
        }
    }
}

/// 3×3 binary dilation.
pub fn dilate(mask: &Raster<bool>) -> Raster<bool> {
    let (w, h) = mask.dims();
    let mut out = Raster::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            if !mask.get(u, v) {
                continue;
            }
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let (x, y) = (u as i64 + du, v as i64 + dv);
                    if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                        out.set(x as u32, y as u32, true);
                    }
                }
            }
        }
    }
    out
}

/// Silhouette of `points` seen from `camera`: the filled α-shape of their
/// projections, united with the pixels the points fall in, dilated by one
/// pixel. Point sets without area fall back to the dilated point pixels.
pub fn extract_silhouette(points: &[Point3], camera: &CameraFrame, alpha: f64) -> Raster<bool> {
    let intr = &camera.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let scale = w.max(h) as f64;
    let mut mask = Raster::filled(w, h, false);
    let mut uv = Vec::with_capacity(points.len());
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
    match alpha_triangles(&uv, alpha) {
        Some(tris) => {
            let px: Vec<[[f64; 2]; 3]> = tris.iter().map(|t| t.map(|p| [p[0] * scale, p[1] * scale])).collect();
            fill_triangles(&mut mask, &px);
        }
        None => log::warn!("view {}: {} points span no area, using point silhouette", camera.id, uv.len()),
    }
    dilate(&mask)
}
