//! Deterministic synthetic aerial scenes with analytic geometry.
//!
//! A scene is a flat ground plane at `z = 0` partitioned into class regions,
//! plus boxes, spheres and vertical cylinders. Cameras fly a double grid:
//! one pass along x and one along y, pitched forward from nadir. Depth maps
//! and semantic masks are exact ray casts of the analytic geometry, and the
//! point cloud keeps only surface samples that enough frames see at a
//! moderate incidence angle.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraFrame, CameraIntrinsics, Point3, Pose};
use crate::lifting::SemanticPointCloud;
use crate::raster::{DepthMap, Raster, SemanticMask};
use crate::selection::{compute_correspondences, DepthTolerance};
use crate::taxonomy::{ClassId, Taxonomy, EMPTY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned box. Its bottom face is never sampled.
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    /// Vertical cylinder with a top cap.
    Cylinder { center: [f64; 2], radius: f64, z0: f64, z1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub class: ClassId,
    /// Surface samples per square meter.
    pub density: f64,
}

/// Axis-aligned ground region `[x0, x1] × [y0, y1]` with a class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundRegion {
    pub rect: [f64; 4],
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundSpec {
    /// The ground covers `[0, extent[0]] × [0, extent[1]]`.
    pub extent: [f64; 2],
    pub base_class: ClassId,
    /// Later regions take precedence over earlier ones.
    pub regions: Vec<GroundRegion>,
    pub density: f64,
}

/// One double-grid mission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flight {
    pub altitude: f64,
    /// Forward pitch away from nadir, degrees.
    pub tilt_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPattern {
    /// Missions, flown in list order.
    pub flights: Vec<Flight>,
    pub side_overlap: f64,
    pub forward_overlap: f64,
    /// Alternate strips fly in opposite directions.
    pub serpentine: bool,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSceneSpec {
    pub seed: u64,
    pub ground: GroundSpec,
    pub primitives: Vec<Primitive>,
    pub cameras: CameraPattern,
    /// A sampled point is kept when at least this many frames see it.
    pub min_views: usize,
    /// A frame counts as seeing a point only within this angle between the
    /// surface normal and the ray to the camera, degrees.
    pub max_incidence_deg: f64,
    /// Depth agreement used for visibility.
    pub visibility: DepthTolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub spec: SynthSceneSpec,
    /// Points with their true classes.
    pub cloud: SemanticPointCloud,
    pub frames: Vec<CameraFrame>,
    /// Camera depth per pixel, 0 where the ray escapes.
    pub depths: Vec<DepthMap>,
    pub masks: Vec<SemanticMask>,
}

fn id(t: &Taxonomy, name: &str) -> ClassId {
    t.id_of(name).unwrap_or_else(|| panic!("taxonomy lacks class {name}"))
}

fn overlaps(a: [f64; 4], b: [f64; 4], gap: f64) -> bool {
    a[0] < b[2] + gap && b[0] < a[2] + gap && a[1] < b[3] + gap && b[1] < a[3] + gap
}

impl SynthSceneSpec {
    /// A 150 m square block: two roads, a parking lot, buildings, vehicles
    /// on the roads and trees on the grass, flown oblique and nadir at 50 and 40 m.
    pub fn aerial_block(seed: u64, taxonomy: &Taxonomy) -> Self {
        Self::layout(seed, taxonomy, 150.0, 10, 12, 16)
    }

    /// A 60 m square with one building, two vehicles and two trees.
    pub fn small(seed: u64, taxonomy: &Taxonomy) -> Self {
        Self::layout(seed, taxonomy, 60.0, 1, 2, 2)
    }

    fn layout(seed: u64, t: &Taxonomy, size: f64, buildings: usize, vehicles: usize, trees: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a70);
        let road = id(t, "road");
        let h_road = [0.0, 0.32 * size, size, 0.32 * size + 8.0];
        let v_road = [0.64 * size, 0.0, 0.64 * size + 8.0, size];
        let lot = [0.08 * size, 0.72 * size, 0.08 * size + 16.0, 0.72 * size + 12.0];
        let regions = vec![
            GroundRegion { rect: lot, class: id(t, "parking_lot") },
            GroundRegion { rect: h_road, class: road },
            GroundRegion { rect: v_road, class: road },
        ];
        let paved = [h_road, v_road, lot];
        let mut primitives = Vec::new();
        let mut taken: Vec<[f64; 4]> = Vec::new();

        let mut attempts = 0;
        while primitives.len() < buildings && attempts < 10_000 {
            attempts += 1;
            let span = (0.2 * size).min(18.0);
            let (w, d) = (rng.random_range(10.0..span), rng.random_range(10.0..span));
            let h = rng.random_range(4.0..9.0);
            // keep walls well inside the flown area so some camera faces each
            let inset = (0.1 * size).min(15.0);
            let x = rng.random_range(inset..size - inset - w);
            let y = rng.random_range(inset..size - inset - d);
            let fp = [x, y, x + w, y + d];
            if paved.iter().any(|p| overlaps(fp, *p, 2.0)) || taken.iter().any(|p| overlaps(fp, *p, 12.0)) {
                continue;
            }
            taken.push(fp);
            primitives.push(Primitive { shape: Shape::Box { min: [x, y, 0.0], max: [x + w, y + d, h] }, class: id(t, "building"), density: 30.0 });
        }

        let mut placed = 0;
        attempts = 0;
        while placed < vehicles && attempts < 10_000 {
            attempts += 1;
            let along_x = rng.random_bool(0.5);
            let (len, wid) = (4.5, 1.9);
            let fp = if along_x {
                let x = rng.random_range(2.0..size - 2.0 - len);
                let y = h_road[1] + rng.random_range(1.0..8.0 - 1.0 - wid);
                [x, y, x + len, y + wid]
            } else {
                let x = v_road[0] + rng.random_range(1.0..8.0 - 1.0 - wid);
                let y = rng.random_range(2.0..size - 2.0 - len);
                [x, y, x + wid, y + len]
            };
            if taken.iter().any(|p| overlaps(fp, *p, 3.0)) {
                continue;
            }
            taken.push(fp);
            placed += 1;
            primitives.push(Primitive {
                shape: Shape::Box { min: [fp[0], fp[1], 0.0], max: [fp[2], fp[3], 1.5] },
                class: id(t, "vehicle"),
                density: 200.0,
            });
        }

        placed = 0;
        attempts = 0;
        while placed < trees && attempts < 10_000 {
            attempts += 1;
            let r = rng.random_range(2.0..3.0);
            let x = rng.random_range(r + 1.0..size - r - 1.0);
            let y = rng.random_range(r + 1.0..size - r - 1.0);
            let fp = [x - r, y - r, x + r, y + r];
            if paved.iter().any(|p| overlaps(fp, *p, 1.0)) || taken.iter().any(|p| overlaps(fp, *p, 3.0)) {
                continue;
            }
            taken.push(fp);
            placed += 1;
            let cz = r + rng.random_range(2.0..3.0);
            let tree = id(t, "tree");
            primitives.push(Primitive { shape: Shape::Sphere { center: [x, y, cz], radius: r }, class: tree, density: 15.0 });
            primitives.push(Primitive {
                shape: Shape::Cylinder { center: [x, y], radius: 0.3, z0: 0.0, z1: cz - r + 0.3 },
                class: tree,
                density: 15.0,
            });
        }

        Self {
            seed,
            ground: GroundSpec { extent: [size, size], base_class: id(t, "grass"), regions, density: 20.0 },
            primitives,
            cameras: CameraPattern {
                flights: vec![
                    Flight { altitude: 50.0, tilt_deg: 15.0 },
                    Flight { altitude: 40.0, tilt_deg: 15.0 },
                    Flight { altitude: 50.0, tilt_deg: 0.0 },
                    Flight { altitude: 40.0, tilt_deg: 0.0 },
                ],
                side_overlap: 0.67,
                forward_overlap: 0.74,
                serpentine: false,
                width: 160,
                height: 160,
                focal: 115.0,
            },
            min_views: 3,
            max_incidence_deg: 75.0,
            visibility: DepthTolerance::for_voxel_size(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [ex, ey] = self.ground.extent;
        if !(ex > 0.0 && ey > 0.0) {
            return Err(Error::InvalidInput("ground extent must be positive".into()));
        }
        if !(self.ground.density > 0.0) || self.primitives.iter().any(|p| !(p.density > 0.0)) {
            return Err(Error::InvalidInput("densities must be positive".into()));
        }
        let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= ex && y <= ey;
        for p in &self.primitives {
            let ok = match p.shape {
                Shape::Box { min, max } => inside(min[0], min[1]) && inside(max[0], max[1]) && (0..3).all(|a| max[a] > min[a]),
                Shape::Sphere { center, radius } => {
                    radius > 0.0 && inside(center[0] - radius, center[1] - radius) && inside(center[0] + radius, center[1] + radius)
                }
                Shape::Cylinder { center, radius, z0, z1 } => {
                    radius > 0.0 && z1 > z0 && inside(center[0] - radius, center[1] - radius) && inside(center[0] + radius, center[1] + radius)
                }
            };
            if !ok {
                return Err(Error::InvalidInput(format!("primitive {:?} is degenerate or outside the ground extent", p.shape)));
            }
        }
        let c = &self.cameras;
        let overlap_ok = |o: f64| o > 0.0 && o < 1.0;
        if c.flights.is_empty()
            || c.flights.iter().any(|f| !(f.altitude > 0.0) || !(0.0..60.0).contains(&f.tilt_deg))
            || !(c.focal > 0.0 && c.width > 0 && c.height > 0)
            || !overlap_ok(c.side_overlap)
            || !overlap_ok(c.forward_overlap)
        {
            return Err(Error::InvalidInput("bad camera pattern".into()));
        }
        if !(self.max_incidence_deg > 0.0 && self.max_incidence_deg <= 90.0) {
            return Err(Error::InvalidInput("max_incidence_deg must be in (0, 90]".into()));
        }
        if self.min_views == 0 {
            return Err(Error::InvalidInput("min_views must be at least 1".into()));
        }
        Ok(())
    }

    /// Ground class at `(x, y)`; empty outside the extent.
    pub fn ground_class(&self, x: f64, y: f64) -> ClassId {
        let [ex, ey] = self.ground.extent;
        if !(x >= 0.0 && y >= 0.0 && x <= ex && y <= ey) {
            return EMPTY;
        }
        self.ground
            .regions
            .iter()
            .rev()
            .find(|r| x >= r.rect[0] && x <= r.rect[2] && y >= r.rect[1] && y <= r.rect[3])
            .map_or(self.ground.base_class, |r| r.class)
    }

    /// Class of the solid containing `p`: primitives first, then the ground
    /// as the half-space below `z = 0`. Empty elsewhere.
    pub fn class_at(&self, p: &Point3) -> ClassId {
        for prim in &self.primitives {
            if shape_distance(&prim.shape, p) <= 0.0 {
                return prim.class;
            }
        }
        if p.z <= 0.0 {
            self.ground_class(p.x, p.y)
        } else {
            EMPTY
        }
    }

    /// Outward normal at surface point `p`: that of the nearest primitive
    /// surface, or the ground's when no primitive surface passes through it.
    pub fn normal_at(&self, p: &Point3) -> Vector3<f64> {
        self.primitives
            .iter()
            .map(|o| (shape_distance(&o.shape, p).abs(), &o.shape))
            .filter(|(d, _)| *d < 1e-6)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(Vector3::z(), |(_, s)| shape_normal(s, p))
    }

    /// Every class whose solid lies within `tol` of `p`.
    pub fn classes_near(&self, p: &Point3, tol: f64) -> Vec<ClassId> {
        let mut out: Vec<ClassId> = self.primitives.iter().filter(|pr| shape_distance(&pr.shape, p) <= tol).map(|pr| pr.class).collect();
        if p.z <= tol {
            for (dx, dy) in [(0.0, 0.0), (tol, 0.0), (-tol, 0.0), (0.0, tol), (0.0, -tol)] {
                let c = self.ground_class(p.x + dx, p.y + dy);
                if c != EMPTY {
                    out.push(c);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Nearest surface hit along `origin + t * dir` for `t > 0`.
    pub fn ray_cast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<(f64, ClassId)> {
        let mut best: Option<(f64, ClassId)> = None;
        let mut offer = |t: f64, c: ClassId| {
            if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, c));
            }
        };
        if dir.z < 0.0 && origin.z > 0.0 {
            let t = -origin.z / dir.z;
            let c = self.ground_class(origin.x + t * dir.x, origin.y + t * dir.y);
            if c != EMPTY {
                offer(t, c);
            }
        }
        for prim in &self.primitives {
            if let Some(t) = shape_ray(&prim.shape, origin, dir) {
                offer(t, prim.class);
            }
        }
        best
    }

    /// Camera ground footprints and the double-grid frames.
    pub fn flight_plan(&self) -> Result<Vec<CameraFrame>> {
        double_grid(&self.cameras, self.ground.extent)
    }
}

/// Signed distance from `p` to a solid (negative inside, exact outside).
pub fn shape_distance(shape: &Shape, p: &Point3) -> f64 {
    match *shape {
        Shape::Box { min, max } => {
            let mut out = 0.0f64;
            let mut inside = f64::NEG_INFINITY;
            for a in 0..3 {
                let d = (min[a] - p[a]).max(p[a] - max[a]);
                out += d.max(0.0).powi(2);
                inside = inside.max(d);
            }
            if out > 0.0 {
                out.sqrt()
            } else {
                inside
            }
        }
        Shape::Sphere { center, radius } => (p - Point3::from(center)).norm() - radius,
        Shape::Cylinder { center, radius, z0, z1 } => {
            let radial = (p.x - center[0]).hypot(p.y - center[1]) - radius;
            let axial = (z0 - p.z).max(p.z - z1);
            if radial > 0.0 || axial > 0.0 {
                radial.max(0.0).hypot(axial.max(0.0))
            } else {
                radial.max(axial)
            }
        }
    }
}

/// Outward unit normal of `shape` at surface point `p`.
pub fn shape_normal(shape: &Shape, p: &Point3) -> Vector3<f64> {
    match *shape {
        Shape::Box { min, max } => {
            let mut best = (f64::INFINITY, Vector3::z());
            for a in 0..3 {
                let mut n = Vector3::zeros();
                for (gap, sign) in [((p[a] - min[a]).abs(), -1.0), ((p[a] - max[a]).abs(), 1.0)] {
                    if gap < best.0 {
                        n[a] = sign;
                        best = (gap, n);
                    }
                }
            }
            best.1
        }
        Shape::Sphere { center, .. } => (p - Point3::from(center)).normalize(),
        Shape::Cylinder { center, radius, z1, .. } => {
            let radial = Vector3::new(p.x - center[0], p.y - center[1], 0.0);
            if (p.z - z1).abs() < (radial.norm() - radius).abs() {
                Vector3::z()
            } else {
                radial.normalize()
            }
        }
    }
}

fn shape_ray(shape: &Shape, o: &Point3, d: &Vector3<f64>) -> Option<f64> {
    match *shape {
        Shape::Box { min, max } => {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for a in 0..3 {
                if d[a] == 0.0 {
                    if o[a] < min[a] || o[a] > max[a] {
                        return None;
                    }
                } else {
                    let (ta, tb) = ((min[a] - o[a]) / d[a], (max[a] - o[a]) / d[a]);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
            }
            (t0 <= t1 && t0 > 0.0).then_some(t0)
        }
        Shape::Sphere { center, radius } => {
            let oc = o - Point3::from(center);
            let a = d.norm_squared();
            let b = oc.dot(d);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return None;
            }
            let t = (-b - disc.sqrt()) / a;
            (t > 0.0).then_some(t)
        }
        Shape::Cylinder { center, radius, z0, z1 } => {
            let mut best = f64::INFINITY;
            let (ox, oy) = (o.x - center[0], o.y - center[1]);
            let a = d.x * d.x + d.y * d.y;
            if a > 0.0 {
                let b = ox * d.x + oy * d.y;
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let t = (-b - disc.sqrt()) / a;
                    let z = o.z + t * d.z;
                    if t > 0.0 && z >= z0 && z <= z1 {
                        best = t;
                    }
                }
            }
            for zc in [z0, z1] {
                if d.z != 0.0 {
                    let t = (zc - o.z) / d.z;
                    let (x, y) = (ox + t * d.x, oy + t * d.y);
                    if t > 0.0 && x * x + y * y <= radius * radius {
                        best = best.min(t);
                    }
                }
            }
            best.is_finite().then_some(best)
        }
    }
}

/// Intersection of a camera's image-corner rays with the ground plane.
pub fn footprint(frame: &CameraFrame) -> Option<Vec<[f64; 2]>> {
    let intr = &frame.intrinsics;
    let (w, h) = (intr.width as f64, intr.height as f64);
    let c = frame.pose.center();
    let rt = frame.pose.rotation().transpose();
    let mut poly = Vec::with_capacity(4);
    for (u, v) in [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)] {
        let d = rt * intr.ray_direction(u, v);
        if d.z >= 0.0 {
            return None;
        }
        let t = -c.z / d.z;
        poly.push([c.x + t * d.x, c.y + t * d.y]);
    }
    Some(poly)
}

/// Shoelace area, absolute.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

/// Intersection of two convex polygons (Sutherland-Hodgman).
pub fn convex_intersection(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let orient = {
        let mut s = 0.0;
        for i in 0..clip.len() {
            let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
            s += a[0] * b[1] - a[1] * b[0];
        }
        s.signum()
    };
    let side = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| orient * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]));
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(a, b, p), side(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

/// Fraction of `a`'s footprint that `b` also covers.
pub fn footprint_overlap(a: &CameraFrame, b: &CameraFrame) -> f64 {
    match (footprint(a), footprint(b)) {
        (Some(fa), Some(fb)) => {
            let area = polygon_area(&fa);
            if area > 0.0 {
                polygon_area(&convex_intersection(&fa, &fb)) / area
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Camera at `eye` flying along unit heading `flight`, pitched forward by
/// `tilt_deg`.
fn pattern_camera(p: &CameraPattern, id: u32, eye: Point3, flight: Vector3<f64>, tilt_deg: f64) -> Result<CameraFrame> {
    let tilt = tilt_deg.to_radians();
    let view = flight * tilt.sin() - Vector3::z() * tilt.cos();
    let pose = Pose::look_at(&eye, &(eye + view), &flight)?;
    let intrinsics = CameraIntrinsics::new(p.focal, p.focal, p.width as f64 / 2.0, p.height as f64 / 2.0, p.width, p.height)?;
    Ok(CameraFrame { id, intrinsics, pose })
}

/// Spacing at which two cameras offset along `offset` reach overlap `target`.
fn spacing_for(p: &CameraPattern, flight: &Flight, offset: Vector3<f64>, target: f64) -> Result<f64> {
    let eye = Point3::new(0.0, 0.0, flight.altitude);
    let a = pattern_camera(p, 0, eye, Vector3::x(), flight.tilt_deg)?;
    let ratio = |s: f64| -> Result<f64> {
        let b = pattern_camera(p, 1, eye + offset * s, Vector3::x(), flight.tilt_deg)?;
        Ok(footprint_overlap(&a, &b))
    };
    let (mut lo, mut hi) = (0.0, 10.0 * flight.altitude);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Forward and side spacing of the pattern for one flight.
pub fn pattern_spacing(p: &CameraPattern, flight: &Flight) -> Result<(f64, f64)> {
    let forward = spacing_for(p, flight, Vector3::x(), p.forward_overlap)?;
    let side = spacing_for(p, flight, Vector3::y(), p.side_overlap)?;
    Ok((forward, side))
}

/// Double-grid flights: per flight, pass A flies strips along x and pass B
/// along y, each covering `[0, extent]` on both axes. Frame ids start at 1.
/// Serpentine patterns fly every other strip backwards.
pub fn double_grid(p: &CameraPattern, extent: [f64; 2]) -> Result<Vec<CameraFrame>> {
    let steps = |len: f64, s: f64| (len / s + 1e-9).floor() as usize + 1;
    let mut frames = Vec::new();
    let mut next = 1u32;
    for flight in &p.flights {
        let (fwd, side) = pattern_spacing(p, flight)?;
        for along_x in [true, false] {
            let (len_along, len_across) = if along_x { (extent[0], extent[1]) } else { (extent[1], extent[0]) };
            let axis = if along_x { Vector3::x() } else { Vector3::y() };
            let count = steps(len_along, fwd);
            for s in 0..steps(len_across, side) {
                let back = p.serpentine && s % 2 == 1;
                let heading = if back { -axis } else { axis };
                for f in 0..count {
                    let f = if back { count - 1 - f } else { f };
                    let (a, c) = (f as f64 * fwd, s as f64 * side);
                    let (x, y) = if along_x { (a, c) } else { (c, a) };
                    let eye = Point3::new(x, y, flight.altitude);
                    frames.push(pattern_camera(p, next, eye, heading, flight.tilt_deg)?);
                    next += 1;
                }
            }
        }
    }
    Ok(frames)
}

/// Ray-cast depth and class images of one frame.
pub fn render(spec: &SynthSceneSpec, frame: &CameraFrame) -> (DepthMap, SemanticMask) {
    let intr = &frame.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let c = frame.pose.center();
    let rt = frame.pose.rotation().transpose();
    let hits: Vec<(f32, ClassId)> = (0..w as usize * h as usize)
        .map(|i| {
            let (u, v) = ((i % w as usize) as f64 + 0.5, (i / w as usize) as f64 + 0.5);
            // unit camera depth along the ray, so t is the depth
            let dir = rt * intr.ray_direction(u, v);
            spec.ray_cast(&c, &dir).map_or((0.0, EMPTY), |(t, cl)| (t as f32, cl))
        })
        .collect();
    let depth = Raster::from_vec(w, h, hits.iter().map(|x| x.0).collect()).expect("sized");
    let labels = Raster::from_vec(w, h, hits.iter().map(|x| x.1).collect()).expect("sized");
    (depth, SemanticMask { frame_id: frame.id, labels })
}

fn sample_rect(rng: &mut ChaCha8Rng, out: &mut Vec<Point3>, origin: Point3, e1: Vector3<f64>, e2: Vector3<f64>, density: f64) {
    let area = e1.cross(&e2).norm();
    let n = (area * density).round() as usize;
    for _ in 0..n {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        out.push(origin + e1 * a + e2 * b);
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, shape: &Shape, density: f64) -> Vec<Point3> {
    let mut out = Vec::new();
    match *shape {
        Shape::Box { min, max } => {
            let (lo, hi) = (Point3::from(min), Point3::from(max));
            let (dx, dy, dz) = (Vector3::x() * (hi.x - lo.x), Vector3::y() * (hi.y - lo.y), Vector3::z() * (hi.z - lo.z));
            sample_rect(rng, &mut out, Point3::new(lo.x, lo.y, hi.z), dx, dy, density);
            sample_rect(rng, &mut out, lo, dx, dz, density);
            sample_rect(rng, &mut out, Point3::new(lo.x, hi.y, lo.z), dx, dz, density);
            sample_rect(rng, &mut out, lo, dy, dz, density);
            sample_rect(rng, &mut out, Point3::new(hi.x, lo.y, lo.z), dy, dz, density);
        }
        Shape::Sphere { center, radius } => {
            let n = (4.0 * std::f64::consts::PI * radius * radius * density).round() as usize;
            for _ in 0..n {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - z * z).sqrt();
                out.push(Point3::new(center[0] + radius * s * phi.cos(), center[1] + radius * s * phi.sin(), center[2] + radius * z));
            }
        }
        Shape::Cylinder { center, radius, z0, z1 } => {
            let side = (std::f64::consts::TAU * radius * (z1 - z0) * density).round() as usize;
            for _ in 0..side {
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random_range(z0..z1);
                out.push(Point3::new(center[0] + radius * phi.cos(), center[1] + radius * phi.sin(), z));
            }
            let cap = (std::f64::consts::PI * radius * radius * density).round() as usize;
            for _ in 0..cap {
                let rr = radius * rng.random::<f64>().sqrt();
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                out.push(Point3::new(center[0] + rr * phi.cos(), center[1] + rr * phi.sin(), z1));
            }
        }
    }
    out
}

fn covers_ground(shape: &Shape, x: f64, y: f64) -> bool {
    match *shape {
        Shape::Box { min, max } => min[2] <= 0.0 && x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1],
        Shape::Cylinder { center, radius, z0, .. } => z0 <= 0.0 && (x - center[0]).hypot(y - center[1]) <= radius,
        Shape::Sphere { center, radius } => center[2] - radius <= 0.0 && (x - center[0]).hypot(y - center[1]) <= radius,
    }
}

/// Surface samples with true classes, before the visibility filter. The
/// stream order is: ground, then primitives in list order.
pub fn sample_surfaces(spec: &SynthSceneSpec) -> SemanticPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cloud = SemanticPointCloud::default();
    let [ex, ey] = spec.ground.extent;
    let n = (ex * ey * spec.ground.density).round() as usize;
    for _ in 0..n {
        let (x, y) = (rng.random::<f64>() * ex, rng.random::<f64>() * ey);
        if spec.primitives.iter().any(|p| covers_ground(&p.shape, x, y)) {
            continue;
        }
        cloud.push(Point3::new(x, y, 0.0), spec.ground_class(x, y));
    }
    for prim in &spec.primitives {
        for p in sample_shape(&mut rng, &prim.shape, prim.density) {
            // drop samples buried in another solid, e.g. a trunk inside its crown
            if spec.primitives.iter().any(|o| o != prim && shape_distance(&o.shape, &p) < 0.0) {
                continue;
            }
            cloud.push(p, prim.class);
        }
    }
    cloud
}

pub fn generate_scene(spec: &SynthSceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let frames = spec.flight_plan()?;
    let rendered: Vec<(DepthMap, SemanticMask)> = frames.par_iter().map(|f| render(spec, f)).collect();
    let (depths, masks): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    let raw = sample_surfaces(spec);
    let normals: Vec<Vector3<f64>> = raw.positions.par_iter().map(|p| spec.normal_at(p)).collect();
    let min_cos = spec.max_incidence_deg.to_radians().cos() - 1e-12;
    let mut seen = vec![0u32; raw.len()];
    for (f, d) in frames.iter().zip(&depths) {
        let eye = f.pose.center();
        for pair in compute_correspondences(&raw.positions, f, d, spec.visibility)?.pairs {
            let i = pair.point as usize;
            if normals[i].dot(&(eye - raw.positions[i]).normalize()) >= min_cos {
                seen[i] += 1;
            }
        }
    }
    let keep: Vec<usize> = (0..raw.len()).filter(|&i| seen[i] as usize >= spec.min_views).collect();
    Ok(SynthScene { spec: spec.clone(), cloud: raw.subset(&keep), frames, depths, masks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprint_overlaps_match_pattern() {
        let t = Taxonomy::aerial();
        let spec = SynthSceneSpec::aerial_block(1, &t);
        let frames = spec.flight_plan().unwrap();
        let (fwd, side) = pattern_spacing(&spec.cameras, &spec.cameras.flights[0]).unwrap();
        let per_strip = (150.0 / fwd + 1e-9).floor() as usize + 1;
        // consecutive frames of the first strip and the same slot on the next strip
        let f = footprint_overlap(&frames[0], &frames[1]);
        let s = footprint_overlap(&frames[0], &frames[per_strip]);
        assert!((f - 0.74).abs() <= 0.02, "forward {f}");
        assert!((s - 0.67).abs() <= 0.02, "side {s}");
        assert!((frames[per_strip].pose.center().y - side).abs() < 1e-9);
        assert!(frames.len() >= 200, "{}", frames.len());
    }

    #[test]
    fn same_seed_same_scene() {
        let t = Taxonomy::aerial();
        let a = generate_scene(&SynthSceneSpec::small(3, &t)).unwrap();
        let b = generate_scene(&SynthSceneSpec::small(3, &t)).unwrap();
        assert_eq!(a, b);
        let c = SynthSceneSpec::small(4, &t);
        assert_ne!(a.spec.primitives, c.primitives);
    }

    #[test]
    fn presets_place_every_building() {
        let t = Taxonomy::aerial();
        let b = t.id_of("building").unwrap();
        for seed in 1..=10 {
            let count = |s: &SynthSceneSpec| s.primitives.iter().filter(|p| p.class == b).count();
            assert_eq!(count(&SynthSceneSpec::small(seed, &t)), 1, "seed {seed}");
            assert_eq!(count(&SynthSceneSpec::aerial_block(seed, &t)), 10, "seed {seed}");
        }
    }

    #[test]
    fn samples_agree_with_analytic_classes() {
        let t = Taxonomy::aerial();
        let scene = generate_scene(&SynthSceneSpec::small(5, &t)).unwrap();
        assert!(scene.cloud.len() > 1000);
        for (p, &c) in scene.cloud.positions.iter().zip(&scene.cloud.labels) {
            assert!(scene.spec.classes_near(p, 1e-6).contains(&c), "{p:?} {c}");
        }
    }

    #[test]
    fn box_occludes_ground_in_nadir_view() {
        let t = Taxonomy::aerial();
        let mut spec = SynthSceneSpec::small(1, &t);
        spec.primitives = vec![Primitive { shape: Shape::Box { min: [20.0, 20.0, 0.0], max: [30.0, 30.0, 8.0] }, class: 1, density: 30.0 }];
        let frame = pattern_camera(&spec.cameras, 1, Point3::new(25.0, 25.0, 40.0), Vector3::x(), 0.0).unwrap();
        let (depth, mask) = render(&spec, &frame);
        assert_eq!(mask.labels.get(80, 80), 1);
        assert!((depth.get(80, 80) - 32.0).abs() < 1e-4);
        assert_ne!(mask.labels.get(20, 20), 1);
        assert!((depth.get(20, 20) as f64 - 40.0).abs() < 1e-3);
    }

    #[test]
    fn shape_distances() {
        let b = Shape::Box { min: [0.0; 3], max: [1.0; 3] };
        assert!((shape_distance(&b, &Point3::new(2.0, 0.5, 0.5)) - 1.0).abs() < 1e-12);
        assert!(shape_distance(&b, &Point3::new(0.5, 0.5, 0.5)) < 0.0);
        let c = Shape::Cylinder { center: [0.0, 0.0], radius: 1.0, z0: 0.0, z1: 2.0 };
        assert!((shape_distance(&c, &Point3::new(2.0, 0.0, 3.0)) - 2f64.sqrt()).abs() < 1e-12);
        let o = Point3::new(0.0, 0.0, 10.0);
        assert_eq!(shape_ray(&c, &o, &-Vector3::z()), Some(8.0));
        assert!(convex_intersection(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], &[[2.0, 2.0], [3.0, 2.0], [3.0, 3.0]]).is_empty());
        let half = convex_intersection(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]], &[[1.0, -1.0], [3.0, -1.0], [3.0, 3.0], [1.0, 3.0]]);
        assert!((polygon_area(&half) - 2.0).abs() < 1e-12);
    }
}
