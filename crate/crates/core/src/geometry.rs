//! Pinhole camera model, rigid transforms and voxel-grid coordinate algebra.
//!
//! Camera convention: x right, y down, z along the optical axis. Pixel `(u, v)`
//! addresses column and row with the origin at the top-left image corner, and
//! pixel `(c, r)` covers `[c, c + 1) x [r, r + 1)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let ok = fx.is_finite()
            && fy.is_finite()
            && fx > 0.0
            && fy > 0.0
            && cx > 0.0
            && cy > 0.0
            && cx < width as f64
            && cy < height as f64;
        if !ok {
            return Err(Error::Geometry(format!(
                "intrinsics out of range: fx={fx} fy={fy} cx={cx} cy={cy} size={width}x{height}"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Ray direction through `(u, v)` in camera coordinates, scaled to unit depth.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// World-to-camera rigid transform: `p_cam = R * p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::Geometry("pose has non-finite entries".into()));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        let worst = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let det = rotation.determinant();
        if worst > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Geometry(format!(
                "rotation is not orthonormal (|RᵀR-I|={worst:e}, det={det})"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Pose of a camera at `eye` looking at `target`. `up_hint` is any world
    /// direction not parallel to the viewing direction; image "up" follows it.
    pub fn look_at(eye: &Point3, target: &Point3, up_hint: &Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        let norm = forward.norm();
        if !(norm > 0.0) {
            return Err(Error::Geometry("look_at with coincident eye and target".into()));
        }
        let z = forward / norm;
        let mut x = z.cross(up_hint);
        if x.norm() < 1e-9 {
            let alt = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            x = z.cross(&alt);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye.coords);
        Pose::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3 {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub id: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    /// Integer pixel holding this projection, if it lands in front of the camera and inside the image.
    pub fn pixel(&self, intr: &CameraIntrinsics) -> Option<(u32, u32)> {
        if self.depth > 0.0 && intr.contains(self.u, self.v) {
            Some((self.u.floor() as u32, self.v.floor() as u32))
        } else {
            None
        }
    }
}

/// Pinhole projection of a camera-frame point. Points behind the camera keep
/// their negative depth.
#[inline]
pub fn project_camera(pc: &Point3, intr: &CameraIntrinsics) -> Projection {
    Projection {
        u: intr.fx * pc.x / pc.z + intr.cx,
        v: intr.fy * pc.y / pc.z + intr.cy,
        depth: pc.z,
    }
}

#[inline]
pub fn project(p: &Point3, frame: &CameraFrame) -> Projection {
    project_camera(&frame.pose.world_to_camera(p), &frame.intrinsics)
}

pub fn back_project(u: f64, v: f64, depth: f64, frame: &CameraFrame) -> Result<Point3> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::Geometry(format!("back-projection needs positive depth, got {depth}")));
    }
    let pc = Point3::from(frame.intrinsics.ray_direction(u, v) * depth);
    Ok(frame.pose.camera_to_world(&pc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl VoxelIndex {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("point outside grid extent")]
pub struct OutOfBounds;

/// Where a grid sits in space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridAnchor {
    /// World-axis aligned, `origin` is the minimum corner.
    World { origin: Point3 },
    /// Attached to a camera. Axis 0 runs along the optical axis starting at
    /// depth `near`; axis 1 along image-right and axis 2 along image-down,
    /// both centered on the optical axis.
    Camera { near: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub anchor: GridAnchor,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], voxel_size: f64, anchor: GridAnchor) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::Geometry(format!("bad grid spec dims={dims:?} r={voxel_size}")));
        }
        Ok(Self { dims, voxel_size, anchor })
    }

    pub fn world(dims: [usize; 3], voxel_size: f64, origin: Point3) -> Result<Self> {
        Self::new(dims, voxel_size, GridAnchor::World { origin })
    }

    pub fn camera(dims: [usize; 3], voxel_size: f64, near: f64) -> Result<Self> {
        Self::new(dims, voxel_size, GridAnchor::Camera { near })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened position with axis 0 slowest: `(i * Y + j) * Z + k`.
    #[inline]
    pub fn linear(&self, v: VoxelIndex) -> usize {
        (v.i * self.dims[1] + v.j) * self.dims[2] + v.k
    }

    #[inline]
    pub fn unlinear(&self, idx: usize) -> VoxelIndex {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        VoxelIndex { i: rest / self.dims[1], j: rest % self.dims[1], k }
    }

    pub fn contains_index(&self, v: VoxelIndex) -> bool {
        v.i < self.dims[0] && v.j < self.dims[1] && v.k < self.dims[2]
    }

    /// Minimum corner offset so that `local = axis_coords - min`.
    #[inline]
    fn local_of(&self, p: &Point3) -> [f64; 3] {
        match self.anchor {
            GridAnchor::World { origin } => [p.x - origin.x, p.y - origin.y, p.z - origin.z],
            GridAnchor::Camera { near } => {
                let r = self.voxel_size;
                [
                    p.z - near,
                    p.x + self.dims[1] as f64 * r * 0.5,
                    p.y + self.dims[2] as f64 * r * 0.5,
                ]
            }
        }
    }

    #[inline]
    fn point_of_local(&self, l: [f64; 3]) -> Point3 {
        match self.anchor {
            GridAnchor::World { origin } => Point3::new(origin.x + l[0], origin.y + l[1], origin.z + l[2]),
            GridAnchor::Camera { near } => {
                let r = self.voxel_size;
                Point3::new(
                    l[1] - self.dims[1] as f64 * r * 0.5,
                    l[2] - self.dims[2] as f64 * r * 0.5,
                    l[0] + near,
                )
            }
        }
    }

    /// Grid-local coordinates (meters from the minimum corner, per grid axis).
    pub fn to_local(&self, p: &Point3) -> [f64; 3] {
        self.local_of(p)
    }

    pub fn from_local(&self, l: [f64; 3]) -> Point3 {
        self.point_of_local(l)
    }

    /// Half-open binning of a point given in the anchor frame.
    #[inline]
    pub fn voxel_index(&self, p: &Point3) -> Result<VoxelIndex, OutOfBounds> {
        let l = self.local_of(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = (l[a] / self.voxel_size).floor();
            if !(f >= 0.0) || f >= self.dims[a] as f64 {
                return Err(OutOfBounds);
            }
            out[a] = f as usize;
        }
        Ok(VoxelIndex { i: out[0], j: out[1], k: out[2] })
    }

    /// Cell center in the anchor frame.
    pub fn voxel_center(&self, v: VoxelIndex) -> Result<Point3> {
        if !self.contains_index(v) {
            return Err(Error::Geometry(format!("voxel {v:?} outside dims {:?}", self.dims)));
        }
        Ok(self.center_unchecked(v))
    }

    #[inline]
    pub fn center_unchecked(&self, v: VoxelIndex) -> Point3 {
        let r = self.voxel_size;
        self.point_of_local([
            (v.i as f64 + 0.5) * r,
            (v.j as f64 + 0.5) * r,
            (v.k as f64 + 0.5) * r,
        ])
    }

    /// Extent along each grid axis in meters.
    pub fn extent(&self) -> [f64; 3] {
        let r = self.voxel_size;
        [self.dims[0] as f64 * r, self.dims[1] as f64 * r, self.dims[2] as f64 * r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(pose: Pose) -> CameraFrame {
        CameraFrame {
            id: 0,
            intrinsics: CameraIntrinsics::new(500.0, 520.0, 320.0, 240.0, 640, 480).unwrap(),
            pose,
        }
    }

    fn rotation_from(ax: f64, ay: f64, az: f64) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_euler_angles(ax, ay, az).matrix()
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let pose = Pose::new(rotation_from(0.3, -0.2, 1.1), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let f = frame(pose);
        let p = pose.camera_to_world(&Point3::new(0.0, 0.0, 1.0));
        let pr = project(&p, &f);
        assert!((pr.u - 320.0).abs() < 1e-9 && (pr.v - 240.0).abs() < 1e-9);
        assert!((pr.depth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_has_negative_depth() {
        let pr = project(&Point3::new(0.0, 0.0, -1.0), &frame(Pose::identity()));
        assert_eq!(pr.depth, -1.0);
        assert!(pr.pixel(&frame(Pose::identity()).intrinsics).is_none());
    }

    #[test]
    fn back_project_principal_point() {
        let p = back_project(320.0, 240.0, 1.0, &frame(Pose::identity())).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn back_project_corner_matches_inverse_intrinsics() {
        let f = frame(Pose::identity());
        let d = 7.5;
        let p = back_project(0.0, 0.0, d, &f).unwrap();
        let kinv = f.intrinsics.matrix().try_inverse().unwrap();
        let expect = kinv * Vector3::new(0.0, 0.0, 1.0) * d;
        assert!((p.coords - expect).norm() < 1e-12);
    }

    #[test]
    fn back_project_rejects_non_positive_depth() {
        assert!(back_project(1.0, 1.0, 0.0, &frame(Pose::identity())).is_err());
        assert!(back_project(1.0, 1.0, -2.0, &frame(Pose::identity())).is_err());
    }

    #[test]
    fn round_trip_thousand_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let pose = Pose::new(
                rotation_from(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)),
                Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
            )
            .unwrap();
            let f = frame(pose);
            let u = rng.random_range(-100.0..740.0);
            let v = rng.random_range(-100.0..580.0);
            let d = rng.random_range(0.1..200.0);
            let p = back_project(u, v, d, &f).unwrap();
            let pr = project(&p, &f);
            assert!((pr.u - u).abs() < 1e-9 && (pr.v - v).abs() < 1e-9 && (pr.depth - d).abs() < 1e-9);
            let again = back_project(pr.u, pr.v, pr.depth, &f).unwrap();
            assert!((again - p).norm() < 1e-9);
        }
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-3;
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        assert!(Pose::new(-Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Point3::new(10.0, -4.0, 30.0);
        let target = Point3::new(1.0, 2.0, 0.5);
        let pose = Pose::look_at(&eye, &target, &Vector3::z()).unwrap();
        let pc = pose.world_to_camera(&target);
        assert!(pc.x.abs() < 1e-9 && pc.y.abs() < 1e-9 && pc.z > 0.0);
        // straight down with z as the up hint falls back to another axis
        let down = Pose::look_at(&eye, &Point3::new(10.0, -4.0, 0.0), &Vector3::z()).unwrap();
        assert!(down.world_to_camera(&Point3::new(10.0, -4.0, 0.0)).z > 0.0);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 2.0, 4, 4).is_ok());
    }

    fn unit_grid() -> GridSpec {
        GridSpec::world([192, 128, 128], 0.5, Point3::origin()).unwrap()
    }

    #[test]
    fn binning_examples() {
        let g = unit_grid();
        assert_eq!(g.voxel_index(&Point3::new(0.25, 0.25, 0.25)), Ok(VoxelIndex::new(0, 0, 0)));
        assert_eq!(g.voxel_index(&Point3::new(0.5, 0.25, 0.25)), Ok(VoxelIndex::new(1, 0, 0)));
        assert_eq!(g.voxel_index(&Point3::new(96.0, 1.0, 1.0)), Err(OutOfBounds));
        assert_eq!(g.voxel_index(&Point3::new(-1e-12, 1.0, 1.0)), Err(OutOfBounds));
        assert_eq!(g.voxel_index(&Point3::new(f64::NAN, 1.0, 1.0)), Err(OutOfBounds));
    }

    #[test]
    fn center_examples() {
        let g = unit_grid();
        assert_eq!(g.voxel_center(VoxelIndex::new(0, 0, 0)).unwrap(), Point3::new(0.25, 0.25, 0.25));
        assert_eq!(
            g.voxel_center(VoxelIndex::new(191, 127, 127)).unwrap(),
            Point3::new(95.75, 63.75, 63.75)
        );
        assert!(g.voxel_center(VoxelIndex::new(192, 0, 0)).is_err());
    }

    #[test]
    fn center_index_round_trip_exhaustive() {
        for anchor in [
            GridAnchor::World { origin: Point3::new(-3.3, 17.1, 0.7) },
            GridAnchor::Camera { near: 0.5 },
        ] {
            for dims in [[8, 8, 8], [32, 32, 32], [5, 17, 3]] {
                let g = GridSpec::new(dims, 0.37, anchor).unwrap();
                for idx in 0..g.len() {
                    let v = g.unlinear(idx);
                    assert_eq!(g.linear(v), idx);
                    assert_eq!(g.voxel_index(&g.voxel_center(v).unwrap()), Ok(v));
                }
            }
        }
    }

    #[test]
    fn camera_anchor_axes() {
        let g = GridSpec::camera([192, 128, 128], 0.5, 0.5).unwrap();
        // axis 0 runs along the optical axis from the near plane
        let c = g.voxel_center(VoxelIndex::new(0, 64, 64)).unwrap();
        assert_eq!(c, Point3::new(0.25, 0.25, 0.75));
        let far = g.voxel_center(VoxelIndex::new(191, 0, 127)).unwrap();
        assert_eq!(far, Point3::new(-31.75, 31.75, 96.25));
    }

    proptest! {
        #[test]
        fn pose_inverse_composes_to_identity(
            ax in -3.0f64..3.0, ay in -1.5f64..1.5, az in -3.0f64..3.0,
            tx in -100.0f64..100.0, ty in -100.0f64..100.0, tz in -100.0f64..100.0,
        ) {
            let pose = Pose::new(rotation_from(ax, ay, az), Vector3::new(tx, ty, tz)).unwrap();
            for id in [pose.compose(&pose.inverse()), pose.inverse().compose(&pose)] {
                let dr = (id.rotation() - Matrix3::identity()).amax();
                prop_assert!(dr < 1e-9);
                prop_assert!(id.translation().amax() < 1e-9);
            }
        }
    }
}
