//! Virtual cameras placed around an instance for silhouette extraction.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CameraFrame, CameraIntrinsics, Point3, Pose};
use crate::raster::Raster;

use super::Aabb;

/// Edge length of the square silhouette raster.
pub const SILHOUETTE_SIZE: u32 = 256;
/// Default number of views per instance.
pub const DEFAULT_VIEWS: usize = 24;

/// A virtual camera with its binary silhouette.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualView {
    pub camera: CameraFrame,
    pub silhouette: Raster<bool>,
}

/// `count` unit directions on a Fibonacci spiral, from the north pole down.
pub fn fibonacci_sphere(count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// Place `count` cameras quasi-uniformly on a sphere around `bbox`, each looking
/// at the box center. The sphere radius is twice the diagonal of the box
/// dilated by `margin`, and the focal length is fitted so the dilated box
/// projects into the central 80% of a square [`SILHOUETTE_SIZE`] image.
pub fn place_virtual_cameras(bbox: &Aabb, margin: f64, count: usize) -> Result<Vec<CameraFrame>> {
    if count < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 virtual views, got {count}")));
    }
    if !(bbox.diagonal() > 0.0) {
        return Err(Error::Degenerate("instance bounding box has zero extent".into()));
    }
    let dilated = bbox.dilated(margin.max(0.0));
    let center = dilated.center();
    let radius = 2.0 * dilated.diagonal();
    let size = SILHOUETTE_SIZE as f64;
    let half = size / 2.0;
    fibonacci_sphere(count)
        .into_iter()
        .enumerate()
        .map(|(k, dir)| {
            let eye = center + dir * radius;
            let pose = Pose::look_at(&eye, &center, &Vector3::z())?;
            let mut max_tan = 0.0f64;
            for c in dilated.corners() {
                let pc = pose.world_to_camera(&c);
                max_tan = max_tan.max((pc.x / pc.z).abs()).max((pc.y / pc.z).abs());
            }
            let focal = 0.8 * half / max_tan;
            let intrinsics = CameraIntrinsics::new(focal, focal, half, half, SILHOUETTE_SIZE, SILHOUETTE_SIZE)?;
            Ok(CameraFrame { id: k as u32, intrinsics, pose })
        })
        .collect()
}

/// Angle in degrees between two virtual camera centers as seen from `center`.
pub fn angular_separation(a: &CameraFrame, b: &CameraFrame, center: &Point3) -> f64 {
    let da = (a.pose.center() - center).normalize();
    let db = (b.pose.center() - center).normalize();
    da.dot(&db).clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    fn vehicle_box() -> Aabb {
        Aabb { min: Point3::new(10.0, 5.0, 0.0), max: Point3::new(14.5, 6.8, 1.5) }
    }

    #[test]
    fn twenty_four_views_are_well_separated() {
        let b = vehicle_box();
        let views = place_virtual_cameras(&b, 1.0, 24).unwrap();
        assert_eq!(views.len(), 24);
        let c = b.dilated(1.0).center();
        let mut min_sep = f64::INFINITY;
        for i in 0..24 {
            for j in i + 1..24 {
                min_sep = min_sep.min(angular_separation(&views[i], &views[j], &c));
            }
        }
        assert!(min_sep > 20.0, "min separation {min_sep}");
    }

    #[test]
    fn dilated_box_projects_inside_every_view() {
        let b = vehicle_box();
        let dilated = b.dilated(1.0);
        for view in place_virtual_cameras(&b, 1.0, 24).unwrap() {
            for corner in dilated.corners() {
                let pr = project(&corner, &view);
                assert!(pr.depth > 0.0);
                for x in [pr.u, pr.v] {
                    assert!(x >= 0.1 * SILHOUETTE_SIZE as f64 - 1e-9 && x <= 0.9 * SILHOUETTE_SIZE as f64 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn two_views_are_nearly_opposite() {
        let b = vehicle_box();
        let views = place_virtual_cameras(&b, 0.5, 2).unwrap();
        let sep = angular_separation(&views[0], &views[1], &b.dilated(0.5).center());
        assert!(sep > 120.0, "{sep}");
        // first and last spiral samples sit in opposite hemispheres
        let c = b.dilated(0.5).center();
        assert!(views[0].pose.center().z > c.z && views[1].pose.center().z < c.z);
    }

    #[test]
    fn degenerate_inputs() {
        let p = Point3::new(1.0, 1.0, 1.0);
        assert!(place_virtual_cameras(&Aabb { min: p, max: p }, 1.0, 24).is_err());
        assert!(place_virtual_cameras(&vehicle_box(), 1.0, 1).is_err());
    }
}
