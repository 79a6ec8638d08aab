//! Annotation frame selection and 3D coverage.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project, CameraFrame, Point3};
use crate::raster::DepthMap;

/// Edge of the horizontal stratification cells in meters.
pub const DEFAULT_CELL_SIZE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Correspondence {
    /// Integer pixel `(column, row)` containing the projection.
    pub pixel: (u32, u32),
    pub point: u32,
}

/// Pixel/point associations of one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub frame_id: u32,
    pub pairs: Vec<Correspondence>,
}

/// Depth agreement threshold `max(relative * depth, absolute_m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthTolerance {
    pub relative: f64,
    pub absolute_m: f64,
}

impl DepthTolerance {
    pub fn fixed(meters: f64) -> Self {
        Self { relative: 0.0, absolute_m: meters }
    }

    /// Default visibility rule for a target voxel size `r`: `max(0.05 * depth, r)`.
    pub fn for_voxel_size(r: f64) -> Self {
        Self { relative: 0.05, absolute_m: r }
    }

    #[inline]
    pub fn at(&self, depth: f64) -> f64 {
        (self.relative * depth).max(self.absolute_m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub frames: BTreeSet<u32>,
    pub coverage: f64,
}

/// Associate every point that projects into the image in front of the camera
/// and agrees with the depth map at its pixel.
pub fn compute_correspondences(
    points: &[Point3],
    frame: &CameraFrame,
    depth_map: &DepthMap,
    tol: DepthTolerance,
) -> Result<CorrespondenceSet> {
    let intr = &frame.intrinsics;
    if depth_map.dims() != (intr.width, intr.height) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", intr.width, intr.height),
            actual: format!("{}x{}", depth_map.width(), depth_map.height()),
        });
    }
    let pairs = points
        .par_iter()
        .enumerate()
        .filter_map(|(m, p)| {
            let pr = project(p, frame);
            let (u, v) = pr.pixel(intr)?;
            let observed = depth_map.get(u, v) as f64;
            if !(observed > 0.0) || !observed.is_finite() {
                return None;
            }
            ((pr.depth - observed).abs() <= tol.at(pr.depth)).then_some(Correspondence { pixel: (u, v), point: m as u32 })
        })
        .collect();
    Ok(CorrespondenceSet { frame_id: frame.id, pairs })
}

fn nearest_frame(positions: &[(u32, f64, f64)], x: f64, y: f64) -> u32 {
    let mut best = (f64::INFINITY, u32::MAX);
    for &(id, px, py) in positions {
        let d2 = (px - x) * (px - x) + (py - y) * (py - y);
        if d2 < best.0 || (d2 == best.0 && id < best.1) {
            best = (d2, id);
        }
    }
    best.1
}

/// Spatially stratified frame selection over the ground plane (world `z = 0`).
///
/// The bounding rectangle of the camera positions is covered by square cells
/// of `cell_size`, centered on the rectangle. Every cell contributes the frame
/// nearest its center; cells on the rectangle border also contribute the frame
/// nearest the midpoint of each outer edge (the corner point for corner
/// cells). Ties go to the smaller frame id.
pub fn stratified_select(frames: &[CameraFrame], cell_size: f64) -> Result<BTreeSet<u32>> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("stratified selection needs at least one frame".into()));
    }
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_size}")));
    }
    let positions: Vec<(u32, f64, f64)> = frames
        .iter()
        .map(|f| {
            let c = f.pose.center();
            (f.id, c.x, c.y)
        })
        .collect();
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(_, x, y) in &positions {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let cells = |extent: f64| ((extent / cell_size).ceil() as usize).max(1);
    let (nx, ny) = (cells(max_x - min_x), cells(max_y - min_y));
    let x0 = min_x - (nx as f64 * cell_size - (max_x - min_x)) * 0.5;
    let y0 = min_y - (ny as f64 * cell_size - (max_y - min_y)) * 0.5;

    let mut selected = BTreeSet::new();
    for ix in 0..nx {
        for iy in 0..ny {
            let (lo_x, lo_y) = (x0 + ix as f64 * cell_size, y0 + iy as f64 * cell_size);
            let (cx, cy) = (lo_x + 0.5 * cell_size, lo_y + 0.5 * cell_size);
            selected.insert(nearest_frame(&positions, cx, cy));

            let axis_anchors = |i: usize, n: usize, lo: f64, c: f64| -> Vec<f64> {
                let mut v = Vec::new();
                if i == 0 {
                    v.push(lo);
                }
                if i + 1 == n {
                    v.push(lo + cell_size);
                }
                if v.is_empty() {
                    v.push(c);
                }
                v
            };
            let on_border = ix == 0 || iy == 0 || ix + 1 == nx || iy + 1 == ny;
            if on_border {
                for ax in axis_anchors(ix, nx, lo_x, cx) {
                    for ay in axis_anchors(iy, ny, lo_y, cy) {
                        if ax == cx && ay == cy {
                            continue;
                        }
                        selected.insert(nearest_frame(&positions, ax, ay));
                    }
                }
            }
        }
    }
    Ok(selected)
}

/// Fraction of the `total_points` observed by at least one frame in `selected`.
pub fn coverage(sets: &[CorrespondenceSet], selected: &BTreeSet<u32>, total_points: usize) -> Result<f64> {
    if total_points == 0 {
        return Err(Error::InvalidInput("coverage needs at least one point".into()));
    }
    for id in selected {
        if !sets.iter().any(|s| s.frame_id == *id) {
            return Err(Error::UnknownFrame(*id));
        }
    }
    let mut seen = vec![false; total_points];
    for set in sets.iter().filter(|s| selected.contains(&s.frame_id)) {
        for c in &set.pairs {
            if let Some(flag) = seen.get_mut(c.point as usize) {
                *flag = true;
            }
        }
    }
    Ok(seen.iter().filter(|&&b| b).count() as f64 / total_points as f64)
}
