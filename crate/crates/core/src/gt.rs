//! Per-frame ground-truth samples: frustum-culled label volumes with
//! invalid, surface and occluded masks, plus rendered depth.

use rayon::prelude::*;

use crate::densify::SceneGrid;
use crate::error::{Error, Result};
use crate::geometry::{project_camera, CameraFrame, GridAnchor, GridSpec, Point3, VoxelIndex};
use crate::raster::DepthMap;
use crate::taxonomy::{ClassId, EMPTY};

/// Default near clipping distance in meters.
pub const DEFAULT_D_MIN: f64 = 0.5;

/// Dense boolean volume in grid flattening order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVolume {
    pub dims: [usize; 3],
    pub bits: Vec<bool>,
}

impl BitVolume {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, bits: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub frame_id: u32,
    pub spec: GridSpec,
    pub labels: Vec<ClassId>,
}

impl FrameGrid {
    pub fn empty(frame_id: u32, spec: GridSpec) -> Self {
        Self { frame_id, spec, labels: vec![EMPTY; spec.len()] }
    }

    #[inline]
    pub fn get(&self, v: VoxelIndex) -> ClassId {
        self.labels[self.spec.linear(v)]
    }

    pub fn set(&mut self, v: VoxelIndex, c: ClassId) {
        let i = self.spec.linear(v);
        self.labels[i] = c;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub invalid: BitVolume,
    pub surface: BitVolume,
    pub occluded: BitVolume,
}

/// Frame-grid geometry and clipping range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtParams {
    pub spec: GridSpec,
    pub d_min: f64,
    pub d_max: f64,
    /// Cast one ray every `ray_stride` pixels along each image axis.
    pub ray_stride: u32,
    pub render_depth: bool,
}

impl GtParams {
    /// 192 × 128 × 128 voxels of 0.5 m, clipped to `[0.5, 0.5 + 96]` m.
    pub fn standard() -> Self {
        Self::for_spec(GridSpec::camera([192, 128, 128], 0.5, DEFAULT_D_MIN).expect("valid spec"))
    }

    /// Clip range matching the depth extent of a camera-anchored `spec`.
    pub fn for_spec(spec: GridSpec) -> Self {
        let near = match spec.anchor {
            GridAnchor::Camera { near } => near,
            GridAnchor::World { .. } => DEFAULT_D_MIN,
        };
        Self { spec, d_min: near, d_max: near + spec.extent()[0], ray_stride: 1, render_depth: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.spec.anchor, GridAnchor::Camera { .. }) {
            return Err(Error::Config("frame grid must be camera anchored".into()));
        }
        if !(self.d_min >= 0.0 && self.d_max > self.d_min) {
            return Err(Error::Config(format!("bad clip range [{}, {}]", self.d_min, self.d_max)));
        }
        if self.ray_stride == 0 {
            return Err(Error::Config("ray stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Whether a camera-frame point lies in the truncated frustum.
#[inline]
pub fn in_frustum(pc: &Point3, frame: &CameraFrame, d_min: f64, d_max: f64) -> bool {
    if !(pc.z >= d_min && pc.z <= d_max) || pc.z <= 0.0 {
        return false;
    }
    let pr = project_camera(pc, &frame.intrinsics);
    frame.intrinsics.contains(pr.u, pr.v)
}

fn require_camera_anchor(spec: &GridSpec) -> Result<()> {
    match spec.anchor {
        GridAnchor::Camera { .. } => Ok(()),
        GridAnchor::World { .. } => Err(Error::InvalidInput("frame grid must be camera anchored".into())),
    }
}

fn check_pose(frame: &CameraFrame) -> Result<()> {
    let ok = frame.pose.rotation().iter().chain(frame.pose.translation().iter()).all(|x| x.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::Geometry(format!("frame {} has a non-finite pose", frame.id)))
    }
}

/// Sample the scene at frame-grid voxel centers inside the frustum.
pub fn frustum_cull(scene: &SceneGrid, frame: &CameraFrame, d_min: f64, d_max: f64, spec: &GridSpec) -> Result<FrameGrid> {
    require_camera_anchor(spec)?;
    check_pose(frame)?;
    let plane = spec.dims[1] * spec.dims[2];
    let mut labels = vec![EMPTY; spec.len()];
    labels.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
        for j in 0..spec.dims[1] {
            for k in 0..spec.dims[2] {
                let pc = spec.center_unchecked(VoxelIndex { i, j, k });
                if in_frustum(&pc, frame, d_min, d_max) {
                    slab[j * spec.dims[2] + k] = scene.label_at(&frame.pose.camera_to_world(&pc));
                }
            }
        }
    });
    Ok(FrameGrid { frame_id: frame.id, spec: *spec, labels })
}

/// Voxels whose centers fall outside the truncated frustum.
pub fn invalid_mask(frame: &CameraFrame, d_min: f64, d_max: f64, spec: &GridSpec) -> BitVolume {
    let plane = spec.dims[1] * spec.dims[2];
    let mut out = BitVolume::zeros(spec.dims);
    out.bits.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
        for j in 0..spec.dims[1] {
            for k in 0..spec.dims[2] {
                let pc = spec.center_unchecked(VoxelIndex { i, j, k });
                slab[j * spec.dims[2] + k] = !in_frustum(&pc, frame, d_min, d_max);
            }
        }
    });
    out
}

/// Occupied voxels with at least one empty 6-neighbor; the outside counts as empty.
pub fn surface_mask(grid: &FrameGrid) -> BitVolume {
    let [x, y, z] = grid.spec.dims;
    let mut out = BitVolume::zeros(grid.spec.dims);
    out.bits.par_chunks_mut(y * z).enumerate().for_each(|(i, slab)| {
        let occ = |i: usize, j: usize, k: usize| grid.labels[(i * y + j) * z + k] != EMPTY;
        for j in 0..y {
            for k in 0..z {
                if !occ(i, j, k) {
                    continue;
                }
                let boundary = i == 0 || j == 0 || k == 0 || i + 1 == x || j + 1 == y || k + 1 == z;
                slab[j * z + k] = boundary
                    || !occ(i - 1, j, k)
                    || !occ(i + 1, j, k)
                    || !occ(i, j - 1, k)
                    || !occ(i, j + 1, k)
                    || !occ(i, j, k - 1)
                    || !occ(i, j, k + 1);
            }
        }
    });
    out
}

/// Ray through pixel position `(u, v)` in grid-local coordinates: origin and
/// direction, scaled so the ray parameter equals camera depth.
pub fn local_ray(spec: &GridSpec, frame: &CameraFrame, u: f64, v: f64) -> ([f64; 3], [f64; 3]) {
    let d = frame.intrinsics.ray_direction(u, v);
    let o = spec.to_local(&Point3::origin());
    let tip = spec.to_local(&Point3::from(d));
    (o, [tip[0] - o[0], tip[1] - o[1], tip[2] - o[2]])
}

/// Visit the cells a ray crosses, near to far, with the parameter at which it
/// enters each. `visit` returns `false` to stop.
pub fn traverse(spec: &GridSpec, o: [f64; 3], d: [f64; 3], mut visit: impl FnMut(usize, f64) -> bool) {
    let r = spec.voxel_size;
    let ext = spec.extent();
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < 0.0 || o[a] > ext[a] {
                return;
            }
        } else {
            let (ta, tb) = ((0.0 - o[a]) / d[a], (ext[a] - o[a]) / d[a]);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if !(t0 < t1) {
        return;
    }
    let mut idx = [0i64; 3];
    let mut step = [0i64; 3];
    for a in 0..3 {
        let p = o[a] + t0 * d[a];
        idx[a] = ((p / r).floor() as i64).clamp(0, spec.dims[a] as i64 - 1);
        step[a] = if d[a] > 0.0 {
            1
        } else if d[a] < 0.0 {
            -1
        } else {
            0
        };
    }
    let boundary = |a: usize, i: i64| -> f64 {
        match step[a] {
            1 => ((i + 1) as f64 * r - o[a]) / d[a],
            -1 => (i as f64 * r - o[a]) / d[a],
            _ => f64::INFINITY,
        }
    };
    let mut next = [boundary(0, idx[0]), boundary(1, idx[1]), boundary(2, idx[2])];
    let mut t = t0;
    loop {
        let lin = (idx[0] as usize * spec.dims[1] + idx[1] as usize) * spec.dims[2] + idx[2] as usize;
        if !visit(lin, t) {
            return;
        }
        let a = if next[0] <= next[1] && next[0] <= next[2] {
            0
        } else if next[1] <= next[2] {
            1
        } else {
            2
        };
        t = next[a];
        if t >= t1 {
            return;
        }
        idx[a] += step[a];
        if idx[a] < 0 || idx[a] >= spec.dims[a] as i64 {
            return;
        }
        next[a] = boundary(a, idx[a]);
    }
}

/// Pixel centers that receive a ray, as `(u, v)` pixel indices.
pub fn ray_pixels(frame: &CameraFrame, stride: u32) -> Vec<(u32, u32)> {
    let s = stride.max(1) as usize;
    let (w, h) = (frame.intrinsics.width, frame.intrinsics.height);
    (0..h).step_by(s).flat_map(|v| (0..w).step_by(s).map(move |u| (u, v))).collect()
}

/// First occupied cell and its entry depth along one pixel ray.
pub fn first_hit(grid: &FrameGrid, frame: &CameraFrame, u: u32, v: u32) -> Option<(usize, f64)> {
    let (o, d) = local_ray(&grid.spec, frame, u as f64 + 0.5, v as f64 + 0.5);
    let mut hit = None;
    traverse(&grid.spec, o, d, |lin, t| {
        if grid.labels[lin] != EMPTY {
            hit = Some((lin, t));
            false
        } else {
            true
        }
    });
    hit
}

/// Occupied voxels lying behind the first hit of some ray, except voxels that
/// are themselves the first hit of any ray.
pub fn occluded_mask(grid: &FrameGrid, frame: &CameraFrame, stride: u32) -> Result<BitVolume> {
    require_camera_anchor(&grid.spec)?;
    let pixels = ray_pixels(frame, stride);
    let per_ray: Vec<(Option<usize>, Vec<usize>)> = pixels
        .par_iter()
        .map(|&(u, v)| {
            let (o, d) = local_ray(&grid.spec, frame, u as f64 + 0.5, v as f64 + 0.5);
            let mut first = None;
            let mut behind = Vec::new();
            traverse(&grid.spec, o, d, |lin, _| {
                if grid.labels[lin] != EMPTY {
                    if first.is_none() {
                        first = Some(lin);
                    } else {
                        behind.push(lin);
                    }
                }
                true
            });
            (first, behind)
        })
        .collect();
    let mut out = BitVolume::zeros(grid.spec.dims);
    for (_, behind) in &per_ray {
        for &lin in behind {
            out.bits[lin] = true;
        }
    }
    for (first, _) in &per_ray {
        if let Some(lin) = first {
            out.bits[*lin] = false;
        }
    }
    Ok(out)
}

/// Camera depth at which every pixel ray enters its first occupied voxel; 0 for no hit.
pub fn render_depth(grid: &FrameGrid, frame: &CameraFrame) -> Result<DepthMap> {
    require_camera_anchor(&grid.spec)?;
    let (w, h) = (frame.intrinsics.width, frame.intrinsics.height);
    let data: Vec<f32> = (0..w as usize * h as usize)
        .into_par_iter()
        .map(|p| {
            let (u, v) = ((p % w as usize) as u32, (p / w as usize) as u32);
            first_hit(grid, frame, u, v).map_or(0.0, |(_, t)| t as f32)
        })
        .collect();
    DepthMap::from_vec(w, h, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtSample {
    pub grid: FrameGrid,
    pub masks: MaskVolume,
    pub depth: Option<DepthMap>,
}

pub fn sample_frame(scene: &SceneGrid, frame: &CameraFrame, params: &GtParams) -> Result<GtSample> {
    params.validate()?;
    let grid = frustum_cull(scene, frame, params.d_min, params.d_max, &params.spec)?;
    let invalid = invalid_mask(frame, params.d_min, params.d_max, &params.spec);
    let surface = surface_mask(&grid);
    let occluded = occluded_mask(&grid, frame, params.ray_stride)?;
    let depth = if params.render_depth { Some(render_depth(&grid, frame)?) } else { None };
    Ok(GtSample { grid, masks: MaskVolume { invalid, surface, occluded }, depth })
}

pub fn sample_all(scene: &SceneGrid, frames: &[CameraFrame], params: &GtParams) -> Result<Vec<GtSample>> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to sample".into()));
    }
    frames.iter().map(|f| sample_frame(scene, f, params)).collect()
}
