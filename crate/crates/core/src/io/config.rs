//! Pipeline configuration as flat TOML with unit-suffixed keys. Every key is
//! optional and defaults to the standard aerial setup.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densify::alpha::DEFAULT_ALPHA;
use crate::densify::carve::DEFAULT_MARGIN_VOXELS;
use crate::densify::pipeline::DensifyParams;
use crate::densify::views::DEFAULT_VIEWS;
use crate::densify::{DbscanParams, DbscanTable};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::gt::{GtParams, DEFAULT_D_MIN};
use crate::lifting::{LiftParams, DEFAULT_ASSIGN_K, DEFAULT_EPSILON_D, DEFAULT_REFINE_K};
use crate::selection::{DepthTolerance, DEFAULT_CELL_SIZE};
use crate::taxonomy::Taxonomy;

use super::read_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbscanEntry {
    pub class: String,
    pub eps_m: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub voxel_size_m: f64,
    /// Frame grid dims as (depth, right, down).
    pub frame_dims: [usize; 3],
    pub d_min_m: f64,
    /// Defaults to `d_min_m` plus the grid depth extent.
    pub d_max_m: Option<f64>,
    pub cell_size_m: f64,
    pub depth_tolerance_rel: f64,
    /// Defaults to one voxel.
    pub depth_tolerance_abs_m: Option<f64>,
    pub assign_k: usize,
    pub refine_k: usize,
    pub epsilon_d_m: f64,
    pub alpha: f64,
    pub views: usize,
    pub margin_voxels: f64,
    /// Padding of the scene grid around the point cloud.
    pub scene_pad_m: f64,
    pub ray_stride: u32,
    pub render_depth: bool,
    /// Sample every n-th selected frame.
    pub sample_frame_stride: usize,
    /// Taxonomy CSV, relative to the config file. Built-in aerial set if absent.
    pub taxonomy: Option<PathBuf>,
    /// Per-class DBSCAN parameters. Built-in table if absent.
    pub dbscan: Option<Vec<DbscanEntry>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voxel_size_m: 0.5,
            frame_dims: [192, 128, 128],
            d_min_m: DEFAULT_D_MIN,
            d_max_m: None,
            cell_size_m: DEFAULT_CELL_SIZE,
            depth_tolerance_rel: 0.05,
            depth_tolerance_abs_m: None,
            assign_k: DEFAULT_ASSIGN_K,
            refine_k: DEFAULT_REFINE_K,
            epsilon_d_m: DEFAULT_EPSILON_D,
            alpha: DEFAULT_ALPHA,
            views: DEFAULT_VIEWS,
            margin_voxels: DEFAULT_MARGIN_VOXELS,
            scene_pad_m: 1.0,
            ray_stride: 1,
            render_depth: true,
            sample_frame_stride: 1,
            taxonomy: None,
            dbscan: None,
            base_dir: PathBuf::new(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        positive("voxel_size_m", self.voxel_size_m)?;
        positive("cell_size_m", self.cell_size_m)?;
        positive("epsilon_d_m", self.epsilon_d_m)?;
        positive("alpha", self.alpha)?;
        positive("scene_pad_m", self.scene_pad_m + f64::MIN_POSITIVE)?;
        if let Some(d) = self.depth_tolerance_abs_m {
            positive("depth_tolerance_abs_m", d)?;
        }
        if !(self.depth_tolerance_rel >= 0.0) {
            return Err(Error::Config("depth_tolerance_rel must be non-negative".into()));
        }
        if !(self.margin_voxels >= 0.0) {
            return Err(Error::Config("margin_voxels must be non-negative".into()));
        }
        if self.frame_dims.contains(&0) {
            return Err(Error::Config(format!("frame_dims must be positive, got {:?}", self.frame_dims)));
        }
        for (name, v) in [("assign_k", self.assign_k), ("refine_k", self.refine_k), ("views", self.views)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.ray_stride == 0 || self.sample_frame_stride == 0 {
            return Err(Error::Config("strides must be at least 1".into()));
        }
        for e in self.dbscan.iter().flatten() {
            positive(&format!("dbscan eps_m for {}", e.class), e.eps_m)?;
            if e.min_pts == 0 {
                return Err(Error::Config(format!("dbscan min_pts for {} must be at least 1", e.class)));
            }
        }
        self.gt_params()?.validate()
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        match &self.taxonomy {
            None => Ok(Taxonomy::aerial()),
            Some(p) => {
                let path = self.base_dir.join(p);
                Taxonomy::parse(&read_text(&path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn frame_spec(&self) -> Result<GridSpec> {
        GridSpec::camera(self.frame_dims, self.voxel_size_m, self.d_min_m).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn gt_params(&self) -> Result<GtParams> {
        let mut p = GtParams::for_spec(self.frame_spec()?);
        p.d_min = self.d_min_m;
        if let Some(d) = self.d_max_m {
            p.d_max = d;
        }
        p.ray_stride = self.ray_stride;
        p.render_depth = self.render_depth;
        Ok(p)
    }

    pub fn depth_tolerance(&self) -> DepthTolerance {
        let mut t = DepthTolerance::for_voxel_size(self.voxel_size_m);
        t.relative = self.depth_tolerance_rel;
        if let Some(a) = self.depth_tolerance_abs_m {
            t.absolute_m = a;
        }
        t
    }

    pub fn lift_params(&self) -> LiftParams {
        LiftParams { assign_k: self.assign_k, refine_k: self.refine_k, epsilon_d: self.epsilon_d_m }
    }

    pub fn densify_params(&self, taxonomy: &Taxonomy) -> Result<DensifyParams> {
        let mut p = DensifyParams::aerial(taxonomy);
        p.alpha = self.alpha;
        p.views = self.views;
        p.margin_voxels = self.margin_voxels;
        if let Some(entries) = &self.dbscan {
            let mut params = BTreeMap::new();
            for e in entries {
                let id = taxonomy
                    .id_of(&e.class)
                    .ok_or_else(|| Error::Config(format!("dbscan class {} not in taxonomy", e.class)))?;
                params.insert(id, DbscanParams { eps: e.eps_m, min_pts: e.min_pts });
            }
            p.dbscan = DbscanTable { params };
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_standard_constants() {
        let c = PipelineConfig::parse("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.voxel_size_m, 0.5);
        assert_eq!(c.frame_dims, [192, 128, 128]);
        assert_eq!(c.cell_size_m, 25.0);
        assert_eq!((c.assign_k, c.refine_k), (100, 200));
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.views, 24);
        let g = c.gt_params().unwrap();
        assert_eq!((g.d_min, g.d_max), (0.5, 96.5));
        let tax = c.taxonomy().unwrap();
        assert_eq!(c.densify_params(&tax).unwrap(), DensifyParams::aerial(&tax));
    }

    #[test]
    fn overrides_and_dbscan_table() {
        let text = "voxel_size_m = 0.25\nframe_dims = [8, 4, 4]\nsample_frame_stride = 3\n\n[[dbscan]]\nclass = \"vehicle\"\neps_m = 0.8\nmin_pts = 20\n";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.frame_spec().unwrap().dims, [8, 4, 4]);
        assert_eq!(c.gt_params().unwrap().d_max, 0.5 + 2.0);
        let tax = Taxonomy::aerial();
        let p = c.densify_params(&tax).unwrap();
        assert_eq!(p.dbscan.params.len(), 1);
        assert_eq!(p.dbscan.get(tax.id_of("vehicle").unwrap()), Some(DbscanParams { eps: 0.8, min_pts: 20 }));
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["voxel_size_m = -1.0", "views = 0", "unknown_key = 1", "frame_dims = [0, 1, 1]", "d_max_m = 0.1"] {
            assert!(matches!(PipelineConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn unknown_dbscan_class_is_error() {
        let c = PipelineConfig::parse("[[dbscan]]\nclass = \"dragon\"\neps_m = 1.0\nmin_pts = 3\n").unwrap();
        assert!(matches!(c.densify_params(&Taxonomy::aerial()), Err(Error::Config(_))));
    }
}
