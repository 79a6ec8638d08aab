//! Dense row-major 2D rasters: depth maps, semantic masks, silhouettes.

use crate::error::{Error, Result};
use crate::taxonomy::ClassId;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self { width, height, data: vec![value; width as usize * height as usize] }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} = {}", width, height, width as usize * height as usize),
                actual: data.len().to_string(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> T {
        self.data[v as usize * self.width as usize + u as usize]
    }

    /// Lookup with signed pixel coordinates; `None` outside the raster.
    #[inline]
    pub fn get_checked(&self, u: i64, v: i64) -> Option<T> {
        if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
            None
        } else {
            Some(self.data[v as usize * self.width as usize + u as usize])
        }
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: T) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

/// Per-pixel camera depth in meters; `0` marks pixels without data.
pub type DepthMap = Raster<f32>;

/// Per-pixel class ids of one annotated frame, `0` = unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMask {
    pub frame_id: u32,
    pub labels: Raster<ClassId>,
}
