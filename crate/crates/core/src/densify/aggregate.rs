//! Precedence merge of the group occupancies into one scene volume.

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point3, VoxelIndex};
use crate::taxonomy::{ClassId, EMPTY};

use super::OccupiedSet;

/// Dense world-anchored label volume, flattened as `(i * Y + j) * Z + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrid {
    pub spec: GridSpec,
    labels: Vec<ClassId>,
}

impl SceneGrid {
    pub fn empty(spec: GridSpec) -> Self {
        Self { spec, labels: vec![EMPTY; spec.len()] }
    }

    pub fn from_labels(spec: GridSpec, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != spec.len() {
            return Err(Error::DimensionMismatch { expected: spec.len().to_string(), actual: labels.len().to_string() });
        }
        Ok(Self { spec, labels })
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, v: VoxelIndex) -> ClassId {
        self.labels[self.spec.linear(v)]
    }

    pub fn set(&mut self, v: VoxelIndex, c: ClassId) {
        let idx = self.spec.linear(v);
        self.labels[idx] = c;
    }

    /// Label of the voxel holding `p`; empty outside the grid.
    #[inline]
    pub fn label_at(&self, p: &Point3) -> ClassId {
        self.spec.voxel_index(p).map_or(EMPTY, |v| self.get(v))
    }

    pub fn occupied(&self) -> usize {
        self.labels.iter().filter(|&&c| c != EMPTY).count()
    }
}

/// Merge with precedence instance over other over ground; untouched voxels stay empty.
pub fn aggregate(inst: &OccupiedSet, oth: &OccupiedSet, gnd: &OccupiedSet, spec: &GridSpec) -> Result<SceneGrid> {
    let mut grid = SceneGrid::empty(*spec);
    for set in [gnd, oth, inst] {
        for (v, &c) in set.iter() {
            if !spec.contains_index(*v) {
                return Err(Error::Geometry(format!("voxel {v:?} outside scene dims {:?}", spec.dims)));
            }
            grid.set(*v, c);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cases() {
        let spec = GridSpec::world([2, 2, 2], 0.5, Point3::origin()).unwrap();
        let a = VoxelIndex::new(0, 0, 0);
        let b = VoxelIndex::new(1, 0, 0);
        let c = VoxelIndex::new(0, 1, 1);
        let inst: OccupiedSet = [(a, 1)].into_iter().collect();
        let oth: OccupiedSet = [(a, 17), (c, 17)].into_iter().collect();
        let gnd: OccupiedSet = [(a, 14), (b, 14), (c, 14)].into_iter().collect();
        let g = aggregate(&inst, &oth, &gnd, &spec).unwrap();
        assert_eq!(g.get(a), 1);
        assert_eq!(g.get(b), 14);
        assert_eq!(g.get(c), 17);
        assert_eq!(g.get(VoxelIndex::new(1, 1, 1)), EMPTY);
        assert_eq!(g.occupied(), 3);
    }

    #[test]
    fn out_of_grid_index_rejected() {
        let spec = GridSpec::world([2, 2, 2], 0.5, Point3::origin()).unwrap();
        let bad: OccupiedSet = [(VoxelIndex::new(2, 0, 0), 1)].into_iter().collect();
        assert!(aggregate(&bad, &OccupiedSet::new(), &OccupiedSet::new(), &spec).is_err());
    }
}
