//! Class-aware densification and voxelization into the scene grid.
//!
//! Points are split into three groups by their class: instance classes are
//! clustered and carved into visual hulls, ground classes are meshed and the
//! mesh is scan-converted, other classes are binned directly. The three
//! occupied sets are merged with precedence instance > other > ground.

pub mod aggregate;
pub mod alpha;
pub mod carve;
pub mod dbscan;
pub mod ground;
pub mod pipeline;
pub mod views;
pub mod voxelize;

use std::collections::BTreeMap;

use crate::error::Result;
use crate::geometry::{Point3, VoxelIndex};
use crate::lifting::SemanticPointCloud;
use crate::taxonomy::{ClassGroup, ClassId, Taxonomy};

pub use aggregate::{aggregate, SceneGrid};
pub use carve::carve;
pub use dbscan::{cluster_instances, DbscanParams, DbscanTable, InstanceCluster};
pub use ground::{reconstruct_ground, GroundMesh};
pub use views::{place_virtual_cameras, VirtualView};
pub use voxelize::{voxelize_mesh, voxelize_points};

/// Axis-aligned box, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb { min: first, max: first };
        for p in it {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn dilated(&self, margin: f64) -> Self {
        let d = nalgebra::Vector3::repeat(margin);
        Aabb { min: self.min - d, max: self.max + d }
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn corners(&self) -> [Point3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }

    #[inline]
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Occupied voxels of one group, one class per voxel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupiedSet {
    voxels: BTreeMap<VoxelIndex, ClassId>,
}

impl OccupiedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert, resolving a class conflict on an already occupied voxel by the taxonomy prior.
    pub fn insert(&mut self, v: VoxelIndex, class: ClassId, taxonomy: &Taxonomy) {
        self.voxels
            .entry(v)
            .and_modify(|c| {
                if taxonomy.prior_cmp(class, *c).is_gt() {
                    *c = class;
                }
            })
            .or_insert(class);
    }

    pub fn insert_raw(&mut self, v: VoxelIndex, class: ClassId) {
        self.voxels.insert(v, class);
    }

    pub fn union_with(&mut self, other: &OccupiedSet, taxonomy: &Taxonomy) {
        for (v, c) in &other.voxels {
            self.insert(*v, *c, taxonomy);
        }
    }

    pub fn get(&self, v: &VoxelIndex) -> Option<ClassId> {
        self.voxels.get(v).copied()
    }

    pub fn contains(&self, v: &VoxelIndex) -> bool {
        self.voxels.contains_key(v)
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelIndex, &ClassId)> {
        self.voxels.iter()
    }

    pub fn indices(&self) -> impl Iterator<Item = &VoxelIndex> {
        self.voxels.keys()
    }
}

impl FromIterator<(VoxelIndex, ClassId)> for OccupiedSet {
    fn from_iter<I: IntoIterator<Item = (VoxelIndex, ClassId)>>(iter: I) -> Self {
        Self { voxels: iter.into_iter().collect() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupedClouds {
    pub instance: SemanticPointCloud,
    pub ground: SemanticPointCloud,
    pub other: SemanticPointCloud,
}

/// Route each point to the group of its class.
pub fn partition_groups(cloud: &SemanticPointCloud, taxonomy: &Taxonomy) -> Result<GroupedClouds> {
    let mut out = GroupedClouds::default();
    for (p, &c) in cloud.positions.iter().zip(&cloud.labels) {
        let target = match taxonomy.group(c)? {
            ClassGroup::Instance => &mut out.instance,
            ClassGroup::Ground => &mut out.ground,
            ClassGroup::Other => &mut out.other,
        };
        target.push(*p, c);
    }
    Ok(out)
}
