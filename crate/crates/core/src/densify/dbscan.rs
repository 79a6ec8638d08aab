//! Per-class DBSCAN instance separation.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::lifting::SemanticPointCloud;
use crate::spatial::dist2;
use crate::taxonomy::{ClassId, Taxonomy};

use super::Aabb;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Neighborhood radius in meters (closed ball).
    pub eps: f64,
    /// Neighborhood size, the point itself included, that makes a core point.
    pub min_pts: usize,
}

/// DBSCAN parameters per instance class id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DbscanTable {
    pub params: BTreeMap<ClassId, DbscanParams>,
}

impl DbscanTable {
    /// The per-class table for the aerial taxonomy.
    pub fn aerial(taxonomy: &Taxonomy) -> Self {
        let entries = [
            ("building", 4.0, 1000),
            ("roof", 1.0, 1000),
            ("vehicle", 1.0, 500),
            ("crane", 1.0, 500),
            ("bicycle", 0.4, 80),
            ("person", 0.3, 10),
            ("flying_animal", 0.3, 30),
            ("truck", 1.0, 500),
        ];
        let params = entries
            .iter()
            .filter_map(|(name, eps, min_pts)| {
                taxonomy.id_of(name).map(|id| (id, DbscanParams { eps: *eps, min_pts: *min_pts }))
            })
            .collect();
        Self { params }
    }

    pub fn get(&self, class: ClassId) -> Option<DbscanParams> {
        self.params.get(&class).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCluster {
    pub id: u32,
    pub class: ClassId,
    /// Indices into the instance cloud passed to [`cluster_instances`].
    pub members: Vec<usize>,
    /// Tight bounds of the member positions.
    pub bbox: Aabb,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterOutcome {
    pub clusters: Vec<InstanceCluster>,
    /// Points that are neither core nor density-reachable.
    pub noise: SemanticPointCloud,
}

/// Uniform-grid cell hash with cell edge `eps`; a radius query only has to
/// inspect the 27 cells around the query cell.
struct CellHash<'a> {
    points: &'a [Point3],
    eps: f64,
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl<'a> CellHash<'a> {
    fn new(points: &'a [Point3], eps: f64) -> Self {
        // slightly oversized cells keep every eps-neighbor within the 27-cell stencil despite rounding
        let cell = eps * (1.0 + 1e-9);
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self { points, eps, cell, cells }
    }

    fn key(p: &Point3, eps: f64) -> (i64, i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64, (p.z / eps).floor() as i64)
    }

    fn neighbors(&self, i: usize, out: &mut Vec<u32>) {
        out.clear();
        let p = &self.points[i];
        let (cx, cy, cz) = Self::key(p, self.cell);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend(bucket.iter().copied().filter(|&j| dist2(p, &self.points[j as usize]) <= eps2));
                    }
                }
            }
        }
    }
}

/// DBSCAN labels: `Some(cluster)` numbered in discovery order, `None` for noise.
///
/// Clusters are discovered in ascending order of their lowest-index core
/// point, and a border point belongs to the first cluster that reaches it.
pub fn dbscan(points: &[Point3], params: DbscanParams) -> Vec<Option<u32>> {
    const UNVISITED: i64 = -2;
    const NOISE: i64 = -1;
    let hash = CellHash::new(points, params.eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut next = 0i64;
    let mut nb = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        hash.neighbors(i, &mut nb);
        if nb.len() < params.min_pts {
            labels[i] = NOISE;
            continue;
        }
        let cid = next;
        next += 1;
        labels[i] = cid;
        queue.extend(nb.iter().copied());
        while let Some(q) = queue.pop_front() {
            let q = q as usize;
            if labels[q] == NOISE {
                labels[q] = cid;
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cid;
            hash.neighbors(q, &mut nb);
            if nb.len() >= params.min_pts {
                queue.extend(nb.iter().copied());
            }
        }
    }
    labels.into_iter().map(|l| (l >= 0).then_some(l as u32)).collect()
}

/// Run DBSCAN separately for every instance class present in `cloud`, in
/// ascending class id order. Cluster ids are global and sequential.
pub fn cluster_instances(cloud: &SemanticPointCloud, table: &DbscanTable) -> Result<ClusterOutcome> {
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &c) in cloud.labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut out = ClusterOutcome::default();
    for (class, indices) in by_class {
        let params = table.get(class).ok_or(Error::MissingParams(class))?;
        if !(params.eps > 0.0) || params.min_pts == 0 {
            return Err(Error::Config(format!("invalid DBSCAN parameters for class {class}")));
        }
        let pts: Vec<Point3> = indices.iter().map(|&i| cloud.positions[i]).collect();
        let labels = dbscan(&pts, params);
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (local, label) in labels.iter().enumerate() {
            match label {
                Some(cid) => {
                    let cid = *cid as usize;
                    if members.len() <= cid {
                        members.resize(cid + 1, Vec::new());
                    }
                    members[cid].push(indices[local]);
                }
                None => out.noise.push(pts[local], class),
            }
        }
        for m in members {
            let bbox = Aabb::from_points(m.iter().map(|&i| &cloud.positions[i])).expect("clusters are non-empty");
            let id = out.clusters.len() as u32;
            out.clusters.push(InstanceCluster { id, class, members: m, bbox });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn blob(rng: &mut impl Rng, center: [f64; 3], half: f64, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    center[0] + rng.random_range(-half..half),
                    center[1] + rng.random_range(-half..half),
                    center[2] + rng.random_range(-half..half),
                )
            })
            .collect()
    }

    #[test]
    fn two_vehicle_blobs_are_two_clusters() {
        let t = Taxonomy::aerial();
        let vehicle = t.id_of("vehicle").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, [0.0, 0.0, 0.0], 0.5, 700);
        pts.extend(blob(&mut rng, [5.0, 0.0, 0.0], 0.5, 700));
        let cloud = SemanticPointCloud::new(pts, vec![vehicle; 1400]).unwrap();
        let out = cluster_instances(&cloud, &DbscanTable::aerial(&t)).unwrap();
        assert_eq!(out.clusters.len(), 2);
        assert!(out.noise.is_empty());
        assert!(out.clusters.iter().all(|c| c.members.len() == 700 && c.class == vehicle));
        assert!(out.clusters[0].bbox.max.x < 1.0 && out.clusters[1].bbox.min.x > 4.0);
    }

    #[test]
    fn sparse_people_are_noise() {
        let t = Taxonomy::aerial();
        let person = t.id_of("person").unwrap();
        let pts: Vec<Point3> = (0..9).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let cloud = SemanticPointCloud::new(pts, vec![person; 9]).unwrap();
        let out = cluster_instances(&cloud, &DbscanTable::aerial(&t)).unwrap();
        assert!(out.clusters.is_empty());
        assert_eq!(out.noise.len(), 9);
    }

    #[test]
    fn dense_blob_is_one_cluster() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pts = blob(&mut rng, [3.0, -2.0, 1.0], 0.4, 300);
        let labels = dbscan(&pts, DbscanParams { eps: 0.3, min_pts: 10 });
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn missing_params_is_an_error() {
        let t = Taxonomy::aerial();
        let cloud = SemanticPointCloud::new(vec![Point3::origin()], vec![t.id_of("tree").unwrap()]).unwrap();
        assert!(matches!(cluster_instances(&cloud, &DbscanTable::aerial(&t)), Err(Error::MissingParams(_))));
    }

    #[test]
    fn aerial_table_values() {
        let t = Taxonomy::aerial();
        let table = DbscanTable::aerial(&t);
        assert_eq!(table.params.len(), 8);
        assert_eq!(table.get(t.id_of("vehicle").unwrap()), Some(DbscanParams { eps: 1.0, min_pts: 500 }));
        assert_eq!(table.get(t.id_of("person").unwrap()), Some(DbscanParams { eps: 0.3, min_pts: 10 }));
        assert_eq!(table.get(t.id_of("building").unwrap()), Some(DbscanParams { eps: 4.0, min_pts: 1000 }));
        assert_eq!(table.get(t.id_of("bicycle").unwrap()), Some(DbscanParams { eps: 0.4, min_pts: 80 }));
    }
}
