//! Lifting 2D annotations into the point cloud.
//!
//! Votes from annotated frames are fused by unweighted majority; points
//! without votes take the inverse-distance-weighted dominant class of their
//! labeled neighbors, and a final simultaneous pass relabels every point to
//! the dominant class of its neighborhood.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::raster::SemanticMask;
use crate::selection::CorrespondenceSet;
use crate::spatial::{KdTree, Neighbor};
use crate::taxonomy::{ClassId, Taxonomy, EMPTY};

/// Offset added to neighbor distances so coincident points keep a finite weight.
pub const DEFAULT_EPSILON_D: f64 = 1e-6;
/// Neighborhood size for labeling points that received no votes.
pub const DEFAULT_ASSIGN_K: usize = 100;
/// Neighborhood size for the refinement pass.
pub const DEFAULT_REFINE_K: usize = 200;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticPointCloud {
    pub positions: Vec<Point3>,
    pub labels: Vec<ClassId>,
}

impl SemanticPointCloud {
    pub fn new(positions: Vec<Point3>, labels: Vec<ClassId>) -> Result<Self> {
        if positions.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", positions.len()),
                actual: labels.len().to_string(),
            });
        }
        Ok(Self { positions, labels })
    }

    pub fn unlabeled(positions: Vec<Point3>) -> Self {
        let labels = vec![EMPTY; positions.len()];
        Self { positions, labels }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, p: Point3, c: ClassId) {
        self.positions.push(p);
        self.labels.push(c);
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Per-point class vote counts. Each entry is a short list of `(class, count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    votes: Vec<Vec<(ClassId, u32)>>,
}

impl VoteTable {
    pub fn new(num_points: usize) -> Self {
        Self { votes: vec![Vec::new(); num_points] }
    }

    pub fn add(&mut self, point: usize, class: ClassId) {
        let entry = &mut self.votes[point];
        match entry.iter_mut().find(|(c, _)| *c == class) {
            Some((_, n)) => *n += 1,
            None => entry.push((class, 1)),
        }
    }

    /// Votes for one point, sorted by class id.
    pub fn get(&self, point: usize) -> Vec<(ClassId, u32)> {
        let mut v = self.votes[point].clone();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    fn merge(mut self, other: VoteTable) -> VoteTable {
        for (point, list) in other.votes.into_iter().enumerate() {
            for (c, n) in list {
                match self.votes[point].iter_mut().find(|(x, _)| *x == c) {
                    Some((_, m)) => *m += n,
                    None => self.votes[point].push((c, n)),
                }
            }
        }
        self
    }
}

/// Count one vote per (pixel, point) pair whose mask pixel carries a class.
pub fn accumulate_votes(masks: &[SemanticMask], correspondences: &[CorrespondenceSet], num_points: usize) -> Result<VoteTable> {
    let per_frame: Result<Vec<VoteTable>> = masks
        .par_iter()
        .map(|mask| {
            let set = correspondences
                .iter()
                .find(|s| s.frame_id == mask.frame_id)
                .ok_or(Error::UnknownFrame(mask.frame_id))?;
            let mut table = VoteTable::new(num_points);
            for c in &set.pairs {
                let (u, v) = c.pixel;
                if u >= mask.labels.width() || v >= mask.labels.height() {
                    return Err(Error::DimensionMismatch {
                        expected: format!("pixel inside {}x{} mask", mask.labels.width(), mask.labels.height()),
                        actual: format!("({u}, {v}) in frame {}", mask.frame_id),
                    });
                }
                if c.point as usize >= num_points {
                    return Err(Error::InvalidInput(format!("point id {} out of range", c.point)));
                }
                let class = mask.labels.get(u, v);
                if class != EMPTY {
                    table.add(c.point as usize, class);
                }
            }
            Ok(table)
        })
        .collect();
    Ok(per_frame?.into_iter().fold(VoteTable::new(num_points), VoteTable::merge))
}

/// Per-point majority class; ties go to the more frequent class, then the lower id. No votes gives `0`.
pub fn majority_vote(votes: &VoteTable, taxonomy: &Taxonomy) -> Vec<ClassId> {
    (0..votes.len())
        .into_par_iter()
        .map(|p| taxonomy.pick(votes.votes[p].iter().copied()).unwrap_or(EMPTY))
        .collect()
}

/// Inverse-distance weighted vote over a sorted neighbor list. Weights are
/// summed in neighbor order.
pub fn weighted_class(neighbors: &[Neighbor], labels: &[ClassId], epsilon_d: f64, taxonomy: &Taxonomy) -> Option<ClassId> {
    let mut scores: Vec<(ClassId, f64)> = Vec::new();
    for n in neighbors {
        let c = labels[n.index as usize];
        let w = 1.0 / (n.dist2.sqrt() + epsilon_d);
        match scores.iter_mut().find(|(x, _)| *x == c) {
            Some((_, s)) => *s += w,
            None => scores.push((c, w)),
        }
    }
    taxonomy.pick(scores)
}

/// Labels for `queries` from the `k` nearest points of `labeled`.
pub fn knn_assign(
    labeled: &SemanticPointCloud,
    queries: &[Point3],
    k: usize,
    epsilon_d: f64,
    taxonomy: &Taxonomy,
) -> Result<Vec<ClassId>> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("kNN assignment needs labeled points".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let tree = KdTree::new(&labeled.positions);
    Ok(queries
        .par_iter()
        .map(|q| {
            let nn = tree.nearest(q, k, None);
            weighted_class(&nn, &labeled.labels, epsilon_d, taxonomy).expect("labeled set is non-empty")
        })
        .collect())
}

/// One simultaneous relabeling pass: every point takes the weighted dominant
/// class among its `k` nearest other points, read from the input labels.
pub fn knn_refine(cloud: &SemanticPointCloud, k: usize, epsilon_d: f64, taxonomy: &Taxonomy) -> Result<SemanticPointCloud> {
    if let Some(pos) = cloud.labels.iter().position(|&c| c == EMPTY) {
        return Err(Error::InvalidInput(format!("point {pos} is unlabeled; refinement needs a complete labeling")));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let tree = KdTree::new(&cloud.positions);
    let labels = cloud
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.nearest(p, k, Some(i as u32));
            weighted_class(&nn, &cloud.labels, epsilon_d, taxonomy).unwrap_or(cloud.labels[i])
        })
        .collect();
    Ok(SemanticPointCloud { positions: cloud.positions.clone(), labels })
}

/// Parameters of the full lifting chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftParams {
    pub assign_k: usize,
    pub refine_k: usize,
    pub epsilon_d: f64,
}

impl Default for LiftParams {
    fn default() -> Self {
        Self { assign_k: DEFAULT_ASSIGN_K, refine_k: DEFAULT_REFINE_K, epsilon_d: DEFAULT_EPSILON_D }
    }
}

/// Votes, majority, kNN completion of unvoted points, then refinement.
pub fn lift_labels(
    positions: &[Point3],
    masks: &[SemanticMask],
    correspondences: &[CorrespondenceSet],
    taxonomy: &Taxonomy,
    params: LiftParams,
) -> Result<SemanticPointCloud> {
    let votes = accumulate_votes(masks, correspondences, positions.len())?;
    let mut labels = majority_vote(&votes, taxonomy);
    let (voted, unvoted): (Vec<usize>, Vec<usize>) = (0..positions.len()).partition(|&i| labels[i] != EMPTY);
    if voted.is_empty() {
        return Err(Error::InvalidInput("no point received a label from the annotated frames".into()));
    }
    if !unvoted.is_empty() {
        let labeled = SemanticPointCloud {
            positions: voted.iter().map(|&i| positions[i]).collect(),
            labels: voted.iter().map(|&i| labels[i]).collect(),
        };
        let queries: Vec<Point3> = unvoted.iter().map(|&i| positions[i]).collect();
        let filled = knn_assign(&labeled, &queries, params.assign_k, params.epsilon_d, taxonomy)?;
        for (&i, c) in unvoted.iter().zip(filled) {
            labels[i] = c;
        }
    }
    let cloud = SemanticPointCloud { positions: positions.to_vec(), labels };
    knn_refine(&cloud, params.refine_k, params.epsilon_d, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use crate::selection::Correspondence;
    use crate::spatial::dist2;
    use rand::{Rng, SeedableRng};

    fn mask(frame_id: u32, class: ClassId) -> SemanticMask {
        SemanticMask { frame_id, labels: Raster::filled(4, 4, class) }
    }

    fn one_pair(frame_id: u32) -> CorrespondenceSet {
        CorrespondenceSet { frame_id, pairs: vec![Correspondence { pixel: (1, 2), point: 0 }] }
    }

    #[test]
    fn single_vote() {
        let t = accumulate_votes(&[mask(0, 5)], &[one_pair(0)], 1).unwrap();
        assert_eq!(t.get(0), vec![(5, 1)]);
    }

    #[test]
    fn unanimous_and_split_votes() {
        let sets: Vec<_> = (0..3).map(one_pair).collect();
        let t = accumulate_votes(&[mask(0, 2), mask(1, 2), mask(2, 2)], &sets, 1).unwrap();
        assert_eq!(t.get(0), vec![(2, 3)]);
        let tax = Taxonomy::aerial();
        let road = tax.id_of("road").unwrap();
        let grass = tax.id_of("grass").unwrap();
        let t = accumulate_votes(&[mask(0, road), mask(1, grass), mask(2, road)], &sets, 1).unwrap();
        assert_eq!(t.get(0), vec![(grass, 1), (road, 2)]);
        assert_eq!(majority_vote(&t, &tax), vec![road]);
    }

    #[test]
    fn unlabeled_pixels_do_not_vote() {
        let t = accumulate_votes(&[mask(0, EMPTY)], &[one_pair(0)], 1).unwrap();
        assert!(t.get(0).is_empty());
        assert_eq!(majority_vote(&t, &Taxonomy::aerial()), vec![EMPTY]);
    }

    #[test]
    fn vote_errors() {
        assert!(matches!(accumulate_votes(&[mask(3, 1)], &[one_pair(0)], 1), Err(Error::UnknownFrame(3))));
        let small = SemanticMask { frame_id: 0, labels: Raster::filled(1, 1, 1) };
        assert!(matches!(accumulate_votes(&[small], &[one_pair(0)], 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn tie_prefers_frequent_class() {
        let tax = Taxonomy::aerial();
        let road = tax.id_of("road").unwrap();
        let grass = tax.id_of("grass").unwrap();
        let mut t = VoteTable::new(1);
        for c in [road, road, grass, grass] {
            t.add(0, c);
        }
        assert_eq!(majority_vote(&t, &tax), vec![grass]);
    }

    #[test]
    fn majority_is_mask_order_invariant() {
        let tax = Taxonomy::aerial();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let masks: Vec<SemanticMask> = (0..6)
            .map(|f| SemanticMask {
                frame_id: f,
                labels: Raster::from_vec(10, 5, (0..50).map(|_| rng.random_range(0..5) as ClassId).collect()).unwrap(),
            })
            .collect();
        let sets: Vec<CorrespondenceSet> = (0..6)
            .map(|f| CorrespondenceSet {
                frame_id: f,
                pairs: (0..n).map(|p| Correspondence { pixel: (rng.random_range(0..10), rng.random_range(0..5)), point: p }).collect(),
            })
            .collect();
        let base = majority_vote(&accumulate_votes(&masks, &sets, n as usize).unwrap(), &tax);
        let mut rev = masks.clone();
        rev.reverse();
        assert_eq!(majority_vote(&accumulate_votes(&rev, &sets, n as usize).unwrap(), &tax), base);
    }

    fn brute_assign(labeled: &SemanticPointCloud, q: &Point3, k: usize, tax: &Taxonomy) -> ClassId {
        let mut all: Vec<Neighbor> = labeled
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| Neighbor { index: i as u32, dist2: dist2(q, p) })
            .collect();
        all.sort();
        all.truncate(k);
        weighted_class(&all, &labeled.labels, DEFAULT_EPSILON_D, tax).unwrap()
    }

    #[test]
    fn single_labeled_point_wins() {
        let labeled = SemanticPointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], vec![3]).unwrap();
        let out = knn_assign(&labeled, &[Point3::new(-5.0, 0.0, 9.0), Point3::new(1.0, 2.0, 3.0)], 10, DEFAULT_EPSILON_D, &Taxonomy::aerial())
            .unwrap();
        assert_eq!(out, vec![3, 3]);
    }

    #[test]
    fn equidistant_tie_goes_to_frequent_class() {
        let tax = Taxonomy::aerial();
        let (building, road) = (tax.id_of("building").unwrap(), tax.id_of("road").unwrap());
        let labeled = SemanticPointCloud::new(vec![Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)], vec![road, building]).unwrap();
        let out = knn_assign(&labeled, &[Point3::origin()], 2, DEFAULT_EPSILON_D, &tax).unwrap();
        assert_eq!(out, vec![building]);
    }

    #[test]
    fn assign_matches_brute_force() {
        let tax = Taxonomy::aerial();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let labeled = SemanticPointCloud::new(
            (0..50).map(|_| Point3::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..1.0))).collect(),
            (0..50).map(|_| rng.random_range(1..6)).collect(),
        )
        .unwrap();
        let queries: Vec<Point3> =
            (0..300).map(|_| Point3::new(rng.random_range(-1.0..6.0), rng.random_range(-1.0..6.0), rng.random_range(-1.0..2.0))).collect();
        let got = knn_assign(&labeled, &queries, 5, DEFAULT_EPSILON_D, &tax).unwrap();
        for (q, g) in queries.iter().zip(got) {
            assert_eq!(g, brute_assign(&labeled, q, 5, &tax));
        }
    }

    #[test]
    fn assign_errors() {
        let tax = Taxonomy::aerial();
        assert!(knn_assign(&SemanticPointCloud::default(), &[Point3::origin()], 3, 1e-6, &tax).is_err());
    }

    #[test]
    fn refine_uniform_is_fixed_point() {
        let tax = Taxonomy::aerial();
        let pts: Vec<Point3> = (0..300).map(|i| Point3::new((i % 17) as f64 * 0.3, (i / 17) as f64 * 0.3, 0.0)).collect();
        let cloud = SemanticPointCloud::new(pts, vec![9; 300]).unwrap();
        assert_eq!(knn_refine(&cloud, 20, DEFAULT_EPSILON_D, &tax).unwrap(), cloud);
    }

    #[test]
    fn refine_fixes_isolated_mislabel() {
        let tax = Taxonomy::aerial();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3> = (0..500).map(|_| Point3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), rng.random_range(0.0..4.0))).collect();
        let mut labels = vec![14; 500];
        labels[123] = 17;
        let cloud = SemanticPointCloud::new(pts, labels).unwrap();
        let out = knn_refine(&cloud, 200, DEFAULT_EPSILON_D, &tax).unwrap();
        assert!(out.labels.iter().all(|&c| c == 14));
    }

    #[test]
    fn refine_keeps_separated_clusters() {
        let tax = Taxonomy::aerial();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut cloud = SemanticPointCloud::default();
        for (offset, class) in [(0.0, 1), (100.0, 17)] {
            for _ in 0..300 {
                cloud.push(Point3::new(offset + rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), 0.0), class);
            }
        }
        // k below the cluster size: every neighborhood stays single-class, so the pass is idempotent
        let out = knn_refine(&cloud, 200, DEFAULT_EPSILON_D, &tax).unwrap();
        assert_eq!(out, cloud);
        assert_eq!(knn_refine(&out, 200, DEFAULT_EPSILON_D, &tax).unwrap(), out);
    }

    #[test]
    fn refine_rejects_unlabeled() {
        let cloud = SemanticPointCloud::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)], vec![1, 0]).unwrap();
        assert!(knn_refine(&cloud, 1, 1e-6, &Taxonomy::aerial()).is_err());
    }

    #[test]
    fn full_lift_leaves_no_unlabeled_points() {
        let tax = Taxonomy::aerial();
        let positions: Vec<Point3> = (0..40).map(|i| Point3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let set = CorrespondenceSet {
            frame_id: 0,
            pairs: (0..10).map(|p| Correspondence { pixel: (0, 0), point: p * 4 }).collect(),
        };
        let cloud = lift_labels(&positions, &[mask(0, 14)], &[set], &tax, LiftParams { assign_k: 5, refine_k: 8, epsilon_d: 1e-6 }).unwrap();
        assert!(cloud.labels.iter().all(|&c| c == 14));
    }
}
