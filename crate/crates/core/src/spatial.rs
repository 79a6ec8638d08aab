//! Exact k-nearest-neighbor search over 3D points.
//!
//! Neighbors are ordered by `(squared distance, point index)`, so the result
//! is a total order and identical to a plain linear scan, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Point3;

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<u32>,
    root: Option<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let root = (!points.is_empty()).then(|| Self::build(points, &mut order, 0));
        Self { points, order, root }
    }

    fn build(points: &[Point3], idx: &mut [u32], offset: usize) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf { start: offset, end: offset + idx.len() };
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in idx.iter() {
            let p = &points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            return Node::Leaf { start: offset, end: offset + idx.len() };
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a as usize][axis].total_cmp(&points[b as usize][axis]));
        let value = points[idx[mid] as usize][axis];
        // everything before mid is <= value, everything from mid on is >= value
        let (left_idx, right_idx) = idx.split_at_mut(mid);
        let left = Self::build(points, left_idx, offset);
        let right = Self::build(points, right_idx, offset + mid);
        Node::Split { axis, value, left: Box::new(left), right: Box::new(right) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query`, ascending by `(dist2, index)`.
    /// `skip` excludes one index (the query point itself, when it is a member).
    pub fn nearest(&self, query: &Point3, k: usize, skip: Option<u32>) -> Vec<Neighbor> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if let (Some(root), true) = (&self.root, k > 0) {
            self.search(root, query, k, skip, &mut heap);
        }
        let mut out = heap.into_vec();
        out.sort_unstable();
        out
    }

    fn search(&self, node: &Node, q: &Point3, k: usize, skip: Option<u32>, heap: &mut BinaryHeap<Neighbor>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let n = Neighbor { index: i, dist2: dist2(q, &self.points[i as usize]) };
                    if heap.len() < k {
                        heap.push(n);
                    } else if n < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(n);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, skip, heap);
                // equal bounds are still visited: a tied distance with a lower index may live there
                let bound = diff * diff;
                if heap.len() < k || bound <= heap.peek().expect("heap is full").dist2 {
                    self.search(far, q, k, skip, heap);
                }
            }
        }
    }
}
