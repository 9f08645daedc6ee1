//! Small 3D kd-tree for k-nearest-neighbour queries.
//!
//! The tree is the classic array layout: indices are recursively partitioned
//! around the median along the cycling split axis, so the median element of
//! every subrange is that subtree's node. Queries branch-and-bound with a
//! bounded max-heap.

use crate::vec3::{self, Vec3};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(PartialEq)]
struct HeapItem {
    dist_sq: f64,
    index: usize,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq)
    }
}

pub struct KdTree {
    points: Vec<Vec3>,
    /// Point indices arranged so every subrange's median is its node.
    order: Vec<usize>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build_range(points, &mut order, 0);
        KdTree {
            points: points.to_vec(),
            order,
        }
    }

    /// The k nearest neighbours of `query`, optionally excluding one index
    /// (the query point itself). Returns (distance, index) sorted ascending.
    pub fn nearest_k(&self, query: Vec3, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        self.search(0..self.order.len(), 0, query, k, exclude, &mut heap);
        let mut out: Vec<(f64, usize)> = heap
            .into_iter()
            .map(|h| (h.dist_sq.sqrt(), h.index))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    fn search(
        &self,
        range: std::ops::Range<usize>,
        axis: usize,
        query: Vec3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<HeapItem>,
    ) {
        if range.is_empty() {
            return;
        }
        let mid = range.start + range.len() / 2;
        let node_idx = self.order[mid];
        let node = self.points[node_idx];
        if Some(node_idx) != exclude {
            let d2 = vec3::norm_sq(vec3::sub(query, node));
            if heap.len() < k {
                heap.push(HeapItem {
                    dist_sq: d2,
                    index: node_idx,
                });
            } else if d2 < heap.peek().map(|h| h.dist_sq).unwrap_or(f64::INFINITY) {
                heap.pop();
                heap.push(HeapItem {
                    dist_sq: d2,
                    index: node_idx,
                });
            }
        }
        let delta = query[axis] - node[axis];
        let (near, far) = if delta < 0.0 {
            (range.start..mid, mid + 1..range.end)
        } else {
            (mid + 1..range.end, range.start..mid)
        };
        let next_axis = (axis + 1) % 3;
        self.search(near, next_axis, query, k, exclude, heap);
        let worst = heap.peek().map(|h| h.dist_sq).unwrap_or(f64::INFINITY);
        if heap.len() < k || delta * delta <= worst {
            self.search(far, next_axis, query, k, exclude, heap);
        }
    }
}

fn build_range(points: &[Vec3], order: &mut [usize], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let next_axis = (axis + 1) % 3;
    let (lo, rest) = order.split_at_mut(mid);
    build_range(points, lo, next_axis);
    build_range(points, &mut rest[1..], next_axis);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, Philox};

    fn brute_force_knn(
        points: &[Vec3],
        query: Vec3,
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| (vec3::dist(query, *p), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force() {
        let rng = Philox::new(31);
        let points: Vec<Vec3> = (0..500)
            .map(|i| rng.normal3(Domain::InitialSample, i, 0))
            .collect();
        let tree = KdTree::build(&points);
        for q in 0..50usize {
            for k in [1usize, 2, 4, 7] {
                let got = tree.nearest_k(points[q], k, Some(q));
                let want = brute_force_knn(&points, points[q], k, Some(q));
                assert_eq!(got.len(), k);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g.0 - w.0).abs() < 1e-12, "k={k} q={q}: {got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn handles_duplicates() {
        let points = vec![[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]];
        let tree = KdTree::build(&points);
        let nn = tree.nearest_k(points[0], 1, Some(0));
        assert_eq!(nn[0].0, 0.0);
    }
}
