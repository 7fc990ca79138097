//! Exact k-nearest-neighbor queries over a static point set.
//!
//! A balanced kd-tree built once over the (copied) points. Queries are
//! exact and deterministic: candidates are ordered by `(distance, index)`,
//! so equidistant hits always resolve to the lowest point index. The tree
//! is immutable after construction and safe to query from many threads.

use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

/// One query hit. `distance` is Euclidean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    axis: usize,
    split: f64,
    // Children as node indices; `usize::MAX` marks a leaf.
    left: usize,
    right: usize,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone)]
pub struct KnnIndex<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

/// Max-heap entry ordered by `(distance^2, index)` so the heap top is the
/// current worst candidate and ties prefer the lowest index.
#[derive(PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl<const D: usize> KnnIndex<D> {
    pub fn build(points: &[[f64; D]]) -> Self {
        assert!(!points.is_empty(), "cannot index an empty point set");
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        index.root = index.build_node(0, points.len());
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            axis: 0,
            split: 0.0,
            left: usize::MAX,
            right: usize::MAX,
            start,
            end,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        // Split the widest axis at the median.
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..D)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] <= 0.0 {
            return id; // all points coincide; keep as leaf
        }
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i as usize][axis]
                .total_cmp(&points[j as usize][axis])
                .then(i.cmp(&j))
        });
        let split = self.points[self.order[mid] as usize][axis];
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        let node = &mut self.nodes[id];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    /// The `min(k, n)` nearest points to `q`, sorted by nondecreasing
    /// distance with index as the tie-breaker.
    pub fn knn(&self, q: &[f64; D], k: usize) -> Vec<Neighbor> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, q, k, &mut heap);
        let mut hits: Vec<Neighbor> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index as usize,
                distance: c.dist_sq.sqrt(),
            })
            .collect();
        debug_assert!(hits.len() == k);
        // into_sorted_vec is ascending by (dist_sq, index) already.
        hits.shrink_to_fit();
        hits
    }

    /// Single nearest neighbor.
    pub fn nearest(&self, q: &[f64; D]) -> Neighbor {
        self.knn(q, 1)[0]
    }

    fn search(&self, node_id: usize, q: &[f64; D], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = self.nodes[node_id];
        if node.left == usize::MAX {
            for &i in &self.order[node.start..node.end] {
                let d = crate::math::dist_sq(q, &self.points[i as usize]);
                let cand = Candidate {
                    dist_sq: d,
                    index: i,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        let delta = q[node.axis] - node.split;
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, q, k, heap);
        // Visit the far side unless it provably cannot improve the heap;
        // on an exact distance tie a lower index may still win, so only a
        // strictly larger plane distance prunes.
        let plane_sq = delta * delta;
        if heap.len() < k || plane_sq <= heap.peek().unwrap().dist_sq {
            self.search(far, q, k, heap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn linear_scan<const D: usize>(points: &[[f64; D]], q: &[f64; D], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Candidate> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Candidate {
                dist_sq: math::dist_sq(q, p),
                index: i as u32,
            })
            .collect();
        all.sort();
        all.truncate(k.min(points.len()));
        all.into_iter()
            .map(|c| Neighbor {
                index: c.index as usize,
                distance: c.dist_sq.sqrt(),
            })
            .collect()
    }

    fn random_points<const D: usize>(n: usize, seed: u64) -> Vec<[f64; D]> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn matches_linear_scan_exactly() {
        for (n, seed) in [(3usize, 0u64), (50, 1), (500, 2), (10_000, 3)] {
            let points = random_points::<3>(n, seed);
            let tree = KnnIndex::build(&points);
            let queries = random_points::<3>(100, seed + 100);
            for q in &queries {
                for k in [1usize, 5, 17] {
                    let got = tree.knn(q, k);
                    let want = linear_scan(&points, q, k);
                    assert_eq!(got.len(), want.len());
                    for (g, w) in got.iter().zip(&want) {
                        assert_eq!(g.index, w.index, "n={n} k={k}");
                        assert_eq!(g.distance.to_bits(), w.distance.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn matches_linear_scan_2d() {
        let points = random_points::<2>(777, 9);
        let tree = KnnIndex::build(&points);
        for q in random_points::<2>(50, 10) {
            let got = tree.knn(&q, 8);
            let want = linear_scan(&points, &q, 8);
            assert_eq!(
                got.iter().map(|h| h.index).collect::<Vec<_>>(),
                want.iter().map(|h| h.index).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // Four copies of the same point plus one farther away.
        let points = vec![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [5.0, 0.0]];
        let tree = KnnIndex::build(&points);
        let hits = tree.knn(&[0.0, 0.0], 3);
        assert_eq!(
            hits.iter().map(|h| h.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn k_larger_than_cloud_is_clamped() {
        let points = random_points::<3>(5, 42);
        let tree = KnnIndex::build(&points);
        assert_eq!(tree.knn(&[0.0; 3], 50).len(), 5);
    }

    #[test]
    fn coincident_cloud_builds() {
        let points = vec![[0.25, 0.25, 0.25]; 40];
        let tree = KnnIndex::build(&points);
        let hits = tree.knn(&[0.0; 3], 4);
        assert_eq!(
            hits.iter().map(|h| h.index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn mostly_duplicate_coordinates() {
        // Heavy duplication along the split axis exercises the tie-aware
        // partition and pruning paths.
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let points: Vec<[f64; 3]> = (0..400)
            .map(|_| {
                [
                    (rng.random_range(0..4) as f64) * 0.25,
                    rng.random_range(-1.0..1.0),
                    0.0,
                ]
            })
            .collect();
        let tree = KnnIndex::build(&points);
        for q in random_points::<3>(40, 78) {
            let got = tree.knn(&q, 6);
            let want = linear_scan(&points, &q, 6);
            assert_eq!(
                got.iter().map(|h| h.index).collect::<Vec<_>>(),
                want.iter().map(|h| h.index).collect::<Vec<_>>()
            );
        }
    }
}
