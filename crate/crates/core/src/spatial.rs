//! Static 3-d kd-tree with deterministic k-nearest and radius queries.
//!
//! Results are ordered by `(squared distance, id)`, so equal distances always
//! resolve to the smaller id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist2: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

#[inline]
pub fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    ids: Vec<usize>,
    /// Split axis of the median stored at each `[lo, hi)` midpoint.
    axes: Vec<u8>,
}

impl KdTree {
    /// Builds over `points`, reporting positions as their index.
    pub fn new(points: &[Vector3<f64>]) -> Self {
        Self::with_ids(points.to_vec(), (0..points.len()).collect())
    }

    /// Builds over `points`, reporting `ids[k]` for `points[k]`.
    pub fn with_ids(points: Vec<Vector3<f64>>, ids: Vec<usize>) -> Self {
        assert_eq!(points.len(), ids.len(), "one id per point");
        let mut entries: Vec<(Vector3<f64>, usize)> = points.into_iter().zip(ids).collect();
        let mut axes = vec![0u8; entries.len()];
        build(&mut entries, &mut axes, 0);
        let (points, ids) = entries.into_iter().unzip();
        Self { points, ids, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Up to `k` nearest neighbors with squared distance `<= max_dist2`.
    pub fn nearest(&self, query: &Vector3<f64>, k: usize, max_dist2: f64) -> Vec<Neighbor> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.nearest_in(0, self.len(), query, k, max_dist2, &mut heap);
        let mut out = heap.into_vec();
        out.sort();
        out
    }

    fn nearest_in(
        &self,
        lo: usize,
        hi: usize,
        query: &Vector3<f64>,
        k: usize,
        max_dist2: f64,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let candidate = Neighbor {
            id: self.ids[mid],
            dist2: dist2(query, &self.points[mid]),
        };
        if candidate.dist2 <= max_dist2 {
            if heap.len() < k {
                heap.push(candidate);
            } else if candidate < *heap.peek().expect("non-empty heap") {
                heap.pop();
                heap.push(candidate);
            }
        }
        let axis = self.axes[mid] as usize;
        let diff = query[axis] - self.points[mid][axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(near.0, near.1, query, k, max_dist2, heap);
        let bound = if heap.len() < k {
            max_dist2
        } else {
            heap.peek().map_or(max_dist2, |worst| worst.dist2.min(max_dist2))
        };
        // `<=` keeps equal-distance points with smaller ids reachable
        if diff * diff <= bound {
            self.nearest_in(far.0, far.1, query, k, max_dist2, heap);
        }
    }

    /// All points with squared distance `<= radius2`, ordered by id.
    pub fn within(&self, query: &Vector3<f64>, radius2: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.within_in(0, self.len(), query, radius2, &mut out);
        out.sort_by_key(|n| n.id);
        out
    }

    fn within_in(&self, lo: usize, hi: usize, query: &Vector3<f64>, radius2: f64, out: &mut Vec<Neighbor>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let d2 = dist2(query, &self.points[mid]);
        if d2 <= radius2 {
            out.push(Neighbor {
                id: self.ids[mid],
                dist2: d2,
            });
        }
        let axis = self.axes[mid] as usize;
        let diff = query[axis] - self.points[mid][axis];
        if diff <= 0.0 || diff * diff <= radius2 {
            self.within_in(lo, mid, query, radius2, out);
        }
        if diff >= 0.0 || diff * diff <= radius2 {
            self.within_in(mid + 1, hi, query, radius2, out);
        }
    }
}

fn build(entries: &mut [(Vector3<f64>, usize)], axes: &mut [u8], depth: usize) {
    if entries.is_empty() {
        return;
    }
    let axis = widest_axis(entries).unwrap_or(depth % 3);
    let mid = entries.len() / 2;
    entries.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1)));
    axes[mid] = axis as u8;
    let (left, rest) = entries.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(left, left_axes, depth + 1);
    build(&mut rest[1..], &mut rest_axes[1..], depth + 1);
}

fn widest_axis(entries: &[(Vector3<f64>, usize)]) -> Option<usize> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for (p, _) in entries {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let spread = hi - lo;
    (0..3).max_by(|&a, &b| spread[a].total_cmp(&spread[b]).then(b.cmp(&a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize, max_dist2: f64) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(id, p)| Neighbor { id, dist2: dist2(q, p) })
            .filter(|n| n.dist2 <= max_dist2)
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    fn grid_points() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                pts.push(Vector3::new(i as f64, j as f64, 0.0));
            }
        }
        pts
    }

    #[test]
    fn ties_prefer_smaller_id() {
        let pts = grid_points();
        let tree = KdTree::new(&pts);
        // centre (2,2) has four neighbours at distance 1
        let got = tree.nearest(&Vector3::new(2.0, 2.0, 0.0), 3, f64::INFINITY);
        let ids: Vec<usize> = got.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![12, 7, 11]);
    }

    #[test]
    fn respects_distance_cap() {
        let tree = KdTree::new(&grid_points());
        let got = tree.nearest(&Vector3::new(0.0, 0.0, 0.0), 10, 1.0);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn duplicate_points_are_all_found() {
        let pts = vec![Vector3::new(1.0, 1.0, 1.0); 6];
        let tree = KdTree::new(&pts);
        let ids: Vec<usize> = tree.nearest(&pts[0], 4, 0.0).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_eq!(tree.within(&pts[0], 0.0).len(), 6);
    }

    proptest! {
        #[test]
        fn nearest_matches_exhaustive_search(
            coords in prop::collection::vec((-5i32..5, -5i32..5, -3i32..3), 1..300),
            q in (-6i32..6, -6i32..6, -4i32..4),
            k in 1usize..12,
            cap in 0.5f64..40.0,
        ) {
            // integer lattice coordinates force many exact ties
            let pts: Vec<Vector3<f64>> = coords
                .iter()
                .map(|&(x, y, z)| Vector3::new(x as f64 * 0.5, y as f64 * 0.5, z as f64 * 0.5))
                .collect();
            let query = Vector3::new(q.0 as f64 * 0.5, q.1 as f64 * 0.5, q.2 as f64 * 0.5);
            let tree = KdTree::new(&pts);
            prop_assert_eq!(tree.nearest(&query, k, cap), brute_nearest(&pts, &query, k, cap));

            let mut expected: Vec<usize> = pts
                .iter()
                .enumerate()
                .filter(|(_, p)| dist2(&query, p) <= cap)
                .map(|(i, _)| i)
                .collect();
            expected.sort();
            let got: Vec<usize> = tree.within(&query, cap).iter().map(|n| n.id).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
