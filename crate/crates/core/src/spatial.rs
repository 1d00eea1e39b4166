//! Static 3-d tree for k-nearest-neighbor and radius queries.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geom::Point3;

#[inline]
pub(crate) fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Balanced k-d tree over a fixed point set. Nodes are stored implicitly: each
/// subrange of `order` has its splitting point at the midpoint.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
}

/// A neighbor returned by [`KdTree::nearest`]: index into the build slice and
/// squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query`, ordered by (distance, index).
    pub fn nearest(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(query, k, 0, self.order.len(), 0, &mut best);
        }
        best
    }

    fn knn_rec(
        &self,
        q: &Point3,
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Vec<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let cand = Neighbor {
            index: idx,
            dist2: dist2(q, p),
        };
        if best.len() < k || cand.cmp_key(best.last().unwrap()) == Ordering::Less {
            let pos = best
                .binary_search_by(|n| n.cmp_key(&cand))
                .unwrap_or_else(|e| e);
            best.insert(pos, cand);
            best.truncate(k);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, k, near.0, near.1, depth + 1, best);
        if best.len() < k || diff * diff <= best.last().unwrap().dist2 {
            self.knn_rec(q, k, far.0, far.1, depth + 1, best);
        }
    }

    /// Whether any point accepted by `keep` lies within distance `radius` of `query`.
    pub fn any_within(&self, query: &Point3, radius: f64, keep: impl Fn(usize) -> bool) -> bool {
        let r2 = radius * radius;
        self.any_rec(query, r2, 0, self.order.len(), 0, &keep)
    }

    fn any_rec(
        &self,
        q: &Point3,
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        keep: &impl Fn(usize) -> bool,
    ) -> bool {
        if lo >= hi {
            return false;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if dist2(q, p) <= r2 && keep(idx) {
            return true;
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.any_rec(q, r2, near.0, near.1, depth + 1, keep)
            || (diff * diff <= r2 && self.any_rec(q, r2, far.0, far.1, depth + 1, keep))
    }

    /// Indices of all points within `radius` of `query`, ascending.
    pub fn within(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_rec(query, radius * radius, 0, self.order.len(), 0, &mut out);
        out.sort_unstable();
        out
    }

    fn within_rec(&self, q: &Point3, r2: f64, lo: usize, hi: usize, depth: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if dist2(q, p) <= r2 {
            out.push(idx);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.within_rec(q, r2, lo, mid, depth + 1, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.within_rec(q, r2, mid + 1, hi, depth + 1, out);
        }
    }
}

fn build(points: &[Point3], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut rest[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn knn_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 33, 200] {
            let pts = random_points(&mut rng, n);
            let tree = KdTree::new(&pts);
            for _ in 0..20 {
                let q = Point3::new(rng.random(), rng.random(), rng.random());
                for k in [1usize, 3, 8] {
                    let mut brute: Vec<(f64, usize)> =
                        pts.iter().enumerate().map(|(i, p)| (dist2(&q, p), i)).collect();
                    brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    brute.truncate(k);
                    let got: Vec<(f64, usize)> =
                        tree.nearest(&q, k).iter().map(|n| (n.dist2, n.index)).collect();
                    assert_eq!(got, brute);
                }
            }
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let tree = KdTree::new(&pts);
        let got: Vec<usize> = tree.nearest(&Point3::origin(), 2).iter().map(|n| n.index).collect();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn radius_queries_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 300);
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = Point3::new(rng.random(), rng.random(), rng.random());
            let r = rng.random::<f64>() * 0.3;
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| dist2(&q, &pts[i]) <= r * r).collect();
            assert_eq!(tree.within(&q, r), brute);
            assert_eq!(tree.any_within(&q, r, |_| true), !brute.is_empty());
            let odd: Vec<usize> = brute.iter().copied().filter(|i| i % 2 == 1).collect();
            assert_eq!(tree.any_within(&q, r, |i| i % 2 == 1), !odd.is_empty());
        }
    }
}
