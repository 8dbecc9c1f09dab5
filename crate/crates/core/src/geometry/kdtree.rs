//! Static kd-tree over a point set.
//!
//! Query results are ordered by `(distance, index)` so they are identical to a
//! brute-force scan, including how ties are broken.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Nearest / k-nearest / radius queries over an immutable point set.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Point3<f64>>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// `(squared distance, index)` with a total order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate(f64, u32);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PointIndex {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mut lo = self.points[self.order[start] as usize];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] == 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(Node::Split {
            axis: axis as u8,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id as usize]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// Closest point as `(index, distance)`; ties go to the lowest index.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn knn(&self, q: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|Candidate(d2, i)| (i as usize, d2.sqrt()))
            .collect()
    }

    fn knn_rec(&self, node: u32, q: &Point3<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate((self.points[i as usize] - q).norm_squared(), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                // Points equal to the split value may sit on either side, so only
                // prune when the far half-space is strictly farther than the worst kept.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// All points with distance `<= radius`, sorted by `(distance, index)`.
    pub fn within_radius(&self, q: &Point3<f64>, radius: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<Candidate> = Vec::new();
        if self.points.is_empty() || radius < 0.0 {
            return Vec::new();
        }
        let r2 = radius * radius;
        let mut stack = vec![0u32];
        while let Some(node) = stack.pop() {
            match self.nodes[node as usize] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start as usize..end as usize] {
                        let d2 = (self.points[i as usize] - q).norm_squared();
                        if d2 <= r2 {
                            out.push(Candidate(d2, i));
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis as usize] - value;
                    if diff <= radius {
                        stack.push(left);
                    }
                    if diff >= -radius {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort();
        out.into_iter()
            .map(|Candidate(d2, i)| (i as usize, d2.sqrt()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3<f64>], q: &Point3<f64>) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn random_points(seed: u64, n: usize) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                )
            })
            .collect()
    }

    #[test]
    fn matches_brute_force() {
        let pts = random_points(1, 2000);
        let index = PointIndex::new(&pts);
        let queries = random_points(2, 100);
        for q in &queries {
            let all = brute(&pts, q);
            assert_eq!(index.nearest(q).unwrap(), all[0]);
            assert_eq!(index.knn(q, 17), all[..17].to_vec());
            let r = 1.3;
            let expected: Vec<_> = all.iter().copied().filter(|&(_, d)| d * d <= r * r).collect();
            assert_eq!(index.within_radius(q, r), expected);
        }
    }

    #[test]
    fn duplicate_points_break_ties_by_index() {
        let p = Point3::new(1.0, 1.0, 1.0);
        let pts = vec![p; 40];
        let index = PointIndex::new(&pts);
        assert_eq!(index.nearest(&Point3::origin()).unwrap().0, 0);
        let knn: Vec<usize> = index.knn(&p, 5).into_iter().map(|(i, _)| i).collect();
        assert_eq!(knn, vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn grid_points_match_brute_force(seed in 0u64..1000, k in 1usize..12) {
            // Integer grid coordinates produce many exact ties.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..300)
                .map(|_| Point3::new(
                    rng.random_range(0..6) as f64,
                    rng.random_range(0..6) as f64,
                    rng.random_range(0..6) as f64,
                ))
                .collect();
            let index = PointIndex::new(&pts);
            let q = Point3::new(
                rng.random_range(0..6) as f64 + 0.5,
                rng.random_range(0..6) as f64,
                2.0,
            );
            let all = brute(&pts, &q);
            prop_assert_eq!(index.knn(&q, k), all[..k].to_vec());
        }
    }
}
