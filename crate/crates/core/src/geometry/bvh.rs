//! Bounding-volume hierarchy over mesh triangles: exact closest-point queries,
//! ray crossing counts and angle-weighted pseudonormals.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::triangle::{closest_point_on_triangle, ray_triangle, TriangleFeature};
use super::{Aabb, GeometryError, TriMesh, DEGENERATE_AREA};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `[start, start + count)` into `order`. Inner: children at `left`, `left + 1`.
    start: u32,
    count: u32,
    left: u32,
}

/// Result of a closest-point query against a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshHit {
    pub point: Point3<f64>,
    pub distance: f64,
    pub triangle: usize,
    pub feature: TriangleFeature,
}

/// Immutable triangle index. Safe to share between threads.
#[derive(Debug, Clone)]
pub struct MeshIndex {
    mesh: TriMesh,
    order: Vec<u32>,
    nodes: Vec<Node>,
    face_normals: Vec<Vector3<f64>>,
    vertex_pseudonormals: Vec<Vector3<f64>>,
    edge_pseudonormals: HashMap<(u32, u32), Vector3<f64>>,
}

impl MeshIndex {
    pub fn new(mesh: &TriMesh) -> Result<Self, GeometryError> {
        if mesh.triangles.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        mesh.validate()?;
        let n = mesh.triangles.len();
        let bounds: Vec<Aabb> = (0..n)
            .map(|t| Aabb::from_points(&mesh.corners(t)).unwrap())
            .collect();
        let centroids: Vec<Point3<f64>> = bounds.iter().map(|b| b.center()).collect();
        let mut index = Self {
            mesh: mesh.clone(),
            order: (0..n as u32).collect(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            face_normals: Vec::new(),
            vertex_pseudonormals: Vec::new(),
            edge_pseudonormals: HashMap::new(),
        };
        index.nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        });
        index.build(0, 0, n, &bounds, &centroids);
        index.compute_pseudonormals();
        Ok(index)
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    fn build(&mut self, node: usize, start: usize, end: usize, bounds: &[Aabb], centroids: &[Point3<f64>]) {
        let mut b = Aabb::empty();
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            b = b.union(&bounds[t as usize]);
            cb.grow(&centroids[t as usize]);
        }
        self.nodes[node].bounds = b;
        let axis = cb.longest_axis();
        if end - start <= LEAF_SIZE || cb.extent()[axis] == 0.0 {
            self.nodes[node].start = start as u32;
            self.nodes[node].count = (end - start) as u32;
            return;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        let empty = Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        };
        self.nodes.push(empty.clone());
        self.nodes.push(empty);
        self.nodes[node].left = left as u32;
        self.build(left, start, mid, bounds, centroids);
        self.build(left + 1, mid, end, bounds, centroids);
    }

    fn compute_pseudonormals(&mut self) {
        let mesh = &self.mesh;
        let mut face_normals = Vec::with_capacity(mesh.triangles.len());
        let mut vertex = vec![Vector3::zeros(); mesh.vertices.len()];
        let mut edge: HashMap<(u32, u32), Vector3<f64>> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let n = mesh.triangle_normal(t).unwrap_or_else(Vector3::zeros);
            face_normals.push(n);
            if n == Vector3::zeros() {
                continue;
            }
            let p = mesh.corners(t);
            for k in 0..3 {
                let e1 = p[(k + 1) % 3] - p[k];
                let e2 = p[(k + 2) % 3] - p[k];
                let angle = e1.angle(&e2);
                vertex[tri[k] as usize] += n * angle;
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                *edge.entry(key).or_insert_with(Vector3::zeros) += n;
            }
        }
        self.face_normals = face_normals;
        self.vertex_pseudonormals = vertex;
        self.edge_pseudonormals = edge;
    }

    /// Exact closest point over all triangles; ties go to the lowest triangle id.
    pub fn closest_point(&self, q: &Point3<f64>) -> MeshHit {
        let mut best_d2 = f64::INFINITY;
        let mut best = MeshHit {
            point: *q,
            distance: f64::INFINITY,
            triangle: usize::MAX,
            feature: TriangleFeature::Face,
        };
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.bounds.distance_squared(q) > best_d2 {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    let [a, b, c] = self.mesh.corners(t as usize);
                    let (p, feature) = closest_point_on_triangle(q, &a, &b, &c);
                    let d2 = (p - q).norm_squared();
                    if d2 < best_d2 || (d2 == best_d2 && (t as usize) < best.triangle) {
                        best_d2 = d2;
                        best = MeshHit {
                            point: p,
                            distance: 0.0,
                            triangle: t as usize,
                            feature,
                        };
                    }
                }
            } else {
                let (l, r) = (node.left, node.left + 1);
                let dl = self.nodes[l as usize].bounds.distance_squared(q);
                let dr = self.nodes[r as usize].bounds.distance_squared(q);
                // Push the farther child first so the nearer one is explored first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.distance = best_d2.sqrt();
        best
    }

    /// Number of triangles crossed by the ray `origin + t·dir`, `t > 0`.
    pub fn ray_crossings(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> usize {
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut count = 0;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.bounds.ray_entry(origin, &inv).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    if self.face_normals[t as usize] == Vector3::zeros() {
                        continue;
                    }
                    let [a, b, c] = self.mesh.corners(t as usize);
                    if ray_triangle(origin, dir, &a, &b, &c).is_some() {
                        count += 1;
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
        count
    }

    /// Unit face normal (zero for degenerate triangles).
    pub fn face_normal(&self, tri: usize) -> Vector3<f64> {
        self.face_normals[tri]
    }

    /// Angle-weighted pseudonormal at the feature a closest point lies on.
    pub fn pseudonormal(&self, hit: &MeshHit) -> Vector3<f64> {
        let tri = self.mesh.triangles[hit.triangle];
        match hit.feature {
            TriangleFeature::Face => self.face_normals[hit.triangle],
            TriangleFeature::Vertex(k) => self.vertex_pseudonormals[tri[k as usize] as usize],
            TriangleFeature::Edge(k) => {
                let (a, b) = (tri[k as usize], tri[(k as usize + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                self.edge_pseudonormals
                    .get(&key)
                    .copied()
                    .unwrap_or_else(|| self.face_normals[hit.triangle])
            }
        }
    }

    /// Reference implementation: scans every triangle.
    pub fn closest_point_brute_force(mesh: &TriMesh, q: &Point3<f64>) -> Option<MeshHit> {
        let mut best: Option<(f64, MeshHit)> = None;
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.corners(t);
            let (p, feature) = closest_point_on_triangle(q, &a, &b, &c);
            let d2 = (p - q).norm_squared();
            if best.as_ref().is_none_or(|(bd, _)| d2 < *bd) {
                best = Some((
                    d2,
                    MeshHit {
                        point: p,
                        distance: d2.sqrt(),
                        triangle: t,
                        feature,
                    },
                ));
            }
        }
        best.map(|(_, h)| h)
    }
}

impl TriMesh {
    /// Convenience wrapper building a [`MeshIndex`] for a single query.
    pub fn closest_point(&self, q: &Point3<f64>) -> Result<MeshHit, GeometryError> {
        Ok(MeshIndex::new(self)?.closest_point(q))
    }
}

/// Triangles whose area is below [`DEGENERATE_AREA`].
pub fn degenerate_triangles(mesh: &TriMesh) -> Vec<usize> {
    (0..mesh.triangles.len())
        .filter(|&t| mesh.triangle_area(t) < DEGENERATE_AREA)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::fixtures::{cube, uv_sphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_matches_brute_force() {
        let mesh = uv_sphere(3.0, 20, 40);
        let index = MeshIndex::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let q = Point3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let fast = index.closest_point(&q);
            let slow = MeshIndex::closest_point_brute_force(&mesh, &q).unwrap();
            assert!((fast.distance - slow.distance).abs() <= 1e-12);
            assert_eq!(fast.triangle, slow.triangle);
        }
    }

    #[test]
    fn surface_and_offset_queries() {
        let mesh = cube(2.0);
        let index = MeshIndex::new(&mesh).unwrap();
        for t in 0..mesh.triangle_count() {
            let [a, b, c] = mesh.corners(t);
            let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
            assert!(index.closest_point(&centroid).distance < 1e-15);
            let n = mesh.triangle_normal(t).unwrap();
            let d = 0.37;
            let hit = index.closest_point(&(centroid + n * d));
            assert!((hit.distance - d).abs() < 1e-12);
        }
    }

    #[test]
    fn ray_parity_inside_outside() {
        let mesh = uv_sphere(1.0, 16, 32);
        let index = MeshIndex::new(&mesh).unwrap();
        let dir = Vector3::new(0.31, 0.47, 0.83).normalize();
        assert_eq!(index.ray_crossings(&Point3::origin(), &dir) % 2, 1);
        assert_eq!(index.ray_crossings(&Point3::new(2.0, 0.0, 0.0), &dir) % 2, 0);
    }

    #[test]
    fn pseudonormals_point_outward_on_cube() {
        let mesh = cube(1.0);
        let index = MeshIndex::new(&mesh).unwrap();
        let center = Point3::new(0.5, 0.5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let q = Point3::new(
                rng.random_range(-1.0..2.0),
                rng.random_range(-1.0..2.0),
                rng.random_range(-1.0..2.0),
            );
            let hit = index.closest_point(&q);
            let n = index.pseudonormal(&hit);
            let outside = (0..3).any(|k| !(0.0..=1.0).contains(&q[k]));
            let s = (q - hit.point).dot(&n);
            if hit.distance > 1e-9 {
                assert_eq!(s > 0.0, outside, "q = {q:?}");
            }
            assert!((hit.point - center).norm() > 0.0);
        }
    }
}
