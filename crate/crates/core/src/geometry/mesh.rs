use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::{Aabb, GeometryError, PointCloud};

/// Triangles with area below this (mm²) are kept in storage but skipped by
/// area-weighted sampling and normal computation.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle surface. Coordinates are millimetres unless a caller has
/// normalized the mesh for the implicit model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex unit normals.
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Optional per-vertex RGB in `[0, 1]`.
    pub colors: Option<Vec<[f64; 3]>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let mesh = Self {
            vertices,
            triangles,
            normals: None,
            colors: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.vertices.len();
        if let Some(bad) = self
            .vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::InvalidMesh(format!("vertex {bad} is not finite")));
        }
        if let Some((i, _)) = self
            .triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v as usize >= n))
        {
            return Err(GeometryError::InvalidMesh(format!(
                "triangle {i} references a vertex out of range ({n} vertices)"
            )));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(GeometryError::InvalidMesh("normal count mismatch".into()));
            }
            if let Some(bad) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(GeometryError::InvalidMesh(format!("normal {bad} is not unit length")));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != n {
                return Err(GeometryError::InvalidMesh("color count mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, tri: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized normal; its length is twice the triangle area.
    pub fn area_vector(&self, tri: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        0.5 * self.area_vector(tri).norm()
    }

    /// Unit face normal, or `None` for a degenerate triangle.
    pub fn triangle_normal(&self, tri: usize) -> Option<Vector3<f64>> {
        let n = self.area_vector(tri);
        let len = n.norm();
        (0.5 * len >= DEGENERATE_AREA).then(|| n / len)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Length of the axis-aligned bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> Result<f64, GeometryError> {
        self.aabb()
            .map(|b| b.diagonal())
            .ok_or(GeometryError::EmptyMesh)
    }

    /// Signed enclosed volume (positive for outward-facing closed surfaces).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize].coords;
                let b = self.vertices[t[1] as usize].coords;
                let c = self.vertices[t[2] as usize].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Number of triangles incident to each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges used by exactly one triangle.
    pub fn boundary_edge_count(&self) -> usize {
        self.edge_incidence().values().filter(|&&c| c == 1).count()
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_incidence().values().all(|&c| c == 2)
    }

    /// Concatenates vertex and triangle lists without welding.
    pub fn concat(&self, other: &TriMesh) -> TriMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]),
        );
        let normals = match (&self.normals, &other.normals) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
            _ => None,
        };
        let colors = match (&self.colors, &other.colors) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
            _ => None,
        };
        TriMesh {
            vertices,
            triangles,
            normals,
            colors,
        }
    }

    /// Mesh made of the given triangles, with vertices compacted in their original order.
    pub fn submesh(&self, triangle_ids: &[usize]) -> TriMesh {
        let mut used = vec![false; self.vertices.len()];
        for &t in triangle_ids {
            for &v in &self.triangles[t] {
                used[v as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut kept = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = kept.len() as u32;
                kept.push(i);
            }
        }
        TriMesh {
            vertices: kept.iter().map(|&i| self.vertices[i]).collect(),
            triangles: triangle_ids
                .iter()
                .map(|&t| {
                    let [a, b, c] = self.triangles[t];
                    [remap[a as usize], remap[b as usize], remap[c as usize]]
                })
                .collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| kept.iter().map(|&i| ns[i]).collect()),
            colors: self
                .colors
                .as_ref()
                .map(|cs| kept.iter().map(|&i| cs[i]).collect()),
        }
    }

    /// Reverses the winding of every triangle.
    pub fn flipped(&self) -> TriMesh {
        let mut out = self.clone();
        for t in &mut out.triangles {
            t.swap(1, 2);
        }
        if let Some(ns) = &mut out.normals {
            ns.iter_mut().for_each(|n| *n = -*n);
        }
        out
    }

    /// Area-weighted vertex normals from non-degenerate incident faces.
    pub fn compute_vertex_normals(&mut self) {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for (i, t) in self.triangles.iter().enumerate() {
            let n = self.area_vector(i);
            if 0.5 * n.norm() < DEGENERATE_AREA {
                continue;
            }
            for &v in t {
                acc[v as usize] += n;
            }
        }
        self.normals = Some(
            acc.into_iter()
                .map(|n| {
                    let len = n.norm();
                    if len > 0.0 {
                        n / len
                    } else {
                        Vector3::z()
                    }
                })
                .collect(),
        );
    }

    pub fn to_point_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.vertices.clone(),
            normals: self.normals.clone(),
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn tetrahedron(offset: Vector3<f64>) -> TriMesh {
        let v = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ]
        .map(|p| p + offset)
        .to_vec();
        TriMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap()
    }

    /// Closed cube `[0, s]³`, outward winding, 12 triangles.
    pub fn cube(s: f64) -> TriMesh {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(Point3::new(
                if i & 1 != 0 { s } else { 0.0 },
                if i & 2 != 0 { s } else { 0.0 },
                if i & 4 != 0 { s } else { 0.0 },
            ));
        }
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let mut tris = Vec::new();
        for q in quads {
            tris.push([q[0], q[1], q[2]]);
            tris.push([q[0], q[2], q[3]]);
        }
        TriMesh::new(v, tris).unwrap()
    }

    /// UV sphere with `stacks × slices` resolution; closed and outward.
    pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriMesh {
        use std::f64::consts::PI;
        let mut v = vec![Point3::new(0.0, 0.0, radius)];
        for i in 1..stacks {
            let phi = PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let theta = 2.0 * PI * j as f64 / slices as f64;
                v.push(Point3::new(
                    radius * phi.sin() * theta.cos(),
                    radius * phi.sin() * theta.sin(),
                    radius * phi.cos(),
                ));
            }
        }
        v.push(Point3::new(0.0, 0.0, -radius));
        let south = (v.len() - 1) as u32;
        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + (j % slices)) as u32;
        let mut t = Vec::new();
        for j in 0..slices {
            t.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                t.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
                t.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        for j in 0..slices {
            t.push([ring(stacks - 1, j), south, ring(stacks - 1, j + 1)]);
        }
        TriMesh::new(v, t).unwrap()
    }
}
