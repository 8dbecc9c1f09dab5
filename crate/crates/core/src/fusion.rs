//! Hybrid proxy construction: keep the part of the aligned full mesh that lies
//! away from the crown, then take the union with the crown.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{component_triangles, GeometryError, MeshIndex, TriMesh};

pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no part of the full mesh lies farther than tau = {tau} from the crown")]
    EmptyRoot { tau: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    /// Root classification distance threshold, in millimetres.
    pub tau: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(FusionError::InvalidParameters(format!("tau must be positive, got {}", self.tau)))
        }
    }
}

/// Per-vertex flag: distance from the vertex to the crown surface exceeds `tau`.
pub fn root_vertex_mask(full: &TriMesh, crown: &TriMesh, tau: f64) -> Result<Vec<bool>, FusionError> {
    if full.vertices.is_empty() {
        return Err(GeometryError::EmptyMesh.into());
    }
    let index = MeshIndex::new(crown)?;
    Ok(full
        .vertices
        .par_iter()
        .map(|v| index.closest_point(v).distance > tau)
        .collect())
}

/// Largest connected piece of `full` whose triangles have all three vertices
/// farther than `tau` from `crown`.
pub fn isolate_root(full: &TriMesh, crown: &TriMesh, p: &FusionParams) -> Result<TriMesh, FusionError> {
    p.validate()?;
    if full.triangles.is_empty() || crown.triangles.is_empty() {
        return Err(GeometryError::EmptyMesh.into());
    }
    let keep = root_vertex_mask(full, crown, p.tau)?;
    let kept: Vec<usize> = full
        .triangles
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().all(|&v| keep[v as usize]))
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(FusionError::EmptyRoot { tau: p.tau });
    }
    let candidate = full.submesh(&kept);
    let largest = &component_triangles(&candidate)[0];
    Ok(candidate.submesh(largest))
}

/// `crown ∪ root` as a plain concatenation: no welding, no hole filling.
pub fn make_hybrid_proxy(crown: &TriMesh, root: &TriMesh) -> TriMesh {
    crown.concat(root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_edges: usize,
}

impl MeshSummary {
    pub fn of(mesh: &TriMesh) -> Self {
        Self {
            vertices: mesh.vertex_count(),
            triangles: mesh.triangle_count(),
            boundary_edges: mesh.boundary_edge_count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::icosphere;
    use nalgebra::Point3;
    use proptest::prelude::*;

    /// Open cylinder of radius `r` around the z axis, `rings` vertex rings
    /// spaced evenly over `[0, height]`.
    fn cylinder(r: f64, height: f64, rings: usize, segments: usize) -> TriMesh {
        let mut v = Vec::new();
        for j in 0..rings {
            let z = height * j as f64 / (rings - 1) as f64;
            for i in 0..segments {
                let a = std::f64::consts::TAU * i as f64 / segments as f64;
                v.push(Point3::new(r * a.cos(), r * a.sin(), z));
            }
        }
        let s = segments as u32;
        let mut t = Vec::new();
        for j in 0..rings as u32 - 1 {
            for i in 0..s {
                let a = j * s + i;
                let b = j * s + (i + 1) % s;
                t.push([a, b, b + s]);
                t.push([a, b + s, a + s]);
            }
        }
        TriMesh::new(v, t).unwrap()
    }

    fn band(mesh: &TriMesh, zmin: f64) -> TriMesh {
        let ids: Vec<usize> = (0..mesh.triangle_count())
            .filter(|&t| mesh.corners(t).iter().all(|p| p.z >= zmin - 1e-9))
            .collect();
        mesh.submesh(&ids)
    }

    #[test]
    fn crown_copy_leaves_no_root() {
        let m = icosphere(5.0, 2);
        assert_eq!(
            isolate_root(&m, &m, &FusionParams::default()),
            Err(FusionError::EmptyRoot { tau: 0.6 })
        );
    }

    #[test]
    fn cylinder_band_keeps_the_bottom() {
        let full = cylinder(3.0, 20.0, 41, 48);
        let crown = band(&full, 15.0);
        let root = isolate_root(&full, &crown, &FusionParams::default()).unwrap();
        let index = MeshIndex::new(&crown).unwrap();
        assert!(root.vertices.iter().all(|v| index.closest_point(v).distance > 0.6));
        assert!(root.vertices.iter().all(|v| v.z < 14.4));
        // Rings at z <= 14.0 survive: 29 rings, 28 bands of quads.
        assert_eq!(root.triangle_count(), 28 * 48 * 2);
        assert_eq!(component_triangles(&root).len(), 1);
    }

    #[test]
    fn largest_piece_wins() {
        // Deleting ring 2 leaves a 10-triangle strip below and a 100-triangle block above.
        let full = cylinder(3.0, 13.0, 14, 5);
        let far = icosphere(1.0, 0);
        let far = TriMesh {
            vertices: far.vertices.iter().map(|p| Point3::new(p.x, p.y, p.z + 100.0)).collect(),
            ..far
        };
        let ids: Vec<usize> = (0..full.triangle_count())
            .filter(|&t| full.triangles[t].iter().all(|&v| v / 5 != 2))
            .collect();
        let split = full.submesh(&ids);
        let groups = component_triangles(&split);
        assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), vec![100, 10]);
        let root = isolate_root(&split, &far, &FusionParams::default()).unwrap();
        assert_eq!(root.triangle_count(), 100);
    }

    #[test]
    fn proxy_is_a_plain_union() {
        let crown = icosphere(1.0, 2);
        let root = cylinder(0.5, 3.0, 5, 12);
        let h = make_hybrid_proxy(&crown, &root);
        assert_eq!(h.vertex_count(), crown.vertex_count() + root.vertex_count());
        assert_eq!(h.triangle_count(), crown.triangle_count() + root.triangle_count());
        assert_eq!(&h.vertices[..crown.vertex_count()], &crown.vertices[..]);
        assert_eq!(&h.vertices[crown.vertex_count()..], &root.vertices[..]);
        assert_eq!(h.submesh(&(0..crown.triangle_count()).collect::<Vec<_>>()), crown);
        let tail: Vec<usize> = (crown.triangle_count()..h.triangle_count()).collect();
        assert_eq!(h.submesh(&tail), root);
    }

    #[test]
    fn gap_leaves_boundary_edges() {
        let full = cylinder(3.0, 20.0, 41, 48);
        let crown = band(&full, 15.0);
        let root = isolate_root(&full, &crown, &FusionParams::default()).unwrap();
        let h = make_hybrid_proxy(&crown, &root);
        let s = MeshSummary::of(&h);
        assert!(s.boundary_edges > 0);
        assert_eq!(s.vertices, crown.vertex_count() + root.vertex_count());
    }

    #[test]
    fn invalid_tau_is_rejected() {
        let m = icosphere(1.0, 1);
        assert!(matches!(
            isolate_root(&m, &m, &FusionParams { tau: 0.0 }),
            Err(FusionError::InvalidParameters(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn root_mask_shrinks_with_tau(t1 in 0.05f64..4.0, dt in 0.0f64..4.0, zcut in 8.0f64..18.0) {
            let full = cylinder(3.0, 20.0, 21, 24);
            let crown = band(&full, zcut);
            prop_assume!(crown.triangle_count() > 0);
            let a = root_vertex_mask(&full, &crown, t1).unwrap();
            let b = root_vertex_mask(&full, &crown, t1 + dt).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(&x, &y)| !y || x));
        }
    }
}
