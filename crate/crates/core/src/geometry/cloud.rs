use nalgebra::{Point3, Vector3};

use super::{Aabb, GeometryError};

/// Unstructured points in millimetres with optional unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            normals: Some(normals),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidInput("non-finite point".into()));
        }
        if let Some(ns) = &self.normals {
            if ns.len() != self.points.len() {
                return Err(GeometryError::InvalidInput("normal count mismatch".into()));
            }
            if ns.iter().any(|n| (n.norm() - 1.0).abs() > 1e-6) {
                return Err(GeometryError::InvalidInput("normal is not unit length".into()));
            }
        }
        Ok(())
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        Some(Point3::from(sum / self.points.len() as f64))
    }
}
