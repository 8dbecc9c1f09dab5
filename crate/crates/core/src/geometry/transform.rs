use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Unit, Vector3};

use super::{GeometryError, PointCloud, TriMesh};

/// Proper rigid motion `p -> R p + t` in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, projecting `rotation` onto SO(3) first.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: orthonormalize(&rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Small-angle parameterisation used by the ICP solver: `(rx, ry, rz, tx, ty, tz)`.
    pub fn from_twist(twist: &[f64; 6]) -> Self {
        let omega = Vector3::new(twist[0], twist[1], twist[2]);
        let rotation = Rotation3::new(omega);
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::new(twist[3], twist[4], twist[5]),
        }
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Geodesic angle of the rotation in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        s.norm().atan2(r.trace() - 1.0)
    }

    /// Rotation angle (radians) and translation distance (mm) between two transforms.
    pub fn error_to(&self, other: &RigidTransform) -> (f64, f64) {
        let delta = self.inverse().compose(other);
        (
            delta.rotation_angle(),
            (self.translation - other.translation).norm(),
        )
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Reads the upper 3×4 block; the rotation block must already be a proper rotation.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let rotation: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        let t = Self {
            rotation,
            translation,
        };
        t.check()?;
        Ok(t)
    }

    /// Orthonormality and handedness within 1e-9.
    pub fn check(&self) -> Result<(), GeometryError> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation not orthonormal (max |RᵀR - I| = {err:e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation determinant {det}"
            )));
        }
        Ok(())
    }
}

/// Nearest proper rotation in the Frobenius sense.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).scale_mut(-1.0);
        r = u * v_t;
    }
    r
}

/// Geometry that can be moved by a rigid transform.
pub trait Transformable {
    fn transformed(&self, t: &RigidTransform) -> Self;
}

impl Transformable for PointCloud {
    fn transformed(&self, t: &RigidTransform) -> Self {
        PointCloud {
            points: self.points.iter().map(|p| t.apply_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
        }
    }
}

impl Transformable for TriMesh {
    fn transformed(&self, t: &RigidTransform) -> Self {
        TriMesh {
            vertices: self.vertices.iter().map(|p| t.apply_point(p)).collect(),
            triangles: self.triangles.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
            colors: self.colors.clone(),
        }
    }
}

pub fn apply_transform<G: Transformable>(t: &RigidTransform, geometry: &G) -> G {
    geometry.transformed(t)
}
