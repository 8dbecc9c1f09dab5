use nalgebra::{Point3, Vector3};

/// Which part of a triangle a closest point lies on. Local corner indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleFeature {
    Vertex(u8),
    /// Edge between local corners `(k, (k + 1) % 3)`.
    Edge(u8),
    Face,
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> (Point3<f64>, TriangleFeature) {
    let ab = b - a;
    let ac = c - a;
    if ab.cross(&ac).norm_squared() == 0.0 {
        return closest_on_degenerate(p, a, b, c);
    }
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, TriangleFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, TriangleFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, TriangleFeature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, TriangleFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, TriangleFeature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, TriangleFeature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, TriangleFeature::Face)
}

fn closest_on_segment(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> (Point3<f64>, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t, t)
}

fn closest_on_degenerate(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> (Point3<f64>, TriangleFeature) {
    let corners = [a, b, c];
    let mut best = (*a, TriangleFeature::Vertex(0));
    let mut best_d = f64::INFINITY;
    for k in 0..3 {
        let (q, t) = closest_on_segment(p, corners[k], corners[(k + 1) % 3]);
        let d = (q - p).norm_squared();
        if d < best_d {
            best_d = d;
            let feature = if t <= 0.0 {
                TriangleFeature::Vertex(k as u8)
            } else if t >= 1.0 {
                TriangleFeature::Vertex(((k + 1) % 3) as u8)
            } else {
                TriangleFeature::Edge(k as u8)
            };
            best = (q, feature);
        }
    }
    best
}

/// Möller–Trumbore intersection; returns the ray parameter of a hit with `t > 0`.
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > 0.0).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense barycentric search used as an independent reference.
    fn grid_min_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
        let n = 400;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let u = i as f64 / n as f64;
                let v = j as f64 / n as f64;
                let q = a + (b - a) * u + (c - a) * v;
                best = best.min((q - p).norm());
            }
        }
        best
    }

    #[test]
    fn agrees_with_dense_barycentric_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(2.0, 0.1, 0.0);
        let c = Point3::new(0.5, 1.5, 0.3);
        for _ in 0..30 {
            let p = Point3::new(
                rng.random_range(-1.0..3.0),
                rng.random_range(-1.0..3.0),
                rng.random_range(-1.0..1.0),
            );
            let (q, _) = closest_point_on_triangle(&p, &a, &b, &c);
            let d = (q - p).norm();
            let reference = grid_min_distance(&p, &a, &b, &c);
            assert!(d <= reference + 1e-12);
            assert!(reference - d < 1e-2);
        }
    }

    #[test]
    fn features_are_classified() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let f = |p| closest_point_on_triangle(&p, &a, &b, &c).1;
        assert_eq!(f(Point3::new(-1.0, -1.0, 0.0)), TriangleFeature::Vertex(0));
        assert_eq!(f(Point3::new(2.0, -0.5, 0.0)), TriangleFeature::Vertex(1));
        assert_eq!(f(Point3::new(0.5, -1.0, 0.0)), TriangleFeature::Edge(0));
        assert_eq!(f(Point3::new(1.0, 1.0, 0.0)), TriangleFeature::Edge(1));
        assert_eq!(f(Point3::new(-1.0, 0.5, 0.0)), TriangleFeature::Edge(2));
        assert_eq!(f(Point3::new(0.2, 0.2, 1.0)), TriangleFeature::Face);
    }

    #[test]
    fn degenerate_triangle_falls_back_to_segments() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(2.0, 0.0, 0.0);
        let (q, _) = closest_point_on_triangle(&Point3::new(1.5, 1.0, 0.0), &a, &b, &c);
        assert!((q - Point3::new(1.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ray_hits() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let o = Point3::new(0.25, 0.25, -1.0);
        assert_eq!(ray_triangle(&o, &Vector3::z(), &a, &b, &c), Some(1.0));
        assert_eq!(ray_triangle(&o, &-Vector3::z(), &a, &b, &c), None);
    }
}
