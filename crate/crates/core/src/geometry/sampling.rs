use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeometryError, PointCloud, TriMesh, DEGENERATE_AREA};

/// Cumulative-area table over the non-degenerate triangles of a mesh.
#[derive(Debug, Clone)]
pub struct AreaSampler {
    triangles: Vec<usize>,
    cumulative: Vec<f64>,
}

impl AreaSampler {
    pub fn new(mesh: &TriMesh) -> Result<Self, GeometryError> {
        let mut triangles = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for t in 0..mesh.triangles.len() {
            let a = mesh.triangle_area(t);
            if a < DEGENERATE_AREA {
                continue;
            }
            total += a;
            triangles.push(t);
            cumulative.push(total);
        }
        if triangles.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        Ok(Self {
            triangles,
            cumulative,
        })
    }

    pub fn total_area(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Draws a triangle with probability proportional to its area.
    pub fn pick(&self, rng: &mut impl Rng) -> usize {
        let u = rng.random::<f64>() * self.total_area();
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.triangles[i.min(self.triangles.len() - 1)]
    }

    /// Uniform point on triangle `tri` of `mesh`.
    pub fn point_in(mesh: &TriMesh, tri: usize, rng: &mut impl Rng) -> Point3<f64> {
        let [a, b, c] = mesh.corners(tri);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        let wa = 1.0 - r1;
        let wb = r1 * (1.0 - r2);
        let wc = r1 * r2;
        Point3::from(a.coords * wa + b.coords * wb + c.coords * wc)
    }
}

/// `n` area-weighted uniform surface samples carrying their triangle normals.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    Ok(sample_surface_with_ids(mesh, n, seed)?.0)
}

/// Like [`sample_surface`], also returning the source triangle of each sample.
pub fn sample_surface_with_ids(
    mesh: &TriMesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>), GeometryError> {
    let sampler = AreaSampler::new(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let t = sampler.pick(&mut rng);
        points.push(AreaSampler::point_in(mesh, t, &mut rng));
        normals.push(mesh.triangle_normal(t).expect("non-degenerate"));
        ids.push(t);
    }
    Ok((PointCloud::with_normals(points, normals), ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> TriMesh {
        // Areas 4.5 and 0.5 -> ratio 9:1.
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(3.0, 0.0, 0.0),
                Point3::new(0.0, 3.0, 0.0),
                Point3::new(10.0, 0.0, 0.0),
                Point3::new(11.0, 0.0, 0.0),
                Point3::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_samples_stay_inside() {
        let mesh = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 1.0),
                Point3::new(1.0, 0.0, 1.0),
                Point3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let cloud = sample_surface(&mesh, 1000, 3).unwrap();
        for p in &cloud.points {
            assert!((p.z - 1.0).abs() < 1e-12);
            assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.x + p.y <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn area_ratio_within_three_sigma() {
        let n = 10_000;
        let (_, ids) = sample_surface_with_ids(&two_triangles(), n, 42).unwrap();
        let big = ids.iter().filter(|&&t| t == 0).count() as f64;
        // Binomial(n, 0.9): sigma = sqrt(n p (1 - p)) = 30.
        let sigma = (n as f64 * 0.9 * 0.1).sqrt();
        assert!((big - 9000.0).abs() < 3.0 * sigma, "big = {big}");
    }

    #[test]
    fn deterministic_per_seed() {
        let mesh = two_triangles();
        assert_eq!(sample_surface(&mesh, 500, 1).unwrap(), sample_surface(&mesh, 500, 1).unwrap());
        assert_ne!(sample_surface(&mesh, 500, 1).unwrap(), sample_surface(&mesh, 500, 2).unwrap());
    }

    #[test]
    fn zero_area_is_an_error() {
        let mesh = TriMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(sample_surface(&mesh, 10, 0), Err(GeometryError::EmptyMesh)));
    }

    #[test]
    fn chi_square_on_area_fractions() {
        // Five triangles with distinct areas; chi-square with 4 dof, p = 0.001 critical value 18.467.
        let mut v = Vec::new();
        let mut t = Vec::new();
        for (k, s) in [1.0, 2.0, 0.5, 3.0, 1.5].iter().enumerate() {
            let o = k as f64 * 10.0;
            let base = v.len() as u32;
            v.push(Point3::new(o, 0.0, 0.0));
            v.push(Point3::new(o + s, 0.0, 0.0));
            v.push(Point3::new(o, *s, 0.0));
            t.push([base, base + 1, base + 2]);
        }
        let mesh = TriMesh::new(v, t).unwrap();
        let n = 100_000;
        let (_, ids) = sample_surface_with_ids(&mesh, n, 2024).unwrap();
        let total = mesh.total_area();
        let mut chi2 = 0.0;
        for tri in 0..5 {
            let observed = ids.iter().filter(|&&x| x == tri).count() as f64;
            let expected = n as f64 * mesh.triangle_area(tri) / total;
            chi2 += (observed - expected).powi(2) / expected;
        }
        assert!(chi2 < 18.467, "chi2 = {chi2}");
    }
}
