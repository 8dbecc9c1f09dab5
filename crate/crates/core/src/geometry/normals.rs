//! PCA normal estimation with orientation propagation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{GeometryError, PointCloud, PointIndex};

/// Relative eigenvalue floor below which a neighbourhood is considered rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Unit normals from k-NN covariance. Fails with
/// [`GeometryError::DegenerateNeighborhood`] if any neighbourhood is rank < 2.
///
/// If the cloud already carries normals they are used only as orientation hints;
/// otherwise orientation is propagated over the k-NN graph starting from the
/// point of largest z, which is oriented towards +z.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud, GeometryError> {
    let (out, degenerate) = estimate_normals_lenient(cloud, k)?;
    if !degenerate.is_empty() {
        return Err(GeometryError::DegenerateNeighborhood { indices: degenerate });
    }
    Ok(out)
}

/// Like [`estimate_normals`] but degenerate points inherit the normal of their
/// nearest valid neighbour; their indices are returned alongside.
pub fn estimate_normals_lenient(
    cloud: &PointCloud,
    k: usize,
) -> Result<(PointCloud, Vec<usize>), GeometryError> {
    let n = cloud.len();
    if k == 0 || n < k + 1 {
        return Err(GeometryError::InvalidInput(format!(
            "normal estimation needs at least k + 1 = {} points, got {n}",
            k + 1
        )));
    }
    let index = PointIndex::new(&cloud.points);
    let neighbors: Vec<Vec<usize>> = cloud
        .points
        .iter()
        .map(|p| index.knn(p, k + 1).into_iter().map(|(i, _)| i).collect())
        .collect();

    let mut normals = vec![Vector3::zeros(); n];
    let mut valid = vec![true; n];
    for i in 0..n {
        match pca_normal(cloud, &neighbors[i]) {
            Some(v) => normals[i] = v,
            None => valid[i] = false,
        }
    }
    let degenerate: Vec<usize> = (0..n).filter(|&i| !valid[i]).collect();
    if degenerate.len() == n {
        return Ok((
            PointCloud::with_normals(cloud.points.clone(), vec![Vector3::z(); n]),
            degenerate,
        ));
    }
    for &i in &degenerate {
        let donor = neighbors[i].iter().copied().find(|&j| valid[j]).or_else(|| {
            // Fall back to the globally nearest valid point.
            (0..n)
                .filter(|&j| valid[j])
                .min_by(|&a, &b| {
                    let da = (cloud.points[a] - cloud.points[i]).norm_squared();
                    let db = (cloud.points[b] - cloud.points[i]).norm_squared();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
        });
        normals[i] = normals[donor.unwrap()];
    }

    match &cloud.normals {
        Some(hints) => {
            for (n, h) in normals.iter_mut().zip(hints) {
                if n.dot(h) < 0.0 {
                    *n = -*n;
                }
            }
        }
        None => orient_by_propagation(cloud, &neighbors, &mut normals),
    }
    Ok((PointCloud::with_normals(cloud.points.clone(), normals), degenerate))
}

fn pca_normal(cloud: &PointCloud, nbrs: &[usize]) -> Option<Vector3<f64>> {
    let m = nbrs.len() as f64;
    let mean = nbrs.iter().map(|&j| cloud.points[j].coords).sum::<Vector3<f64>>() / m;
    let mut cov = Matrix3::zeros();
    for &j in nbrs {
        let d = cloud.points[j].coords - mean;
        cov += d * d.transpose();
    }
    cov /= m;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if largest <= 0.0 || middle <= RANK_TOLERANCE * largest {
        return None;
    }
    let v: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    Some(v.normalize())
}

#[derive(PartialEq)]
struct Edge(f64, usize, usize);

impl Eq for Edge {}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Edge {
    // Min-heap on cost, ties by target index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.2.cmp(&self.2))
    }
}

/// Minimum-spanning-tree propagation with cost `1 - |n_i · n_j|`.
fn orient_by_propagation(cloud: &PointCloud, neighbors: &[Vec<usize>], normals: &mut [Vector3<f64>]) {
    let n = cloud.len();
    // Symmetrize the k-NN graph.
    let mut adj: Vec<Vec<usize>> = neighbors.to_vec();
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            if j != i && !neighbors[j].contains(&i) {
                adj[j].push(i);
            }
        }
    }
    let mut visited = vec![false; n];
    // Seed each graph component at its highest point.
    while let Some(seed) = (0..n)
        .filter(|&i| !visited[i])
        .max_by(|&a, &b| cloud.points[a].z.total_cmp(&cloud.points[b].z).then(b.cmp(&a)))
    {
        if normals[seed].z < 0.0 {
            normals[seed] = -normals[seed];
        }
        visited[seed] = true;
        let mut heap = BinaryHeap::new();
        for &j in &adj[seed] {
            heap.push(Edge(1.0 - normals[seed].dot(&normals[j]).abs(), seed, j));
        }
        while let Some(Edge(_, from, to)) = heap.pop() {
            if visited[to] {
                continue;
            }
            visited[to] = true;
            if normals[from].dot(&normals[to]) < 0.0 {
                normals[to] = -normals[to];
            }
            for &j in &adj[to] {
                if !visited[j] {
                    heap.push(Edge(1.0 - normals[to].dot(&normals[j]).abs(), to, j));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plane_normals_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..400)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0))
            .collect();
        let out = estimate_normals(&PointCloud::new(pts), 10).unwrap();
        let ns = out.normals.unwrap();
        let sign = ns[0].z.signum();
        for n in &ns {
            assert!((n - Vector3::z() * sign).norm() < 1e-6, "{n:?}");
        }
    }

    #[test]
    fn sphere_normals_are_radial_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let center = Point3::new(1.0, -2.0, 3.0);
        let pts: Vec<_> = (0..3000)
            .map(|_| {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                center + v.normalize() * 10.0
            })
            .collect();
        let out = estimate_normals(&PointCloud::new(pts.clone()), 12).unwrap();
        let ns = out.normals.unwrap();
        let dots: Vec<f64> = pts
            .iter()
            .zip(&ns)
            .map(|(p, n)| n.dot(&(p - center).normalize()))
            .collect();
        let sign = dots[0].signum();
        for d in dots {
            assert!((d - sign).abs() < 1e-2, "dot {d}");
        }
        // Propagation starts at the top point facing +z, so the result is outward.
        assert_eq!(sign, 1.0);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(2.0, 2.0, 2.0),
        ];
        let err = estimate_normals(&PointCloud::new(pts), 2).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateNeighborhood { .. }));
    }

    #[test]
    fn hints_control_orientation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..200)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let hints = vec![-Vector3::z(); pts.len()];
        let out = estimate_normals(&PointCloud::with_normals(pts, hints), 8).unwrap();
        assert!(out.normals.unwrap().iter().all(|n| n.z < -0.999));
    }
}
