use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};

use super::PointCloud;

/// One point per occupied voxel: the centroid of its members. Normals are
/// averaged and renormalized. Output is ordered by voxel key.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> PointCloud {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut cells: BTreeMap<[i64; 3], (Vector3<f64>, Vector3<f64>, usize)> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let n = cloud
            .normals
            .as_ref()
            .map_or_else(Vector3::zeros, |ns| ns[i]);
        let e = cells.entry(key).or_insert((Vector3::zeros(), Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += n;
        e.2 += 1;
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut normals = Vec::with_capacity(cells.len());
    for (sum, nsum, count) in cells.into_values() {
        points.push(Point3::from(sum / count as f64));
        let len = nsum.norm();
        normals.push(if len > 1e-12 { nsum / len } else { Vector3::z() });
    }
    PointCloud {
        points,
        normals: cloud.normals.as_ref().map(|_| normals),
    }
}
