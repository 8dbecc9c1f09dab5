//! Closed reference shapes.

use std::collections::HashMap;

use nalgebra::Point3;

use super::TriMesh;

/// Subdivided icosahedron projected onto a sphere of `radius` about the origin.
/// Level `l` has `20 · 4^l` outward-facing triangles.
pub fn icosphere(radius: f64, level: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::new(x, y, z))
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let mut m = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    let p = Point3::from((verts[a as usize].coords + verts[b as usize].coords) * 0.5);
                    verts.push(p);
                    (verts.len() - 1) as u32
                });
            }
            next.push([t[0], m[0], m[2]]);
            next.push([t[1], m[1], m[0]]);
            next.push([t[2], m[2], m[1]]);
            next.push(m);
        }
        tris = next;
    }
    for v in verts.iter_mut() {
        *v = Point3::from(v.coords.normalize() * radius);
    }
    TriMesh {
        vertices: verts,
        triangles: tris,
        normals: None,
        colors: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        for level in 0..4 {
            let m = icosphere(2.0, level);
            assert_eq!(m.triangle_count(), 20 * 4usize.pow(level as u32));
            assert!(m.is_watertight());
            assert!(m.signed_volume() > 0.0);
            assert!(m.vertices.iter().all(|v| (v.coords.norm() - 2.0).abs() < 1e-12));
        }
    }
}
