//! Dense grid evaluation of an implicit field and marching-cubes extraction.
//!
//! The 256-case triangle table is generated at first use by walking the
//! sign pattern on each cube face. Ambiguous faces always separate the
//! negative corners, and neighbouring cells see the same face pattern, so
//! extracted surfaces are closed wherever the level set stays inside the grid.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::geometry::{Aabb, TriMesh};
use crate::implicit::{LatentCode, LatentField, NormalizationInfo, SdfNetwork};

pub const DEFAULT_RESOLUTION: usize = 192;
pub const DEFAULT_BOUND: f64 = 1.05;
/// Field values exactly at the iso level are moved this far to the positive side.
pub const ZERO_NUDGE: f64 = 1e-12;
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractionError {
    #[error("the field has no level-set crossing inside the grid")]
    EmptySurface,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Anything that can be evaluated at a batch of points.
pub trait ScalarField: Sync {
    fn evaluate(&self, points: &[Point3<f64>]) -> Vec<f64>;
}

/// Adapts a closure `Fn(&Point3) -> f64` into a [`ScalarField`].
pub struct FnField<F>(pub F);

impl<F: Fn(&Point3<f64>) -> f64 + Sync> ScalarField for FnField<F> {
    fn evaluate(&self, points: &[Point3<f64>]) -> Vec<f64> {
        points.iter().map(&self.0).collect()
    }
}

impl ScalarField for LatentField<'_> {
    fn evaluate(&self, points: &[Point3<f64>]) -> Vec<f64> {
        self.evaluate_points(points)
    }
}

/// Field samples on a regular lattice, x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(resolution: [usize; 3], bounds: Aabb) -> Result<Self, ExtractionError> {
        if resolution.iter().any(|&r| r < 2) {
            return Err(ExtractionError::InvalidGrid("resolution must be >= 2 per axis".into()));
        }
        if (0..3).any(|a| !(bounds.min[a] < bounds.max[a]) || !bounds.min[a].is_finite() || !bounds.max[a].is_finite()) {
            return Err(ExtractionError::InvalidGrid("bounds must be finite with min < max".into()));
        }
        let n = resolution.iter().product();
        Ok(Self {
            resolution,
            bounds,
            values: vec![0.0; n],
        })
    }

    /// Default bounds `[-1.05, 1.05]³`.
    pub fn default_bounds() -> Aabb {
        Aabb::new(
            Point3::new(-DEFAULT_BOUND, -DEFAULT_BOUND, -DEFAULT_BOUND),
            Point3::new(DEFAULT_BOUND, DEFAULT_BOUND, DEFAULT_BOUND),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let t = i as f64 / (self.resolution[axis] - 1) as f64;
        self.bounds.min[axis] * (1.0 - t) + self.bounds.max[axis] * t
    }

    /// Lattice point; the first and last index land exactly on the bounds.
    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        Point3::new(self.axis_coord(0, i), self.axis_coord(1, j), self.axis_coord(2, k))
    }

    pub fn spacing(&self) -> Vector3<f64> {
        let e = self.bounds.extent();
        Vector3::new(
            e.x / (self.resolution[0] - 1) as f64,
            e.y / (self.resolution[1] - 1) as f64,
            e.z / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }
}

fn evaluate_indices(field: &dyn ScalarField, grid: &ScalarGrid, indices: &[usize]) -> Vec<f64> {
    indices
        .par_chunks(EVAL_CHUNK)
        .flat_map_iter(|chunk| {
            let pts: Vec<Point3<f64>> = chunk
                .iter()
                .map(|&idx| {
                    let [i, j, k] = grid.coords(idx);
                    grid.point(i, j, k)
                })
                .collect();
            field.evaluate(&pts)
        })
        .collect()
}

/// Evaluates `field` at every lattice point.
pub fn evaluate_grid(
    field: &dyn ScalarField,
    resolution: [usize; 3],
    bounds: Aabb,
) -> Result<ScalarGrid, ExtractionError> {
    let mut grid = ScalarGrid::new(resolution, bounds)?;
    let all: Vec<usize> = (0..grid.len()).collect();
    grid.values = evaluate_indices(field, &grid, &all);
    Ok(grid)
}

/// Coarse-to-fine evaluation that only resolves cells near the level set.
///
/// Starting from a lattice of stride `coarse_stride`, a cell is subdivided when
/// its corners change sign or any corner lies within `lipschitz × diagonal`
/// of `iso`. Points in cells that are never subdivided receive the trilinear
/// interpolation of that cell's corners, which keeps their sign. For a field
/// whose gradient norm stays below `lipschitz`, marching cubes on the result
/// is identical to marching cubes on [`evaluate_grid`].
pub fn evaluate_grid_adaptive(
    field: &dyn ScalarField,
    resolution: [usize; 3],
    bounds: Aabb,
    iso: f64,
    coarse_stride: usize,
    lipschitz: f64,
) -> Result<ScalarGrid, ExtractionError> {
    if !coarse_stride.is_power_of_two() {
        return Err(ExtractionError::InvalidGrid("coarse stride must be a power of two".into()));
    }
    let mut grid = ScalarGrid::new(resolution, bounds)?;
    let n = grid.len();
    let mut known = vec![false; n];
    grid.values.iter_mut().for_each(|v| *v = f64::NAN);
    let spacing = grid.spacing();

    // Cells are (lower corner, upper corner) in lattice coordinates.
    let axis_marks = |axis: usize| -> Vec<usize> {
        let last = resolution[axis] - 1;
        let mut m: Vec<usize> = (0..=last).step_by(coarse_stride).collect();
        if *m.last().unwrap() != last {
            m.push(last);
        }
        m
    };
    let (mx, my, mz) = (axis_marks(0), axis_marks(1), axis_marks(2));
    let mut cells: Vec<([usize; 3], [usize; 3])> = Vec::new();
    for c in 0..mz.len() - 1 {
        for b in 0..my.len() - 1 {
            for a in 0..mx.len() - 1 {
                cells.push(([mx[a], my[b], mz[c]], [mx[a + 1], my[b + 1], mz[c + 1]]));
            }
        }
    }
    let mut pending: Vec<usize> = Vec::new();
    for &k in &mz {
        for &j in &my {
            for &i in &mx {
                pending.push(grid.index(i, j, k));
            }
        }
    }
    let mut unresolved: Vec<([usize; 3], [usize; 3])> = Vec::new();

    loop {
        pending.sort_unstable();
        pending.dedup();
        pending.retain(|&idx| !known[idx]);
        let vals = evaluate_indices(field, &grid, &pending);
        for (&idx, v) in pending.iter().zip(vals) {
            grid.values[idx] = v;
            known[idx] = true;
        }
        pending.clear();

        let mut next = Vec::new();
        for (lo, hi) in cells.drain(..) {
            if (0..3).all(|a| hi[a] - lo[a] <= 1) {
                continue;
            }
            let corners = cell_corners(lo, hi);
            let vals: Vec<f64> = corners.iter().map(|c| grid.value(c[0], c[1], c[2]) - iso).collect();
            let diag = Vector3::new(
                (hi[0] - lo[0]) as f64 * spacing.x,
                (hi[1] - lo[1]) as f64 * spacing.y,
                (hi[2] - lo[2]) as f64 * spacing.z,
            )
            .norm();
            let any_neg = vals.iter().any(|&v| v < 0.0);
            let any_pos = vals.iter().any(|&v| v >= 0.0);
            let near = vals.iter().any(|v| v.abs() <= lipschitz * diag);
            if !(near || (any_neg && any_pos)) {
                unresolved.push((lo, hi));
                continue;
            }
            let split = |axis: usize| -> Vec<usize> {
                let (a, b) = (lo[axis], hi[axis]);
                if b - a <= 1 {
                    vec![a, b]
                } else {
                    vec![a, (a + b) / 2, b]
                }
            };
            let (sx, sy, sz) = (split(0), split(1), split(2));
            for &k in &sz {
                for &j in &sy {
                    for &i in &sx {
                        pending.push(grid.index(i, j, k));
                    }
                }
            }
            for c in 0..sz.len() - 1 {
                for b in 0..sy.len() - 1 {
                    for a in 0..sx.len() - 1 {
                        next.push(([sx[a], sy[b], sz[c]], [sx[a + 1], sy[b + 1], sz[c + 1]]));
                    }
                }
            }
        }
        if next.is_empty() && pending.is_empty() {
            break;
        }
        cells = next;
    }

    for (lo, hi) in unresolved {
        let c: Vec<f64> = cell_corners(lo, hi)
            .iter()
            .map(|p| grid.value(p[0], p[1], p[2]))
            .collect();
        for k in lo[2]..=hi[2] {
            let w = (k - lo[2]) as f64 / (hi[2] - lo[2]) as f64;
            for j in lo[1]..=hi[1] {
                let v = (j - lo[1]) as f64 / (hi[1] - lo[1]) as f64;
                for i in lo[0]..=hi[0] {
                    let idx = grid.index(i, j, k);
                    if known[idx] {
                        continue;
                    }
                    let u = (i - lo[0]) as f64 / (hi[0] - lo[0]) as f64;
                    let x00 = c[0] * (1.0 - u) + c[1] * u;
                    let x10 = c[2] * (1.0 - u) + c[3] * u;
                    let x01 = c[4] * (1.0 - u) + c[5] * u;
                    let x11 = c[6] * (1.0 - u) + c[7] * u;
                    let y0 = x00 * (1.0 - v) + x10 * v;
                    let y1 = x01 * (1.0 - v) + x11 * v;
                    grid.values[idx] = y0 * (1.0 - w) + y1 * w;
                    known[idx] = true;
                }
            }
        }
    }
    debug_assert!(known.iter().all(|&k| k));
    Ok(grid)
}

/// Corners in the bit order used by the case table: bit 0 = x, bit 1 = y, bit 2 = z.
fn cell_corners(lo: [usize; 3], hi: [usize; 3]) -> [[usize; 3]; 8] {
    let mut out = [[0; 3]; 8];
    for (c, o) in out.iter_mut().enumerate() {
        for a in 0..3 {
            o[a] = if c >> a & 1 == 1 { hi[a] } else { lo[a] };
        }
    }
    out
}

/// Cube edges as corner pairs, lower corner first.
const EDGES: [(u8, u8); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7), // x
    (0, 2), (1, 3), (4, 6), (5, 7), // y
    (0, 4), (1, 5), (2, 6), (3, 7), // z
];

fn edge_between(a: u8, b: u8) -> u8 {
    let (a, b) = (a.min(b), a.max(b));
    EDGES.iter().position(|&e| e == (a, b)).unwrap() as u8
}

fn corner_pos(c: u8) -> Vector3<f64> {
    Vector3::new((c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64)
}

/// Triangles (as edge triples) for each of the 256 sign configurations.
/// Bit `c` of the case index is set when corner `c` is negative.
pub fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|case| triangulate_case(case as u8)))
}

fn triangulate_case(case: u8) -> Vec<[u8; 3]> {
    let neg = |c: u8| case >> c & 1 == 1;
    let mut next_edge: [Option<u8>; 12] = [None; 12];
    for axis in 0..3u8 {
        let (b, c) = match axis {
            0 => (1u8, 2u8),
            1 => (0, 2),
            _ => (0, 1),
        };
        for side in 0..2u8 {
            let mut normal = Vector3::zeros();
            normal[axis as usize] = if side == 1 { 1.0 } else { -1.0 };
            let base = side << axis;
            let cyc: [u8; 4] = [
                base,
                base | 1 << b,
                base | 1 << b | 1 << c,
                base | 1 << c,
            ];
            let face_edge = |k: usize| edge_between(cyc[k], cyc[(k + 1) % 4]);
            let crossing: Vec<usize> = (0..4).filter(|&k| neg(cyc[k]) != neg(cyc[(k + 1) % 4])).collect();
            let mut segments: Vec<(u8, u8, Vector3<f64>)> = Vec::new();
            match crossing.len() {
                0 => {}
                2 => {
                    let (pos, negs): (Vec<u8>, Vec<u8>) = cyc.iter().partition(|&&c| !neg(c));
                    let mean = |v: &[u8]| v.iter().map(|&c| corner_pos(c)).sum::<Vector3<f64>>() / v.len() as f64;
                    let toward_pos = mean(&pos) - mean(&negs);
                    segments.push((face_edge(crossing[0]), face_edge(crossing[1]), toward_pos));
                }
                4 => {
                    for (k, &c) in cyc.iter().enumerate() {
                        if neg(c) {
                            let e_in = face_edge((k + 3) % 4);
                            let e_out = face_edge(k);
                            let mid = (edge_mid(e_in) + edge_mid(e_out)) * 0.5;
                            segments.push((e_in, e_out, mid - corner_pos(c)));
                        }
                    }
                }
                _ => unreachable!("a face has an even number of sign changes"),
            }
            for (e1, e2, toward_pos) in segments {
                let d = edge_mid(e2) - edge_mid(e1);
                let (from, to) = if normal.cross(&d).dot(&toward_pos) > 0.0 {
                    (e1, e2)
                } else {
                    (e2, e1)
                };
                debug_assert!(next_edge[from as usize].is_none());
                next_edge[from as usize] = Some(to);
            }
        }
    }

    let mut used = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12u8 {
        if used[start as usize] || next_edge[start as usize].is_none() {
            continue;
        }
        let mut lp = vec![start];
        used[start as usize] = true;
        let mut e = next_edge[start as usize].unwrap();
        while e != start {
            used[e as usize] = true;
            lp.push(e);
            e = next_edge[e as usize].expect("face segments form closed loops");
        }
        for w in 1..lp.len() - 1 {
            tris.push([lp[0], lp[w], lp[w + 1]]);
        }
    }
    tris
}

fn edge_mid(e: u8) -> Vector3<f64> {
    let (a, b) = EDGES[e as usize];
    (corner_pos(a) + corner_pos(b)) * 0.5
}

/// Marching cubes on `grid` at level `iso`. Triangles face the positive side;
/// vertices on shared lattice edges are welded.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> TriMesh {
    let table = case_table();
    let [nx, ny, nz] = grid.resolution;
    let value = |idx: usize| {
        let v = grid.values[idx] - iso;
        if v == 0.0 {
            ZERO_NUDGE
        } else {
            v
        }
    };
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Key: (lattice index of the lower endpoint, axis).
    let mut welded: HashMap<(usize, u8), u32> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corners = cell_corners([i, j, k], [i + 1, j + 1, k + 1]);
                let mut vals = [0.0; 8];
                let mut case = 0u8;
                for (c, p) in corners.iter().enumerate() {
                    vals[c] = value(grid.index(p[0], p[1], p[2]));
                    if vals[c] < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for tri in &table[case as usize] {
                    let mut ids = [0u32; 3];
                    for (slot, &e) in ids.iter_mut().zip(tri) {
                        let (a, b) = EDGES[e as usize];
                        let pa = corners[a as usize];
                        let axis = (a ^ b).trailing_zeros() as u8;
                        let key = (grid.index(pa[0], pa[1], pa[2]), axis);
                        *slot = *welded.entry(key).or_insert_with(|| {
                            let pb = corners[b as usize];
                            let p0 = grid.point(pa[0], pa[1], pa[2]);
                            let p1 = grid.point(pb[0], pb[1], pb[2]);
                            let (va, vb) = (vals[a as usize], vals[b as usize]);
                            let t = va / (va - vb);
                            vertices.push(p0 + (p1 - p0) * t);
                            (vertices.len() - 1) as u32
                        });
                    }
                    triangles.push(ids);
                }
            }
        }
    }
    TriMesh {
        vertices,
        triangles,
        normals: None,
        colors: None,
    }
}

/// Extracts the zero level set of any field and maps it back to millimetres.
pub fn reconstruct_field(
    field: &dyn ScalarField,
    info: &NormalizationInfo,
    resolution: usize,
) -> Result<TriMesh, ExtractionError> {
    let grid = evaluate_grid_adaptive(
        field,
        [resolution; 3],
        ScalarGrid::default_bounds(),
        0.0,
        8,
        1.5,
    )?;
    let mesh = marching_cubes(&grid, 0.0);
    if mesh.triangles.is_empty() {
        return Err(ExtractionError::EmptySurface);
    }
    Ok(info.denormalize_mesh(&mesh))
}

/// Surface of `net` at latent `z`, in millimetres.
pub fn reconstruct(
    net: &SdfNetwork,
    z: &LatentCode,
    info: &NormalizationInfo,
    resolution: usize,
) -> Result<TriMesh, ExtractionError> {
    reconstruct_field(&LatentField::new(net, z), info, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere(r: f64) -> FnField<impl Fn(&Point3<f64>) -> f64 + Sync> {
        FnField(move |p: &Point3<f64>| p.coords.norm() - r)
    }

    #[test]
    fn every_case_closes_into_loops() {
        let table = case_table();
        assert!(table[0].is_empty() && table[255].is_empty());
        for (case, tris) in table.iter().enumerate() {
            let crossing = EDGES
                .iter()
                .filter(|&&(a, b)| (case >> a & 1) != (case >> b & 1))
                .count();
            // A loop of m edges gives m - 2 triangles; every crossing edge is used.
            let mut used: Vec<u8> = tris.iter().flatten().copied().collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used.len(), crossing, "case {case}");
        }
        // Single negative corner: one triangle.
        assert_eq!(table[1].len(), 1);
        // Complement cases have the same edge sets.
        for case in 0..256usize {
            let mut a: Vec<u8> = table[case].iter().flatten().copied().collect();
            let mut b: Vec<u8> = table[255 - case].iter().flatten().copied().collect();
            a.sort_unstable();
            a.dedup();
            b.sort_unstable();
            b.dedup();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corner_grid_holds_bound_values() {
        let b = Aabb::new(Point3::new(-1.0, -2.0, -3.0), Point3::new(1.5, 2.5, 3.5));
        let g = evaluate_grid(&FnField(|p: &Point3<f64>| p.x + 10.0 * p.y + 100.0 * p.z), [2, 2, 2], b).unwrap();
        for c in 0..8usize {
            let p = Point3::new(
                if c & 1 == 1 { 1.5 } else { -1.0 },
                if c & 2 == 2 { 2.5 } else { -2.0 },
                if c & 4 == 4 { 3.5 } else { -3.0 },
            );
            assert_eq!(g.values[c], p.x + 10.0 * p.y + 100.0 * p.z);
        }
    }

    #[test]
    fn constant_field_gives_empty_mesh() {
        let g = evaluate_grid(&FnField(|_: &Point3<f64>| 0.25), [8, 8, 8], ScalarGrid::default_bounds()).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.25));
        assert!(marching_cubes(&g, 0.0).triangles.is_empty());
    }

    #[test]
    fn analytic_field_values_are_exact() {
        let g = evaluate_grid(&sphere(0.5), [17, 17, 17], ScalarGrid::default_bounds()).unwrap();
        for (idx, &v) in g.values.iter().enumerate() {
            let [i, j, k] = g.coords(idx);
            assert!((v - (g.point(i, j, k).coords.norm() - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_field_vertices_lie_on_plane() {
        let n = Vector3::new(0.3, -0.5, 0.8).normalize();
        let f = move |p: &Point3<f64>| n.dot(&p.coords) - 0.1;
        let g = evaluate_grid(&FnField(f), [20, 23, 19], ScalarGrid::default_bounds()).unwrap();
        let m = marching_cubes(&g, 0.0);
        assert!(!m.triangles.is_empty());
        for v in &m.vertices {
            assert!(f(v).abs() < 1e-9);
        }
        for t in 0..m.triangle_count() {
            if let Some(tn) = m.triangle_normal(t) {
                assert!(tn.dot(&n) > 0.0);
            }
        }
    }

    #[test]
    fn sphere_is_closed_and_outward() {
        let g = evaluate_grid(&sphere(0.5), [40, 40, 40], ScalarGrid::default_bounds()).unwrap();
        let m = marching_cubes(&g, 0.0);
        assert_eq!(m.boundary_edge_count(), 0);
        assert!(m.signed_volume() > 0.0);
        let vol = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((m.signed_volume() - vol).abs() / vol < 0.02);
        // Vertices are shared, not duplicated per cell.
        assert!(m.vertices.len() < m.triangles.len());
    }

    #[test]
    fn negated_field_flips_orientation() {
        let g = evaluate_grid(&sphere(0.4), [25, 25, 25], ScalarGrid::default_bounds()).unwrap();
        let mut neg = g.clone();
        neg.values.iter_mut().for_each(|v| *v = -*v);
        let a = marching_cubes(&g, 0.0);
        let b = marching_cubes(&neg, 0.0);
        assert_eq!(a.triangles.len(), b.triangles.len());
        assert!((a.signed_volume() + b.signed_volume()).abs() < 1e-9);
        let key = |m: &TriMesh, t: &[u32; 3]| {
            let mut c: Vec<[u64; 3]> = t
                .iter()
                .map(|&i| {
                    let p = m.vertices[i as usize];
                    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
                })
                .collect();
            c.sort();
            c
        };
        let mut ka: Vec<_> = a.triangles.iter().map(|t| key(&a, t)).collect();
        let mut kb: Vec<_> = b.triangles.iter().map(|t| key(&b, t)).collect();
        ka.sort();
        kb.sort();
        assert_eq!(ka, kb);
    }

    #[test]
    fn random_fields_extract_closed_surfaces() {
        // Noise interior with a positive shell exercises every ambiguous face.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let bounds = ScalarGrid::default_bounds();
            let mut g = ScalarGrid::new([12, 12, 12], bounds).unwrap();
            for idx in 0..g.len() {
                let [i, j, k] = g.coords(idx);
                let border = [i, j, k].iter().any(|&c| c == 0 || c == 11);
                g.values[idx] = if border { 1.0 } else { rng.random_range(-1.0..1.0) };
            }
            let m = marching_cubes(&g, 0.0);
            assert_eq!(m.boundary_edge_count(), 0);
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn exact_zero_values_are_nudged() {
        let mut g = ScalarGrid::new([3, 3, 3], ScalarGrid::default_bounds()).unwrap();
        g.values.iter_mut().for_each(|v| *v = 0.0);
        g.values[13] = -1.0;
        let m = marching_cubes(&g, 0.0);
        assert!(!m.triangles.is_empty());
        assert_eq!(m.boundary_edge_count(), 0);
    }

    #[test]
    fn adaptive_grid_matches_dense_extraction() {
        let fields: Vec<Box<dyn ScalarField>> = vec![
            Box::new(sphere(0.5)),
            Box::new(FnField(|p: &Point3<f64>| {
                let a = (p - Point3::new(0.3, 0.0, 0.1)).norm() - 0.35;
                let b = (p - Point3::new(-0.3, 0.1, 0.0)).norm() - 0.3;
                a.min(b)
            })),
        ];
        for f in &fields {
            for res in [33, 50] {
                let dense = evaluate_grid(f.as_ref(), [res; 3], ScalarGrid::default_bounds()).unwrap();
                let sparse = evaluate_grid_adaptive(f.as_ref(), [res; 3], ScalarGrid::default_bounds(), 0.0, 8, 1.0).unwrap();
                let a = marching_cubes(&dense, 0.0);
                let b = marching_cubes(&sparse, 0.0);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(ScalarGrid::new([1, 4, 4], ScalarGrid::default_bounds()).is_err());
        let flat = Aabb::new(Point3::origin(), Point3::new(1.0, 0.0, 1.0));
        assert!(ScalarGrid::new([4, 4, 4], flat).is_err());
    }
}
