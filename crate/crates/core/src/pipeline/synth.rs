//! Procedural tooth family standing in for segmented scans.
//!
//! A tooth is the zero level set of a blend of a superellipsoid crown, four
//! cusps of unequal height and one or two tapered roots. The crown scan is
//! the part above a horizontal cut plane; the full scan is a decimated,
//! noisy copy placed in a different frame.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::extraction::{evaluate_grid, marching_cubes, FnField, ScalarGrid};
use crate::geometry::{Aabb, RigidTransform, TriMesh, Transformable};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticToothSpec {
    /// Crown semi-axes along x, y, z (mm).
    pub crown_axes: [f64; 3],
    /// Horizontal and vertical superellipsoid exponents.
    pub crown_exponents: [f64; 2],
    /// Cusp sphere radius (mm).
    pub cusp_radius: f64,
    /// How far each of the four cusps rises above the crown (mm).
    pub cusp_heights: [f64; 4],
    pub root_count: usize,
    /// Root length below the crown (mm).
    pub root_length: f64,
    /// Root radius where it meets the crown (mm).
    pub root_radius: f64,
    /// Apex radius as a fraction of `root_radius`.
    pub root_taper: f64,
    /// Distance between root axes when there are two roots (mm).
    pub root_spread: f64,
    /// Gingival cut plane height as a fraction of the crown z semi-axis.
    pub cut_fraction: f64,
    /// Marching cubes grid spacing (mm).
    pub spacing: f64,
    /// Fraction of triangles kept in the full scan; 1 disables decimation.
    pub decimation: f64,
    /// Gaussian blur of the field (mm) before the full scan is meshed, like
    /// the partial-volume smoothing of a CT scan. 0 disables it.
    pub blur: f64,
    /// Per-coordinate Gaussian vertex noise on the full scan (mm).
    pub noise_sigma: f64,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    pub seed: u64,
}

impl Default for SyntheticToothSpec {
    fn default() -> Self {
        Self {
            crown_axes: [5.0, 4.5, 3.4],
            crown_exponents: [2.6, 2.4],
            cusp_radius: 1.9,
            cusp_heights: [1.1, 0.9, 0.7, 0.5],
            root_count: 2,
            root_length: 12.0,
            root_radius: 2.3,
            root_taper: 0.4,
            root_spread: 3.0,
            cut_fraction: -0.35,
            spacing: 0.2,
            decimation: 0.3,
            blur: 0.3,
            noise_sigma: 0.1,
            max_rotation_deg: 30.0,
            max_translation: 10.0,
            seed: 0,
        }
    }
}

/// Degradation and pose settings shared by a whole family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSettings {
    pub spacing: f64,
    pub decimation: f64,
    /// Gaussian blur (mm) applied to the field before meshing the full tooth.
    pub blur: f64,
    pub noise_sigma: f64,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let d = SyntheticToothSpec::default();
        Self {
            spacing: d.spacing,
            decimation: d.decimation,
            blur: d.blur,
            noise_sigma: d.noise_sigma,
            max_rotation_deg: d.max_rotation_deg,
            max_translation: d.max_translation,
        }
    }
}

/// Narrowing of the crown on its negative-x side.
const LINGUAL_RATIO: f64 = 0.85;
/// Cusp positions around the occlusal surface, tallest first.
const CUSP_ANGLES_DEG: [f64; 4] = [35.0, 140.0, 220.0, 310.0];

/// Seeds at or above this value are reserved for training shapes.
pub const TRAINING_SEED_BASE: u64 = 1_000_000;

impl SyntheticToothSpec {
    /// Family member drawn from `seed`.
    pub fn from_seed(seed: u64, settings: &SynthSettings) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let crown_axes = [u(4.5, 5.5), u(4.0, 5.0), u(3.0, 3.8)];
        let crown_exponents = [u(2.2, 3.0), u(2.1, 2.7)];
        let cusp_radius = u(1.6, 2.1);
        let top = u(0.9, 1.3);
        let cusp_heights = [top, top * u(0.75, 0.9), top * u(0.55, 0.7), top * u(0.35, 0.5)];
        let root_count = if u(0.0, 1.0) < 0.5 { 1 } else { 2 };
        let root_length = u(10.0, 14.0);
        let root_radius = u(2.0, 2.6);
        let root_taper = u(0.3, 0.5);
        let root_spread = u(2.6, 3.4);
        Self {
            crown_axes,
            crown_exponents,
            cusp_radius,
            cusp_heights,
            root_count,
            root_length,
            root_radius,
            root_taper,
            root_spread,
            cut_fraction: SyntheticToothSpec::default().cut_fraction,
            spacing: settings.spacing,
            decimation: settings.decimation,
            blur: settings.blur,
            noise_sigma: settings.noise_sigma,
            max_rotation_deg: settings.max_rotation_deg,
            max_translation: settings.max_translation,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = self.crown_axes.iter().chain(&self.crown_exponents).all(|&v| v > 0.0)
            && self.cusp_radius > 0.0
            && self.root_length > 0.0
            && self.root_radius > 0.0
            && self.root_taper > 0.0
            && self.spacing > 0.0
            && self.decimation > 0.0
            && self.blur >= 0.0;
        if !positive {
            return Err("tooth dimensions must be positive".into());
        }
        if !(1..=2).contains(&self.root_count) {
            return Err(format!("root count must be 1 or 2, got {}", self.root_count));
        }
        if !(self.noise_sigma >= 0.0 && self.max_rotation_deg >= 0.0 && self.max_translation >= 0.0) {
            return Err("noise and perturbation ranges must be non-negative".into());
        }
        Ok(())
    }

    /// Height of the gingival cut plane (mm).
    pub fn cut_height(&self) -> f64 {
        self.cut_fraction * self.crown_axes[2]
    }

    /// Crown x semi-axis on the side of `x`; the negative side is narrower.
    fn x_axis(&self, x: f64) -> f64 {
        if x < 0.0 {
            LINGUAL_RATIO * self.crown_axes[0]
        } else {
            self.crown_axes[0]
        }
    }

    fn crown_top(&self, x: f64, y: f64) -> f64 {
        let [_, b, c] = self.crown_axes;
        let [p, q] = self.crown_exponents;
        let s = ((x / self.x_axis(x)).abs().powf(p) + (y / b).abs().powf(p)).powf(q / p);
        c * (1.0 - s).max(0.0).powf(1.0 / q)
    }

    /// Approximate signed distance of the tooth, in millimetres.
    pub fn field(&self) -> impl Fn(&Point3<f64>) -> f64 + Sync + '_ {
        let [a, b, c] = self.crown_axes;
        let [p, q] = self.crown_exponents;
        let min_axis = a.min(b).min(c);
        let cusps: Vec<Point3<f64>> = CUSP_ANGLES_DEG
            .iter()
            .enumerate()
            .map(|(i, deg)| {
                let angle = deg.to_radians();
                let (x, y) = (0.55 * self.x_axis(angle.cos()) * angle.cos(), 0.55 * b * angle.sin());
                Point3::new(x, y, self.crown_top(x, y) + self.cusp_heights[i] - self.cusp_radius)
            })
            .collect();
        let roots: Vec<(Point3<f64>, Point3<f64>, f64)> = match self.root_count {
            1 => {
                let r = self.root_radius * 1.3;
                vec![(Point3::origin(), Point3::new(0.0, 0.0, -c - self.root_length), r)]
            }
            _ => [-0.5, 0.5]
                .iter()
                .map(|s| {
                    let x = s * self.root_spread;
                    (
                        Point3::new(x, 0.0, 0.0),
                        Point3::new(1.3 * x, 0.0, -c - self.root_length),
                        self.root_radius,
                    )
                })
                .collect(),
        };
        move |x: &Point3<f64>| {
            let ax = if x.x < 0.0 { LINGUAL_RATIO * a } else { a };
            let s = ((x.x / ax).abs().powf(p) + (x.y / b).abs().powf(p)).powf(q / p) + (x.z / c).abs().powf(q);
            let mut d = (s.powf(1.0 / q) - 1.0) * min_axis;
            for cusp in &cusps {
                d = smooth_min(d, (x - cusp).norm() - self.cusp_radius, 0.8);
            }
            for (top, apex, r) in &roots {
                d = smooth_min(d, round_cone(x, top, apex, *r, r * self.root_taper), 1.5);
            }
            d
        }
    }

    fn grid_bounds(&self) -> Aabb {
        let [a, b, c] = self.crown_axes;
        let xy = a.max(b) + 2.0;
        let top = c + self.cusp_heights.iter().cloned().fold(0.0, f64::max) + 1.5;
        let bottom = -c - self.root_length - 2.0;
        Aabb::new(Point3::new(-xy, -xy, bottom), Point3::new(xy, xy, top))
    }
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

/// Exact distance to a sphere-swept cone between `a` (radius `r1`) and `b` (radius `r2`).
fn round_cone(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, r1: f64, r2: f64) -> f64 {
    let ba = b - a;
    let l2 = ba.norm_squared();
    let rr = r1 - r2;
    let a2 = l2 - rr * rr;
    let il2 = 1.0 / l2;
    let pa = p - a;
    let y = pa.dot(&ba);
    let z = y - l2;
    let x2 = (pa * l2 - ba * y).norm_squared();
    let y2 = y * y * l2;
    let z2 = z * z * l2;
    let k = rr.signum() * rr * rr * x2;
    if z.signum() * a2 * z2 > k {
        return (x2 + z2).sqrt() * il2 - r2;
    }
    if y.signum() * a2 * y2 < k {
        return (x2 + y2).sqrt() * il2 - r1;
    }
    ((x2 * a2 * il2).sqrt() + y * rr) * il2 - r1
}

/// Everything generated for one synthetic tooth.
#[derive(Debug, Clone)]
pub struct SyntheticTooth {
    /// Clean watertight surface in the crown frame.
    pub ground_truth: TriMesh,
    /// Ground-truth triangles entirely above the cut plane.
    pub crown: TriMesh,
    /// Degraded ground truth, moved by `true_transform.inverse()`.
    pub degraded_full: TriMesh,
    /// Maps `degraded_full` back onto the crown frame.
    pub true_transform: RigidTransform,
}

fn field_grid(spec: &SyntheticToothSpec) -> ScalarGrid {
    let bounds = spec.grid_bounds();
    let ext = bounds.extent();
    let res = [0, 1, 2].map(|k| (ext[k] / spec.spacing).ceil() as usize + 1);
    evaluate_grid(&FnField(spec.field()), res, bounds).expect("valid grid")
}

/// Clean surface of the tooth described by `spec`.
pub fn tooth_surface(spec: &SyntheticToothSpec) -> TriMesh {
    marching_cubes(&field_grid(spec), 0.0)
}

/// Separable Gaussian filter of the grid values, `sigma` in grid units of
/// length. Samples past the border repeat the edge value.
pub fn gaussian_blur(grid: &ScalarGrid, sigma: f64) -> ScalarGrid {
    let mut out = grid.clone();
    if !(sigma > 0.0) {
        return out;
    }
    let spacing = grid.spacing();
    let [nx, ny, nz] = grid.resolution;
    let mut tmp = vec![0.0; out.values.len()];
    for axis in 0..3 {
        let s = sigma / spacing[axis];
        let radius = (3.0 * s).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-0.5 * (i as f64 / s).powi(2)).exp()).collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|w| *w /= total);
        let n = grid.resolution[axis] as isize;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = [i, j, k];
                    let mut acc = 0.0;
                    for (t, w) in kernel.iter().enumerate() {
                        let mut q = c;
                        q[axis] = (c[axis] as isize + t as isize - radius).clamp(0, n - 1) as usize;
                        acc += w * out.values[grid.index(q[0], q[1], q[2])];
                    }
                    tmp[grid.index(i, j, k)] = acc;
                }
            }
        }
        std::mem::swap(&mut out.values, &mut tmp);
    }
    out
}

pub fn synth_tooth(spec: &SyntheticToothSpec) -> Result<SyntheticTooth, String> {
    spec.validate()?;
    let ground_truth = tooth_surface(spec);
    let cut = spec.cut_height();
    let above: Vec<usize> = (0..ground_truth.triangle_count())
        .filter(|&t| ground_truth.corners(t).iter().all(|v| v.z > cut))
        .collect();
    let crown = ground_truth.submesh(&above);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xdeca_f00d);
    let scanned = if spec.blur > 0.0 {
        marching_cubes(&gaussian_blur(&field_grid(spec), spec.blur), 0.0)
    } else {
        ground_truth.clone()
    };
    let mut degraded = decimate(&scanned, spec.decimation);
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| e.to_string())?;
        for v in degraded.vertices.iter_mut() {
            *v += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
    }
    let true_transform = random_rigid(&mut rng, spec.max_rotation_deg.to_radians(), spec.max_translation);
    let degraded_full = degraded.transformed(&true_transform.inverse());
    Ok(SyntheticTooth {
        ground_truth,
        crown,
        degraded_full,
        true_transform,
    })
}

/// Uniform random axis, angle uniform in `[0, max_angle]`, translation
/// uniform in direction with length uniform in `[0, max_translation]`.
pub fn random_rigid(rng: &mut impl Rng, max_angle: f64, max_translation: f64) -> RigidTransform {
    if max_angle == 0.0 && max_translation == 0.0 {
        return RigidTransform::identity();
    }
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random::<f64>() * max_angle;
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let len = rng.random::<f64>() * max_translation;
    RigidTransform::from_axis_angle(&Vector3::from(axis), angle, Vector3::from(dir) * len)
}

/// Vertex-clustering decimation targeting `ratio` of the input triangles.
/// Cluster representatives are member means; collapsed and duplicate
/// triangles are dropped. `ratio >= 1` returns the input unchanged.
pub fn decimate(mesh: &TriMesh, ratio: f64) -> TriMesh {
    if ratio >= 1.0 || mesh.triangles.is_empty() {
        return mesh.clone();
    }
    let mut edge_sum = 0.0;
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.corners(t);
        edge_sum += (b - a).norm() + (c - b).norm() + (a - c).norm();
    }
    let mean_edge = edge_sum / (3 * mesh.triangle_count()) as f64;
    let cell = mean_edge / ratio.sqrt();
    let origin = mesh.aabb().unwrap().min;

    let mut cluster_of: HashMap<[i64; 3], u32> = HashMap::new();
    let mut sums: Vec<(Vector3<f64>, usize)> = Vec::new();
    let mut map = Vec::with_capacity(mesh.vertex_count());
    for v in &mesh.vertices {
        let key = [0, 1, 2].map(|k| ((v[k] - origin[k]) / cell).floor() as i64);
        let id = *cluster_of.entry(key).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            (sums.len() - 1) as u32
        });
        sums[id as usize].0 += v.coords;
        sums[id as usize].1 += 1;
        map.push(id);
    }
    let vertices: Vec<Point3<f64>> = sums.iter().map(|(s, n)| Point3::from(s / *n as f64)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut triangles = Vec::new();
    for t in &mesh.triangles {
        let m = t.map(|v| map[v as usize]);
        if m[0] == m[1] || m[1] == m[2] || m[0] == m[2] {
            continue;
        }
        let mut key = m;
        key.sort_unstable();
        if seen.insert(key) {
            triangles.push(m);
        }
    }
    let collapsed = TriMesh {
        vertices,
        triangles,
        normals: None,
        colors: None,
    };
    collapsed.submesh(&(0..collapsed.triangle_count()).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_spec() -> SyntheticToothSpec {
        SyntheticToothSpec {
            decimation: 1.0,
            blur: 0.0,
            noise_sigma: 0.0,
            max_rotation_deg: 0.0,
            max_translation: 0.0,
            spacing: 0.35,
            ..Default::default()
        }
    }

    #[test]
    fn clean_settings_reproduce_ground_truth() {
        let t = synth_tooth(&clean_spec()).unwrap();
        assert_eq!(t.true_transform, RigidTransform::identity());
        assert_eq!(t.degraded_full.triangles, t.ground_truth.triangles);
        for (a, b) in t.degraded_full.vertices.iter().zip(&t.ground_truth.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn ground_truth_is_watertight_and_outward() {
        for seed in [0, 1, 2, TRAINING_SEED_BASE] {
            let spec = SyntheticToothSpec::from_seed(seed, &SynthSettings { spacing: 0.35, ..Default::default() });
            let t = synth_tooth(&spec).unwrap();
            assert_eq!(t.ground_truth.boundary_edge_count(), 0, "seed {seed}");
            assert!(t.ground_truth.signed_volume() > 0.0);
        }
    }

    #[test]
    fn crown_lies_above_the_cut() {
        let spec = clean_spec();
        let t = synth_tooth(&spec).unwrap();
        let cut = spec.cut_height();
        assert!(t.crown.triangle_count() > 0);
        assert!(t.crown.vertices.iter().all(|v| v.z > cut));
        assert!(t.crown.triangle_count() < t.ground_truth.triangle_count());
        let gt: std::collections::HashSet<[u64; 9]> = (0..t.ground_truth.triangle_count())
            .map(|i| key(&t.ground_truth.corners(i)))
            .collect();
        assert!((0..t.crown.triangle_count()).all(|i| gt.contains(&key(&t.crown.corners(i)))));
    }

    fn key(c: &[Point3<f64>; 3]) -> [u64; 9] {
        let mut k = [0u64; 9];
        for (i, p) in c.iter().enumerate() {
            for j in 0..3 {
                k[3 * i + j] = p[j].to_bits();
            }
        }
        k
    }

    #[test]
    fn degradation_is_deterministic_and_recoverable() {
        let spec = SyntheticToothSpec {
            spacing: 0.35,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let a = synth_tooth(&spec).unwrap();
        let b = synth_tooth(&spec).unwrap();
        assert_eq!(a.degraded_full, b.degraded_full);
        assert!(a.degraded_full.triangle_count() < a.ground_truth.triangle_count());
        let (angle, _) = a.true_transform.error_to(&RigidTransform::identity());
        assert!(angle <= spec.max_rotation_deg.to_radians() + 1e-12);
        assert!(a.true_transform.translation.norm() <= spec.max_translation + 1e-12);
        let back = a.degraded_full.transformed(&a.true_transform);
        let d = back.aabb().unwrap();
        let g = a.ground_truth.aabb().unwrap();
        assert!((d.center() - g.center()).norm() < 0.5);
    }

    #[test]
    fn blur_keeps_linear_fields_and_rounds_cusps() {
        let bounds = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 4.0, 4.0));
        let plane = FnField(|p: &Point3<f64>| 2.0 * p.x + p.y - 0.5 * p.z);
        let grid = evaluate_grid(&plane, [21; 3], bounds).unwrap();
        let blurred = gaussian_blur(&grid, 0.3);
        for k in 5..16 {
            for j in 5..16 {
                for i in 5..16 {
                    let idx = grid.index(i, j, k);
                    assert!((blurred.values[idx] - grid.values[idx]).abs() < 1e-9);
                }
            }
        }
        assert_eq!(gaussian_blur(&grid, 0.0), grid);

        let sharp = clean_spec();
        let soft = SyntheticToothSpec { blur: 0.3, ..sharp.clone() };
        let gt = synth_tooth(&sharp).unwrap().degraded_full;
        let scan = synth_tooth(&soft).unwrap().degraded_full;
        assert!(scan.is_watertight());
        let top = |m: &TriMesh| m.vertices.iter().map(|v| v.z).fold(f64::MIN, f64::max);
        assert!(top(&scan) < top(&gt) - 0.01, "{} vs {}", top(&scan), top(&gt));
    }

    #[test]
    fn decimation_hits_its_target_roughly() {
        let gt = tooth_surface(&clean_spec());
        let half = decimate(&gt, 0.3);
        let ratio = half.triangle_count() as f64 / gt.triangle_count() as f64;
        assert!(ratio > 0.15 && ratio < 0.6, "{ratio}");
        assert!(half.validate().is_ok());
    }

    #[test]
    fn round_cone_matches_sphere_and_cylinder_limits() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(0.0, 0.0, -10.0);
        assert!((round_cone(&Point3::new(3.0, 0.0, -5.0), &a, &b, 1.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((round_cone(&Point3::new(0.0, 0.0, 4.0), &a, &b, 2.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((round_cone(&Point3::new(0.0, 0.0, -14.0), &a, &b, 2.0, 1.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn family_members_differ() {
        let s = SynthSettings::default();
        assert_ne!(SyntheticToothSpec::from_seed(1, &s), SyntheticToothSpec::from_seed(2, &s));
        assert_eq!(SyntheticToothSpec::from_seed(7, &s), SyntheticToothSpec::from_seed(7, &s));
    }
}
