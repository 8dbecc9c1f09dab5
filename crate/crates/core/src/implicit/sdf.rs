//! Signed distance supervision: shape normalization, exact signed distance to
//! a triangle mesh, and near-surface / free-space sampling.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ImplicitError;
use crate::geometry::{AreaSampler, GeometryError, MeshIndex, TriMesh};

/// Normalized shapes fit inside a sphere of radius `1 / NORMALIZED_MARGIN`.
pub const NORMALIZED_MARGIN: f64 = 1.03;
/// Samples farther than this from the origin are redrawn.
pub const MAX_SAMPLE_RADIUS: f64 = 1.1;

/// Maps millimetres to the normalized frame: `x_norm = (x_mm - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationInfo {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl NormalizationInfo {
    pub fn identity() -> Self {
        Self {
            center: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn normalize_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords - self.center) / self.scale)
    }

    pub fn denormalize_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords * self.scale + self.center)
    }

    pub fn normalize_mesh(&self, mesh: &TriMesh) -> TriMesh {
        let mut out = mesh.clone();
        out.vertices.iter_mut().for_each(|v| *v = self.normalize_point(v));
        out
    }

    pub fn denormalize_mesh(&self, mesh: &TriMesh) -> TriMesh {
        let mut out = mesh.clone();
        out.vertices.iter_mut().for_each(|v| *v = self.denormalize_point(v));
        out
    }
}

/// Centers `mesh` on its bounding-box center and scales the farthest vertex to
/// radius `1 / 1.03`.
pub fn normalize_shape(mesh: &TriMesh) -> Result<(TriMesh, NormalizationInfo), ImplicitError> {
    let aabb = mesh.aabb().ok_or(GeometryError::EmptyMesh)?;
    let center = aabb.center().coords;
    let max_norm = mesh
        .vertices
        .iter()
        .map(|v| (v.coords - center).norm())
        .fold(0.0, f64::max);
    if !(max_norm > 0.0) {
        return Err(GeometryError::InvalidMesh("all vertices coincide".into()).into());
    }
    let info = NormalizationInfo {
        center,
        scale: max_norm * NORMALIZED_MARGIN,
    };
    Ok((info.normalize_mesh(mesh), info))
}

/// How the sign of the distance is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// Majority vote of crossing parity along three fixed rays. Needs a closed mesh.
    RayParity,
    /// Side of the angle-weighted pseudonormal at the closest point.
    Pseudonormal,
}

impl std::str::FromStr for SignMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ray_parity" => Ok(Self::RayParity),
            "pseudonormal" => Ok(Self::Pseudonormal),
            other => Err(format!("unknown sign mode '{other}'")),
        }
    }
}

impl std::fmt::Display for SignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RayParity => "ray_parity",
            Self::Pseudonormal => "pseudonormal",
        })
    }
}

/// Directions with no rational relation to the axes.
#[allow(clippy::approx_constant)]
fn parity_rays() -> [Vector3<f64>; 3] {
    [
        Vector3::new(1.0, 1.618_033_988_7, 2.718_281_828_5).normalize(),
        Vector3::new(-2.236_067_977_5, 1.0, -1.414_213_562_4).normalize(),
        Vector3::new(0.577_215_664_9, -3.141_592_653_6, 1.202_056_903_2).normalize(),
    ]
}

/// Signed distance queries against one mesh. Negative inside.
pub struct SdfOracle {
    index: MeshIndex,
    mode: SignMode,
}

impl SdfOracle {
    pub fn new(mesh: &TriMesh, mode: SignMode) -> Result<Self, ImplicitError> {
        if mesh.triangles.is_empty() {
            return Err(GeometryError::EmptyMesh.into());
        }
        if mode == SignMode::RayParity && !mesh.is_watertight() {
            return Err(ImplicitError::NotWatertight(mesh.boundary_edge_count()));
        }
        Ok(Self {
            index: MeshIndex::new(mesh)?,
            mode,
        })
    }

    pub fn signed_distance(&self, x: &Point3<f64>) -> f64 {
        let hit = self.index.closest_point(x);
        let inside = match self.mode {
            SignMode::RayParity => {
                let odd = parity_rays()
                    .iter()
                    .filter(|d| self.index.ray_crossings(x, d) % 2 == 1)
                    .count();
                odd >= 2
            }
            SignMode::Pseudonormal => {
                let n = self.index.pseudonormal(&hit);
                (x - hit.point).dot(&n) < 0.0
            }
        };
        if inside {
            -hit.distance
        } else {
            hit.distance
        }
    }

    pub fn signed_distances(&self, xs: &[Point3<f64>]) -> Vec<f64> {
        xs.par_iter().map(|x| self.signed_distance(x)).collect()
    }
}

pub fn signed_distance(mesh: &TriMesh, x: &Point3<f64>, mode: SignMode) -> Result<f64, ImplicitError> {
    Ok(SdfOracle::new(mesh, mode)?.signed_distance(x))
}

/// One supervision point in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub position: Point3<f64>,
    pub sdf: f64,
}

impl SdfSample {
    pub fn is_finite(&self) -> bool {
        self.sdf.is_finite() && self.position.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub n_surface: usize,
    pub n_free: usize,
    pub sigma_near: f64,
    pub sigma_far: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_surface: 8000,
            n_free: 2000,
            sigma_near: 0.005,
            sigma_far: 0.05,
        }
    }
}

fn gaussian_offset(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    let n = Normal::new(0.0, sigma).unwrap();
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Perturbed surface samples (first half with `sigma_near`, the rest with
/// `sigma_far`) followed by uniform samples in the unit ball, all labelled with
/// their signed distance.
pub fn sample_sdf(
    mesh: &TriMesh,
    cfg: &SamplingConfig,
    mode: SignMode,
    seed: u64,
) -> Result<Vec<SdfSample>, ImplicitError> {
    let oracle = SdfOracle::new(mesh, mode)?;
    let sampler = AreaSampler::new(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(cfg.n_surface + cfg.n_free);
    let near = cfg.n_surface / 2;
    for i in 0..cfg.n_surface {
        let sigma = if i < near { cfg.sigma_near } else { cfg.sigma_far };
        let tri = sampler.pick(&mut rng);
        let base = AreaSampler::point_in(mesh, tri, &mut rng);
        let p = loop {
            let p = base + gaussian_offset(&mut rng, sigma);
            if p.coords.norm() <= MAX_SAMPLE_RADIUS {
                break p;
            }
        };
        positions.push(p);
    }
    for _ in 0..cfg.n_free {
        let p = loop {
            let p = Point3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            if p.coords.norm_squared() <= 1.0 {
                break p;
            }
        };
        positions.push(p);
    }
    let sdf = oracle.signed_distances(&positions);
    Ok(positions
        .into_iter()
        .zip(sdf)
        .map(|(position, sdf)| SdfSample { position, sdf })
        .collect())
}

/// Drops non-finite samples, logging how many were removed.
pub fn sanitize_samples(samples: &[SdfSample]) -> Vec<SdfSample> {
    let kept: Vec<SdfSample> = samples.iter().copied().filter(SdfSample::is_finite).collect();
    if kept.len() < samples.len() {
        log::warn!("dropped {} non-finite SDF samples", samples.len() - kept.len());
    }
    kept
}
