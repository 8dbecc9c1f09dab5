//! One-sided surface distances and the statistics reported on them.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{sample_surface, GeometryError, MeshIndex, TriMesh};

pub const DEFAULT_SAMPLES: usize = 100_000;
/// Distance mapped to saturated red, in millimetres.
pub const DEFAULT_D_MAX: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("reference bounding box has zero diagonal")]
    ZeroDiagonal,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Geometry(GeometryError),
}

impl From<GeometryError> for MetricsError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::EmptyMesh => MetricsError::EmptyMesh,
            other => MetricsError::Geometry(other),
        }
    }
}

/// Distances from `n` area-weighted samples on `reference` to the closest
/// point of `recon`.
pub fn one_sided_distances(reference: &TriMesh, recon: &TriMesh, n: usize, seed: u64) -> Result<Vec<f64>, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidArgument("sample count must be positive".into()));
    }
    if reference.triangles.is_empty() || recon.triangles.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let samples = sample_surface(reference, n, seed)?;
    let index = MeshIndex::new(recon)?;
    Ok(samples
        .points
        .par_iter()
        .map(|p| index.closest_point(p).distance)
        .collect())
}

/// Arithmetic mean.
pub fn chamfer_l1(distances: &[f64]) -> f64 {
    assert!(!distances.is_empty(), "chamfer_l1 of an empty set");
    distances.iter().sum::<f64>() / distances.len() as f64
}

/// Percentile `q ∈ [0, 1]` with linear interpolation at zero-based rank `q·(N−1)`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    assert!((0.0..=1.0).contains(&q));
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let t = rank - lo as f64;
    v[lo] + (v[hi] - v[lo]) * t
}

pub fn hd95(distances: &[f64]) -> f64 {
    percentile(distances, 0.95)
}

/// `bbox_diagonal(recon) / bbox_diagonal(reference)`.
pub fn scale_ratio(recon: &TriMesh, reference: &TriMesh) -> Result<f64, MetricsError> {
    let reference_diag = reference.bbox_diagonal()?;
    let recon_diag = recon.bbox_diagonal()?;
    if reference_diag == 0.0 {
        return Err(MetricsError::ZeroDiagonal);
    }
    Ok(recon_diag / reference_diag)
}

/// White at zero, red at `d_max` and beyond.
pub fn error_color(d: f64, d_max: f64) -> [f64; 3] {
    let t = (d / d_max).clamp(0.0, 1.0);
    [1.0, 1.0 - t, 1.0 - t]
}

/// Copy of `reference` whose vertex colors encode the distance to `recon`.
pub fn error_colormap(reference: &TriMesh, recon: &TriMesh, d_max: f64) -> Result<TriMesh, MetricsError> {
    if !(d_max > 0.0) {
        return Err(MetricsError::InvalidArgument("d_max must be positive".into()));
    }
    let index = MeshIndex::new(recon)?;
    let colors = reference
        .vertices
        .par_iter()
        .map(|v| error_color(index.closest_point(v).distance, d_max))
        .collect();
    let mut out = reference.clone();
    out.colors = Some(colors);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub cd_l1_one_sided: f64,
    pub hd95_one_sided: f64,
    pub scale_ratio: f64,
    pub samples: usize,
    pub seed: u64,
}

impl MetricReport {
    /// Measures `recon` against `reference`.
    pub fn compute(reference: &TriMesh, recon: &TriMesh, n: usize, seed: u64) -> Result<Self, MetricsError> {
        let d = one_sided_distances(reference, recon, n, seed)?;
        Ok(Self {
            cd_l1_one_sided: chamfer_l1(&d),
            hd95_one_sided: hd95(&d),
            scale_ratio: scale_ratio(recon, reference)?,
            samples: n,
            seed,
        })
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("cd_l1_one_sided", format!("{:.6}", self.cd_l1_one_sided)),
            ("hd95_one_sided", format!("{:.6}", self.hd95_one_sided)),
            ("scale_ratio", format!("{:.6}", self.scale_ratio)),
            ("samples", self.samples.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.key_values() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
