//! Fast Point Feature Histograms.
//!
//! Each signature is three 11-bin histograms over the Darboux-frame pair
//! features `(α, φ, θ)`, every block normalized to sum to 100 (or all zero for
//! a point without neighbours).

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::geometry::{PointCloud, PointIndex};

pub const BINS: usize = 11;
pub const DIM: usize = 3 * BINS;
/// Radius neighbourhoods are truncated to this many nearest points.
pub const MAX_NEIGHBORS: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("pair features are undefined for coincident points")]
    CoincidentPoints,
    #[error("point cloud has no normals")]
    MissingNormals,
}

/// 33-dimensional FPFH descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpfhSignature(pub [f64; DIM]);

impl Default for FpfhSignature {
    fn default() -> Self {
        Self([0.0; DIM])
    }
}

impl FpfhSignature {
    pub fn block_sums(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (b, sum) in s.iter_mut().enumerate() {
            *sum = self.0[b * BINS..(b + 1) * BINS].iter().sum();
        }
        s
    }

    pub fn distance_squared(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn normalize_blocks(&mut self) {
        for b in 0..3 {
            let block = &mut self.0[b * BINS..(b + 1) * BINS];
            let sum: f64 = block.iter().sum();
            if sum > 0.0 {
                block.iter_mut().for_each(|v| *v *= 100.0 / sum);
            }
        }
    }
}

/// Darboux pair features `(α, φ, θ, d)`.
///
/// The source of the pair is whichever point's normal makes the smaller angle
/// with the connecting line.
pub fn pair_features(
    p_s: &Point3<f64>,
    n_s: &Vector3<f64>,
    p_t: &Point3<f64>,
    n_t: &Vector3<f64>,
) -> Result<(f64, f64, f64, f64), FeatureError> {
    let mut dp = p_t - p_s;
    let d = dp.norm();
    if d < 1e-12 {
        return Err(FeatureError::CoincidentPoints);
    }
    dp /= d;
    let (mut u, mut nt) = (*n_s, *n_t);
    let a1 = u.dot(&dp);
    let a2 = nt.dot(&dp);
    if a1.abs().acos() > a2.abs().acos() {
        std::mem::swap(&mut u, &mut nt);
        dp = -dp;
    }
    let phi = u.dot(&dp).clamp(-1.0, 1.0);
    let v = u.cross(&dp);
    let vn = v.norm();
    if vn < 1e-12 {
        // Normal parallel to the connecting line: the frame is undefined.
        return Ok((0.0, phi, 0.0, d));
    }
    let v = v / vn;
    let w = u.cross(&v);
    let alpha = v.dot(&nt).clamp(-1.0, 1.0);
    let theta = w.dot(&nt).atan2(u.dot(&nt));
    Ok((alpha, phi, theta, d))
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let t = ((value - lo) / (hi - lo) * BINS as f64).floor();
    (t.max(0.0) as usize).min(BINS - 1)
}

/// Radius neighbours of point `i`, excluding itself and coincident points.
fn neighbors(index: &PointIndex, cloud: &PointCloud, i: usize, radius: f64) -> Vec<(usize, f64)> {
    let mut nb: Vec<(usize, f64)> = index
        .within_radius(&cloud.points[i], radius)
        .into_iter()
        .filter(|&(j, d)| j != i && d >= 1e-12)
        .collect();
    nb.truncate(MAX_NEIGHBORS);
    nb
}

fn spfh_from(cloud: &PointCloud, normals: &[Vector3<f64>], i: usize, nb: &[(usize, f64)]) -> FpfhSignature {
    use std::f64::consts::PI;
    let mut h = FpfhSignature::default();
    if nb.is_empty() {
        return h;
    }
    let inc = 100.0 / nb.len() as f64;
    for &(j, _) in nb {
        let (alpha, phi, theta, _) =
            pair_features(&cloud.points[i], &normals[i], &cloud.points[j], &normals[j])
                .expect("coincident neighbours are filtered");
        h.0[bin(alpha, -1.0, 1.0)] += inc;
        h.0[BINS + bin(phi, -1.0, 1.0)] += inc;
        h.0[2 * BINS + bin(theta, -PI, PI)] += inc;
    }
    h
}

/// Simplified point feature histogram of one point.
pub fn compute_spfh(cloud: &PointCloud, i: usize, radius: f64) -> Result<FpfhSignature, FeatureError> {
    let normals = cloud.normals.as_ref().ok_or(FeatureError::MissingNormals)?;
    let index = PointIndex::new(&cloud.points);
    let nb = neighbors(&index, cloud, i, radius);
    Ok(spfh_from(cloud, normals, i, &nb))
}

/// FPFH for every point: `SPFH(p) + (1/k) Σ SPFH(p_j) / ω_j`, blocks renormalized.
pub fn compute_fpfh(cloud: &PointCloud, radius: f64) -> Result<Vec<FpfhSignature>, FeatureError> {
    let normals = cloud.normals.as_ref().ok_or(FeatureError::MissingNormals)?;
    let index = PointIndex::new(&cloud.points);
    let nbrs: Vec<Vec<(usize, f64)>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| neighbors(&index, cloud, i, radius))
        .collect();
    let spfh: Vec<FpfhSignature> = (0..cloud.len())
        .into_par_iter()
        .map(|i| spfh_from(cloud, normals, i, &nbrs[i]))
        .collect();
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let mut f = spfh[i];
            let nb = &nbrs[i];
            if !nb.is_empty() {
                let k = nb.len() as f64;
                for &(j, dist) in nb {
                    let weight = 1.0 / (k * dist);
                    for (acc, v) in f.0.iter_mut().zip(spfh[j].0.iter()) {
                        *acc += weight * v;
                    }
                }
            }
            f.normalize_blocks();
            f
        })
        .collect())
}
