//! Rigid registration: RANSAC over mutual FPFH matches for the coarse pose,
//! then multi-scale point-to-plane ICP.

use nalgebra::{Matrix3, Matrix6, Point3, SymmetricEigen, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::features::{compute_fpfh, FeatureError, FpfhSignature};
use crate::geometry::{
    estimate_normals_lenient, sample_surface, voxel_downsample, GeometryError, PointCloud,
    PointIndex, RigidTransform, TriMesh,
};

/// `(source index, target index)` pairs.
pub type CorrespondenceSet = Vec<(usize, usize)>;

/// Neighbours used for PCA normals on downsampled clouds.
pub const NORMAL_NEIGHBORS: usize = 20;
/// FPFH support radius as a multiple of the coarse voxel.
pub const FPFH_RADIUS_FACTOR: f64 = 5.0;
/// ICP stops once the twist update is shorter than this.
pub const ICP_UPDATE_TOLERANCE: f64 = 1e-7;
const CONDITION_LIMIT: f64 = 1e12;
const RANSAC_EARLY_EXIT: f64 = 0.95;
const RANSAC_BATCH: usize = 1024;
const MAX_BACKTRACK: usize = 12;

#[derive(Debug, Clone, thiserror::Error)]
pub enum RegistrationError {
    #[error("source and target correspondences are collinear or coincident")]
    DegenerateConfiguration,
    #[error("no RANSAC hypothesis reached the minimum inlier count")]
    NoValidModel,
    #[error("no correspondences within {max_distance} mm")]
    NoCorrespondences {
        max_distance: f64,
        best: Box<IcpReport>,
    },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    /// Fraction of source points (or correspondences, for RANSAC) that are inliers.
    pub fitness: f64,
    pub inlier_rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub sample_size: usize,
    pub max_iterations: usize,
    pub distance_threshold: f64,
    pub edge_similarity: f64,
    pub seed: u64,
}

impl RansacParams {
    /// Defaults for a given coarse voxel size.
    pub fn for_voxel(voxel: f64, seed: u64) -> Self {
        Self {
            sample_size: 3,
            max_iterations: 100_000,
            distance_threshold: 1.5 * voxel,
            edge_similarity: 0.9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.sample_size < 3 {
            return Err(RegistrationError::InvalidParameters("sample size must be >= 3".into()));
        }
        if !(self.edge_similarity > 0.0 && self.edge_similarity < 1.0) {
            return Err(RegistrationError::InvalidParameters(
                "edge similarity must lie in (0, 1)".into(),
            ));
        }
        if !(self.distance_threshold > 0.0) {
            return Err(RegistrationError::InvalidParameters(
                "distance threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpScheduleLevel {
    pub voxel: f64,
    pub max_distance: f64,
    pub max_iterations: usize,
}

impl IcpScheduleLevel {
    pub fn new(voxel: f64) -> Self {
        Self {
            voxel,
            max_distance: 2.0 * voxel,
            max_iterations: 50,
        }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.voxel > 0.0 && self.max_distance > 0.0 && self.max_iterations > 0 {
            Ok(())
        } else {
            Err(RegistrationError::InvalidParameters(
                "ICP level values must be positive".into(),
            ))
        }
    }
}

/// Coarse-to-fine levels at 1.0, 0.5 and 0.25 mm.
pub fn default_schedule() -> Vec<IcpScheduleLevel> {
    [1.0, 0.5, 0.25].into_iter().map(IcpScheduleLevel::new).collect()
}

/// Mutual nearest neighbours in descriptor space. Ties go to the lowest index.
pub fn match_features(src: &[FpfhSignature], dst: &[FpfhSignature]) -> CorrespondenceSet {
    if src.is_empty() || dst.is_empty() {
        return Vec::new();
    }
    let nearest = |q: &FpfhSignature, set: &[FpfhSignature]| -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for (j, s) in set.iter().enumerate() {
            let d = q.distance_squared(s);
            if d < best.0 {
                best = (d, j);
            }
        }
        best.1
    };
    let fwd: Vec<usize> = src.par_iter().map(|q| nearest(q, dst)).collect();
    let bwd: Vec<usize> = dst.par_iter().map(|q| nearest(q, src)).collect();
    fwd.iter()
        .enumerate()
        .filter(|&(i, &j)| bwd[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch).
pub fn estimate_rigid(
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
) -> Result<RigidTransform, RegistrationError> {
    if src.len() != dst.len() {
        return Err(RegistrationError::InvalidParameters(
            "point lists differ in length".into(),
        ));
    }
    if src.len() < 3 {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    let mut cov_s = Matrix3::zeros();
    let mut cov_d = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s.coords - cs;
        let b = d.coords - cd;
        h += a * b.transpose();
        cov_s += a * a.transpose();
        cov_d += b * b.transpose();
    }
    if is_collinear(&cov_s) || is_collinear(&cov_d) {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = v * fix * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    })
}

fn is_collinear(cov: &Matrix3<f64>) -> bool {
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Inlier fraction and RMSE of the correspondences under `t`.
fn score_correspondences(
    t: &RigidTransform,
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    corr: &[(usize, usize)],
    threshold: f64,
) -> (usize, f64) {
    let mut count = 0usize;
    let mut sq = 0.0;
    for &(i, j) in corr {
        let d2 = (t.apply_point(&src[i]) - dst[j]).norm_squared();
        if d2 < threshold * threshold {
            count += 1;
            sq += d2;
        }
    }
    let rmse = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
    (count, rmse)
}

#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    transform: RigidTransform,
    inliers: usize,
    rmse: f64,
    iteration: usize,
}

impl Hypothesis {
    /// Lexicographic on (inliers, -rmse, -iteration).
    fn better_than(&self, other: &Hypothesis) -> bool {
        self.inliers
            .cmp(&other.inliers)
            .then(other.rmse.total_cmp(&self.rmse))
            .then(other.iteration.cmp(&self.iteration))
            .is_gt()
    }
}

fn pick_best(a: Option<Hypothesis>, b: Option<Hypothesis>) -> Option<Hypothesis> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.better_than(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn ransac_iteration(
    iteration: usize,
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    corr: &[(usize, usize)],
    p: &RansacParams,
) -> Option<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(iteration as u64);
    let mut picks: Vec<usize> = Vec::with_capacity(p.sample_size);
    while picks.len() < p.sample_size {
        let k = rng.random_range(0..corr.len());
        if !picks.contains(&k) {
            picks.push(k);
        }
    }
    for a in 0..picks.len() {
        for b in a + 1..picks.len() {
            let (sa, da) = corr[picks[a]];
            let (sb, db) = corr[picks[b]];
            let ls = (src[sa] - src[sb]).norm();
            let ld = (dst[da] - dst[db]).norm();
            if ls < p.edge_similarity * ld || ld < p.edge_similarity * ls {
                return None;
            }
        }
    }
    let s: Vec<Point3<f64>> = picks.iter().map(|&k| src[corr[k].0]).collect();
    let d: Vec<Point3<f64>> = picks.iter().map(|&k| dst[corr[k].1]).collect();
    let transform = estimate_rigid(&s, &d).ok()?;
    let (inliers, rmse) = score_correspondences(&transform, src, dst, corr, p.distance_threshold);
    (inliers >= p.sample_size).then_some(Hypothesis {
        transform,
        inliers,
        rmse,
        iteration,
    })
}

/// RANSAC over a correspondence set. Fitness is the inlier fraction of `corr`.
///
/// Iterations draw from independent per-iteration streams of the seeded
/// generator, so the result does not depend on the thread count.
pub fn ransac_align(
    src: &PointCloud,
    dst: &PointCloud,
    corr: &[(usize, usize)],
    p: &RansacParams,
) -> Result<RegistrationResult, RegistrationError> {
    p.validate()?;
    if corr.len() < p.sample_size {
        return Err(RegistrationError::NoValidModel);
    }
    let (sp, dp) = (&src.points, &dst.points);
    if corr.iter().any(|&(i, j)| i >= sp.len() || j >= dp.len()) {
        return Err(RegistrationError::InvalidParameters(
            "correspondence index out of range".into(),
        ));
    }
    let mut best: Option<Hypothesis> = None;
    let mut start = 0;
    while start < p.max_iterations {
        let end = (start + RANSAC_BATCH).min(p.max_iterations);
        let batch = (start..end)
            .into_par_iter()
            .map(|it| ransac_iteration(it, sp, dp, corr, p))
            .reduce(|| None, pick_best);
        best = pick_best(best, batch);
        if let Some(h) = &best {
            if h.inliers as f64 / corr.len() as f64 > RANSAC_EARLY_EXIT {
                break;
            }
        }
        start = end;
    }
    let mut best = best.ok_or(RegistrationError::NoValidModel)?;

    // Refit on the inlier set and keep it if it scores at least as well.
    let thr2 = p.distance_threshold * p.distance_threshold;
    let (s, d): (Vec<_>, Vec<_>) = corr
        .iter()
        .filter(|&&(i, j)| (best.transform.apply_point(&sp[i]) - dp[j]).norm_squared() < thr2)
        .map(|&(i, j)| (sp[i], dp[j]))
        .unzip();
    if let Ok(refit) = estimate_rigid(&s, &d) {
        let (inliers, rmse) = score_correspondences(&refit, sp, dp, corr, p.distance_threshold);
        if inliers > best.inliers || (inliers == best.inliers && rmse <= best.rmse) {
            best = Hypothesis {
                transform: refit,
                inliers,
                rmse,
                iteration: best.iteration,
            };
        }
    }
    Ok(RegistrationResult {
        transform: best.transform,
        fitness: best.inliers as f64 / corr.len() as f64,
        inlier_rmse: best.rmse,
    })
}

/// ICP outcome with the per-iteration objective trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpReport {
    pub result: RegistrationResult,
    /// Point-to-plane RMSE at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Pairing {
    /// `(transformed source point, target point, target normal)`.
    pairs: Vec<(Point3<f64>, Point3<f64>, Vector3<f64>)>,
    rmse: f64,
}

fn pair_up(
    src: &[Point3<f64>],
    dst: &PointCloud,
    normals: &[Vector3<f64>],
    index: &PointIndex,
    t: &RigidTransform,
    max_dist: f64,
) -> Pairing {
    let found: Vec<Option<(Point3<f64>, usize)>> = src
        .par_iter()
        .map(|p| {
            let q = t.apply_point(p);
            index
                .nearest(&q)
                .filter(|&(_, d)| d <= max_dist)
                .map(|(j, _)| (q, j))
        })
        .collect();
    let pairs: Vec<_> = found
        .into_iter()
        .flatten()
        .map(|(q, j)| (q, dst.points[j], normals[j]))
        .collect();
    let sq: f64 = pairs
        .iter()
        .map(|(q, d, n)| {
            let r = n.dot(&(q - d));
            r * r
        })
        .sum();
    let rmse = if pairs.is_empty() {
        0.0
    } else {
        (sq / pairs.len() as f64).sqrt()
    };
    Pairing { pairs, rmse }
}

fn solve_normal_equations(a: &Matrix6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let eig = SymmetricEigen::new(*a);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min > 0.0 && max / min <= CONDITION_LIMIT {
        if let Some(chol) = a.cholesky() {
            return chol.solve(b);
        }
    }
    let svd = a.svd(true, true);
    svd.solve(b, max.abs() / CONDITION_LIMIT)
        .unwrap_or_else(|_| Vector6::zeros())
}

/// Point-to-plane ICP from `init`.
///
/// Each step solves the linearized 6-dof problem, then halves the step until
/// the objective does not increase, so `trace` is non-increasing.
pub fn icp_point_to_plane(
    src: &PointCloud,
    dst: &PointCloud,
    init: &RigidTransform,
    max_dist: f64,
    iters: usize,
) -> Result<IcpReport, RegistrationError> {
    let normals = dst.normals.as_ref().ok_or(RegistrationError::InvalidParameters(
        "target cloud needs normals".into(),
    ))?;
    if !(max_dist > 0.0) {
        return Err(RegistrationError::InvalidParameters("max distance must be positive".into()));
    }
    let index = PointIndex::new(&dst.points);
    let fitness = |n: usize| n as f64 / src.len().max(1) as f64;

    let mut t = *init;
    let mut current = pair_up(&src.points, dst, normals, &index, &t, max_dist);
    let mut report = IcpReport {
        result: RegistrationResult {
            transform: t,
            fitness: fitness(current.pairs.len()),
            inlier_rmse: current.rmse,
        },
        trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    if current.pairs.is_empty() {
        return Err(RegistrationError::NoCorrespondences {
            max_distance: max_dist,
            best: Box::new(report),
        });
    }
    report.trace.push(current.rmse);

    for _ in 0..iters {
        let mut a = Matrix6::zeros();
        let mut b = Vector6::zeros();
        for (q, d, n) in &current.pairs {
            let c = q.coords.cross(n);
            let j = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
            let r = n.dot(&(q - d));
            a += j * j.transpose();
            b += j * r;
        }
        let x = solve_normal_equations(&a, &(-b));
        report.iterations += 1;
        if x.norm() < ICP_UPDATE_TOLERANCE {
            report.converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let xs = x * step;
            let delta = RigidTransform::from_twist(&[xs[0], xs[1], xs[2], xs[3], xs[4], xs[5]]);
            let cand = delta.compose(&t);
            let cand = RigidTransform::new(cand.rotation, cand.translation);
            let pairing = pair_up(&src.points, dst, normals, &index, &cand, max_dist);
            if !pairing.pairs.is_empty() && pairing.rmse <= current.rmse {
                accepted = Some((cand, pairing));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, pairing)) = accepted else {
            report.converged = true;
            break;
        };
        t = cand;
        current = pairing;
        report.trace.push(current.rmse);
        report.result = RegistrationResult {
            transform: t,
            fitness: fitness(current.pairs.len()),
            inlier_rmse: current.rmse,
        };
    }
    Ok(report)
}

/// Downsampled cloud with PCA normals oriented by the mesh normals.
fn prepare_level(samples: &PointCloud, voxel: f64) -> Result<PointCloud, RegistrationError> {
    let down = voxel_downsample(samples, voxel);
    let (cloud, _) = estimate_normals_lenient(&down, NORMAL_NEIGHBORS.min(down.len().saturating_sub(1)))?;
    Ok(cloud)
}

/// Number of surface samples that fills the finest voxel grid.
fn sample_count(mesh: &TriMesh, finest_voxel: f64) -> usize {
    let n = 4.0 * mesh.total_area() / (finest_voxel * finest_voxel);
    (n.ceil() as usize).clamp(2_000, 400_000)
}

/// Full two-stage registration. The returned transform maps `moving` into the
/// frame of `fixed`.
pub fn register_multiscale(
    moving: &TriMesh,
    fixed: &TriMesh,
    schedule: &[IcpScheduleLevel],
    ransac: &RansacParams,
) -> Result<RegistrationResult, RegistrationError> {
    Ok(register_multiscale_traced(moving, fixed, schedule, ransac)?.0)
}

/// [`register_multiscale`] also returning the coarse result and every ICP report.
pub fn register_multiscale_traced(
    moving: &TriMesh,
    fixed: &TriMesh,
    schedule: &[IcpScheduleLevel],
    ransac: &RansacParams,
) -> Result<(RegistrationResult, RegistrationResult, Vec<IcpReport>), RegistrationError> {
    if moving.triangles.is_empty() || fixed.triangles.is_empty() {
        return Err(GeometryError::EmptyMesh.into());
    }
    if schedule.is_empty() {
        return Err(RegistrationError::InvalidParameters("empty ICP schedule".into()));
    }
    for level in schedule {
        level.validate()?;
    }
    ransac.validate()?;
    let coarse_voxel = schedule[0].voxel;
    let finest = schedule.iter().map(|l| l.voxel).fold(f64::INFINITY, f64::min);
    let moving_samples = sample_surface(moving, sample_count(moving, finest), ransac.seed)?;
    let fixed_samples = sample_surface(fixed, sample_count(fixed, finest), ransac.seed ^ 0x5eed)?;

    let src = prepare_level(&moving_samples, coarse_voxel)?;
    let dst = prepare_level(&fixed_samples, coarse_voxel)?;
    let radius = FPFH_RADIUS_FACTOR * coarse_voxel;
    let fs = compute_fpfh(&src, radius)?;
    let fd = compute_fpfh(&dst, radius)?;
    let corr = match_features(&fs, &fd);
    let coarse = ransac_align(&src, &dst, &corr, ransac)?;
    log::debug!(
        "ransac: {} matches, fitness {:.3}, rmse {:.4}",
        corr.len(),
        coarse.fitness,
        coarse.inlier_rmse
    );

    let mut t = coarse.transform;
    let mut reports = Vec::with_capacity(schedule.len());
    let mut last = coarse;
    for (k, level) in schedule.iter().enumerate() {
        let (src, dst) = if k == 0 {
            (src.clone(), dst.clone())
        } else {
            (
                prepare_level(&moving_samples, level.voxel)?,
                prepare_level(&fixed_samples, level.voxel)?,
            )
        };
        let report = icp_point_to_plane(&src, &dst, &t, level.max_distance, level.max_iterations)?;
        log::debug!(
            "icp level {k}: {} iterations, fitness {:.3}, rmse {:.5}",
            report.iterations,
            report.result.fitness,
            report.result.inlier_rmse
        );
        t = report.result.transform;
        last = report.result;
        reports.push(report);
    }
    Ok((last, coarse, reports))
}
