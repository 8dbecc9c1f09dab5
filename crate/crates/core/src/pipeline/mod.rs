//! End-to-end orchestration: registration, fusion, latent fitting and
//! extraction, plus configuration, synthetic data and run directories.

mod cohort;
mod config;
mod rundir;
mod synth;

use std::fmt::Write as _;

use thiserror::Error;

use crate::extraction::{reconstruct, ExtractionError};
use crate::fusion::{isolate_root, make_hybrid_proxy, FusionError, MeshSummary};
use crate::geometry::{RigidTransform, TriMesh, Transformable};
use crate::implicit::{
    normalize_shape, optimize_latent, sample_sdf, train_auto_decoder, FitResult, ImplicitError, LatentCode,
    NormalizationInfo, SdfModel, SdfNetwork, SdfSample, SignMode,
};
use crate::metrics::{MetricReport, MetricsError};
use crate::registration::{register_multiscale_traced, RegistrationError, RegistrationResult};

pub use cohort::{clean_reference, evaluate_case, CaseResult, CohortSummary};
pub use config::{ConfigError, PipelineConfig, RansacSettings};
pub use rundir::{sha256_file, sha256_hex, transform_from_text, transform_to_text, write_run_dir, RunInput};
pub use synth::{
    decimate, random_rigid, synth_tooth, tooth_surface, SynthSettings, SyntheticTooth, SyntheticToothSpec,
    TRAINING_SEED_BASE,
};

/// A failure, labelled with the stage that produced it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("registration: {0}")]
    Registration(#[from] RegistrationError),
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("sampling: {0}")]
    Sampling(ImplicitError),
    #[error("training: {0}")]
    Training(ImplicitError),
    #[error("fitting: {0}")]
    Fitting(ImplicitError),
    #[error("extraction: {0}")]
    Extraction(#[from] ExtractionError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("synthesis: {0}")]
    Synthesis(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Registration(_) => "registration",
            PipelineError::Fusion(_) => "fusion",
            PipelineError::Sampling(_) => "sampling",
            PipelineError::Training(_) => "training",
            PipelineError::Fitting(_) => "fitting",
            PipelineError::Extraction(_) => "extraction",
            PipelineError::Metrics(_) => "metrics",
            PipelineError::Synthesis(_) => "synthesis",
            PipelineError::Config(_) => "config",
            PipelineError::Io(_) => "io",
        }
    }
}

/// Latent fit of one target surface and its extracted zero level set.
#[derive(Debug, Clone)]
pub struct SurfaceFit {
    pub surface: TriMesh,
    pub z: LatentCode,
    pub normalization: NormalizationInfo,
    pub fit: FitResult,
    pub samples: usize,
}

/// Normalizes `target`, samples signed distances, fits a latent code and
/// extracts the surface back in millimetres.
pub fn fit_surface(
    target: &TriMesh,
    net: &SdfNetwork,
    init: &LatentCode,
    cfg: &PipelineConfig,
) -> Result<SurfaceFit, PipelineError> {
    let (fit, normalization, samples) = fit_latent(target, net, init, cfg)?;
    let surface = reconstruct(net, &fit.z, &normalization, cfg.extract_resolution)?;
    Ok(SurfaceFit {
        surface,
        z: fit.z.clone(),
        normalization,
        fit,
        samples,
    })
}

/// Normalizes `target`, samples signed distances and fits a latent code.
/// Returns the fit, the normalization and the number of samples.
pub fn fit_latent(
    target: &TriMesh,
    net: &SdfNetwork,
    init: &LatentCode,
    cfg: &PipelineConfig,
) -> Result<(FitResult, NormalizationInfo, usize), PipelineError> {
    let (normalized, info) = normalize_shape(target).map_err(PipelineError::Sampling)?;
    let samples = sample_sdf(&normalized, &cfg.sampling, cfg.sign_mode, cfg.seed).map_err(PipelineError::Sampling)?;
    let fit = optimize_latent(net, init, &samples, &cfg.fit_config()).map_err(PipelineError::Fitting)?;
    Ok((fit, info, samples.len()))
}

/// `normalization.*` and `fit.*` report lines.
pub fn fit_report_lines(info: &NormalizationInfo, fit: &FitResult, samples: usize) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv(
        "normalization.center",
        format!("{:?} {:?} {:?}", info.center.x, info.center.y, info.center.z),
    );
    kv("normalization.scale", format!("{:?}", info.scale));
    kv("fit.samples", samples.to_string());
    kv("fit.initial_loss", format!("{:.8}", fit.trace[0]));
    kv("fit.final_loss", format!("{:.8}", fit.trace[fit.trace.len() - 1]));
    kv("fit.best_loss", format!("{:.8}", fit.best_loss));
    kv("fit.best_iteration", fit.best_iteration.to_string());
    s
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Maps the full mesh onto the crown frame.
    pub transform: RigidTransform,
    pub registration: Option<(RegistrationResult, RegistrationResult)>,
    pub root: Option<TriMesh>,
    /// The fitting target: the hybrid proxy, or the full mesh for the baseline.
    pub target: TriMesh,
    pub fit: SurfaceFit,
    pub vs_target: MetricReport,
    pub vs_reference: Option<MetricReport>,
}

impl PipelineOutput {
    pub fn surface(&self) -> &TriMesh {
        &self.fit.surface
    }

    /// Line-oriented `key=value` report.
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        if let Some((fine, coarse)) = &self.registration {
            kv("registration.coarse_fitness", format!("{:.6}", coarse.fitness));
            kv("registration.coarse_rmse", format!("{:.6}", coarse.inlier_rmse));
            kv("registration.fitness", format!("{:.6}", fine.fitness));
            kv("registration.rmse", format!("{:.6}", fine.inlier_rmse));
            kv("registration.rotation_deg", format!("{:.6}", fine.transform.rotation_angle().to_degrees()));
            kv("registration.translation_mm", format!("{:.6}", fine.transform.translation.norm()));
        }
        if let Some(root) = &self.root {
            let r = MeshSummary::of(root);
            kv("fusion.root_vertices", r.vertices.to_string());
            kv("fusion.root_triangles", r.triangles.to_string());
        }
        let t = MeshSummary::of(&self.target);
        kv("target.vertices", t.vertices.to_string());
        kv("target.triangles", t.triangles.to_string());
        kv("target.boundary_edges", t.boundary_edges.to_string());
        s.push_str(&fit_report_lines(&self.fit.normalization, &self.fit.fit, self.fit.samples));
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        let sm = MeshSummary::of(&self.fit.surface);
        kv("surface.vertices", sm.vertices.to_string());
        kv("surface.triangles", sm.triangles.to_string());
        kv("surface.boundary_edges", sm.boundary_edges.to_string());
        for (name, report) in [("target", Some(&self.vs_target)), ("reference", self.vs_reference.as_ref())] {
            if let Some(r) = report {
                for (k, v) in r.key_values() {
                    kv(&format!("metrics.{name}.{k}"), v);
                }
            }
        }
        s
    }
}

/// Parses the `normalization.*` lines of a report.
pub fn normalization_from_text(text: &str) -> Option<NormalizationInfo> {
    let mut center = None;
    let mut scale = None;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("normalization.center=") {
            let c: Vec<f64> = v.split_whitespace().filter_map(|x| x.parse().ok()).collect();
            if c.len() == 3 {
                center = Some(nalgebra::Vector3::new(c[0], c[1], c[2]));
            }
        } else if let Some(v) = line.strip_prefix("normalization.scale=") {
            scale = v.trim().parse().ok();
        }
    }
    Some(NormalizationInfo {
        center: center?,
        scale: scale?,
    })
}

/// Registers `full` onto `crown` and returns the transform with the fine and coarse results.
pub fn register(
    full: &TriMesh,
    crown: &TriMesh,
    cfg: &PipelineConfig,
) -> Result<(RegistrationResult, RegistrationResult), PipelineError> {
    let (fine, coarse, _) = register_multiscale_traced(full, crown, &cfg.icp, &cfg.ransac_params())?;
    Ok((fine, coarse))
}

/// Fused reconstruction: register the full mesh onto the crown, keep its
/// root, fit the prior to `crown ∪ root` and extract the surface in the
/// crown frame.
pub fn run_pipeline(
    crown: &TriMesh,
    full: &TriMesh,
    net: &SdfNetwork,
    init: &LatentCode,
    cfg: &PipelineConfig,
    reference: Option<&TriMesh>,
) -> Result<PipelineOutput, PipelineError> {
    let (fine, coarse) = register(full, crown, cfg)?;
    let aligned = full.transformed(&fine.transform);
    let root = isolate_root(&aligned, crown, &cfg.fusion)?;
    let hybrid = make_hybrid_proxy(crown, &root);
    let fit = fit_surface(&hybrid, net, init, cfg)?;
    finish(fine.transform, Some((fine, coarse)), Some(root), hybrid, fit, cfg, reference)
}

/// Baseline: fit the prior to the full mesh alone, in its own frame.
pub fn run_cbct_only(
    full: &TriMesh,
    net: &SdfNetwork,
    init: &LatentCode,
    cfg: &PipelineConfig,
    reference: Option<&TriMesh>,
) -> Result<PipelineOutput, PipelineError> {
    let fit = fit_surface(full, net, init, cfg)?;
    finish(RigidTransform::identity(), None, None, full.clone(), fit, cfg, reference)
}

fn finish(
    transform: RigidTransform,
    registration: Option<(RegistrationResult, RegistrationResult)>,
    root: Option<TriMesh>,
    target: TriMesh,
    fit: SurfaceFit,
    cfg: &PipelineConfig,
    reference: Option<&TriMesh>,
) -> Result<PipelineOutput, PipelineError> {
    let vs_target = MetricReport::compute(&target, &fit.surface, cfg.metric_samples, cfg.seed)?;
    let vs_reference = reference
        .map(|r| MetricReport::compute(r, &fit.surface, cfg.metric_samples, cfg.seed))
        .transpose()?;
    Ok(PipelineOutput {
        transform,
        registration,
        root,
        target,
        fit,
        vs_target,
        vs_reference,
    })
}

/// Signed-distance supervision for the first `cfg.train_shapes` training teeth.
pub fn family_training_samples(cfg: &PipelineConfig) -> Result<Vec<Vec<SdfSample>>, PipelineError> {
    (0..cfg.train_shapes as u64)
        .map(|i| {
            let spec = SyntheticToothSpec::from_seed(TRAINING_SEED_BASE + i, &cfg.synth);
            let gt = tooth_surface(&spec);
            let (normalized, _) = normalize_shape(&gt).map_err(PipelineError::Sampling)?;
            sample_sdf(&normalized, &cfg.train.sampling, SignMode::RayParity, cfg.train.seed ^ i)
                .map_err(PipelineError::Sampling)
        })
        .collect()
}

/// Trains the shape prior on the synthetic training teeth.
pub fn train_on_family(cfg: &PipelineConfig) -> Result<SdfModel, PipelineError> {
    let shapes = family_training_samples(cfg)?;
    train_auto_decoder(&shapes, &cfg.train).map_err(PipelineError::Training)
}
