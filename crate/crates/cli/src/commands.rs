use std::fmt::Write as _;
use std::path::Path;

use toothfuse::fusion::{isolate_root, make_hybrid_proxy, FusionParams, MeshSummary};
use toothfuse::geometry::{read_mesh, write_mesh, Transformable};
use toothfuse::implicit::{
    normalize_shape, read_latent, read_model, sample_sdf, train_auto_decoder, write_latent, write_manifest,
    write_model, LatentCode, NormalizationInfo, SdfNetwork, SignMode,
};
use toothfuse::metrics::{error_colormap, MetricReport};
use toothfuse::pipeline::{
    evaluate_case, fit_latent, fit_report_lines, clean_reference, normalization_from_text, run_cbct_only,
    run_pipeline, synth_tooth, train_on_family, transform_from_text, transform_to_text, write_run_dir,
    CohortSummary, PipelineConfig, PipelineError, RunInput, SyntheticToothSpec,
};
use toothfuse::{RigidTransform, TriMesh};

use crate::Common;

type Result<T> = std::result::Result<T, PipelineError>;

pub fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| PipelineError::Config(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("expected KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(PipelineError::Config)?;
    }
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate().map_err(PipelineError::Config)?;
    Ok(cfg)
}

fn io(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(e.to_string())
}

fn load_mesh(path: &Path) -> Result<TriMesh> {
    read_mesh(path).map_err(io)
}

fn save_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    write_mesh(path, mesh).map_err(io)
}

fn save_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn load_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<(SdfNetwork, Vec<LatentCode>)> {
    read_model(path).map_err(io)
}

fn mean_latent(latents: &[LatentCode], net: &SdfNetwork) -> LatentCode {
    LatentCode::mean(latents).unwrap_or_else(|| LatentCode::zeros(net.shape().latent_dim))
}

pub fn synth(cfg: &PipelineConfig, tooth: u64, out: &Path) -> Result<()> {
    let spec = SyntheticToothSpec::from_seed(tooth, &cfg.synth);
    let t = synth_tooth(&spec).map_err(PipelineError::Synthesis)?;
    let reference = clean_reference(&t, cfg)?;
    save_mesh(&out.join("crown.ply"), &t.crown)?;
    save_mesh(&out.join("full.ply"), &t.degraded_full)?;
    save_mesh(&out.join("ground_truth.ply"), &t.ground_truth)?;
    save_mesh(&out.join("reference.ply"), &reference)?;
    save_text(&out.join("true_transform.txt"), &transform_to_text(&t.true_transform))?;
    println!("tooth={tooth}");
    println!("crown.triangles={}", t.crown.triangle_count());
    println!("full.triangles={}", t.degraded_full.triangle_count());
    Ok(())
}

pub fn register(cfg: &PipelineConfig, crown: &Path, full: &Path, out: &Path) -> Result<()> {
    let crown = load_mesh(crown)?;
    let full = load_mesh(full)?;
    let (fine, coarse) = toothfuse::pipeline::register(&full, &crown, cfg)?;
    save_text(&out.join("T.txt"), &transform_to_text(&fine.transform))?;
    println!("fitness={:.6}", fine.fitness);
    println!("rmse={:.6}", fine.inlier_rmse);
    println!("coarse_fitness={:.6}", coarse.fitness);
    println!("coarse_rmse={:.6}", coarse.inlier_rmse);
    Ok(())
}

pub fn fuse(
    cfg: &PipelineConfig,
    crown: &Path,
    full: &Path,
    transform: Option<&Path>,
    tau: Option<f64>,
    out: &Path,
) -> Result<()> {
    let crown = load_mesh(crown)?;
    let mut full = load_mesh(full)?;
    if let Some(path) = transform {
        let t: RigidTransform = transform_from_text(&load_text(path)?)?;
        full = full.transformed(&t);
    }
    let params = FusionParams {
        tau: tau.unwrap_or(cfg.fusion.tau),
    };
    let root = isolate_root(&full, &crown, &params)?;
    let hybrid = make_hybrid_proxy(&crown, &root);
    save_mesh(&out.join("H.ply"), &hybrid)?;
    let r = MeshSummary::of(&root);
    let h = MeshSummary::of(&hybrid);
    let mut s = String::new();
    let _ = writeln!(s, "root.vertices={}", r.vertices);
    let _ = writeln!(s, "root.triangles={}", r.triangles);
    let _ = writeln!(s, "hybrid.vertices={}", h.vertices);
    let _ = writeln!(s, "hybrid.triangles={}", h.triangles);
    let _ = writeln!(s, "hybrid.boundary_edges={}", h.boundary_edges);
    save_text(&out.join("fuse.txt"), &s)?;
    print!("{s}");
    Ok(())
}

pub fn train_sdf(cfg: &PipelineConfig, meshes: &[std::path::PathBuf], out: &Path) -> Result<()> {
    let model = if meshes.is_empty() {
        train_on_family(cfg)?
    } else {
        let mut shapes = Vec::with_capacity(meshes.len());
        for (i, path) in meshes.iter().enumerate() {
            let (normalized, _) = normalize_shape(&load_mesh(path)?).map_err(PipelineError::Sampling)?;
            let samples = sample_sdf(&normalized, &cfg.train.sampling, SignMode::RayParity, cfg.train.seed ^ i as u64)
                .map_err(PipelineError::Sampling)?;
            shapes.push(samples);
        }
        train_auto_decoder(&shapes, &cfg.train).map_err(PipelineError::Training)?
    };
    write_model(&out.join("model.ifsd"), &model).map_err(io)?;
    write_manifest(&out.join("model_manifest.txt"), &model).map_err(io)?;
    println!("shapes={}", model.latents.len());
    println!("final_loss={:.8}", model.loss_trace.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

pub fn refine(cfg: &PipelineConfig, model: &Path, target: &Path, out: &Path) -> Result<()> {
    let (net, latents) = load_model(model)?;
    let target = load_mesh(target)?;
    let (fit, info, samples) = fit_latent(&target, &net, &mean_latent(&latents, &net), cfg)?;
    write_latent(&out.join("z_star.bin"), &fit.z).map_err(io)?;
    let report = fit_report_lines(&info, &fit, samples);
    save_text(&out.join("refine.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn extract(
    cfg: &PipelineConfig,
    model: &Path,
    latent: Option<&Path>,
    index: Option<usize>,
    resolution: Option<usize>,
    norm: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (net, latents) = load_model(model)?;
    let z = match (latent, index) {
        (Some(path), _) => read_latent(path).map_err(io)?,
        (None, Some(i)) => latents
            .get(i)
            .cloned()
            .ok_or_else(|| PipelineError::Io(format!("latent index {i} out of range ({} shapes)", latents.len())))?,
        (None, None) => mean_latent(&latents, &net),
    };
    if z.dim() != net.shape().latent_dim {
        return Err(PipelineError::Io(format!(
            "latent has dimension {}, model expects {}",
            z.dim(),
            net.shape().latent_dim
        )));
    }
    let info = match norm {
        Some(path) => normalization_from_text(&load_text(path)?)
            .ok_or_else(|| PipelineError::Io(format!("{}: no normalization lines", path.display())))?,
        None => NormalizationInfo::identity(),
    };
    let surface = toothfuse::extraction::reconstruct(&net, &z, &info, resolution.unwrap_or(cfg.extract_resolution))?;
    save_mesh(&out.join("S.ply"), &surface)?;
    let s = MeshSummary::of(&surface);
    println!("vertices={}", s.vertices);
    println!("triangles={}", s.triangles);
    println!("boundary_edges={}", s.boundary_edges);
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig, reference: &Path, recon: &Path, json: Option<&Path>, out: &Path) -> Result<()> {
    let reference = load_mesh(reference)?;
    let recon = load_mesh(recon)?;
    let report = MetricReport::compute(&reference, &recon, cfg.metric_samples, cfg.seed)?;
    let text = report.to_string();
    save_text(&out.join("metrics.txt"), &text)?;
    print!("{text}");
    if let Some(path) = json {
        let value = serde_json::json!({
            "cd_l1_one_sided": report.cd_l1_one_sided,
            "hd95_one_sided": report.hd95_one_sided,
            "scale_ratio": report.scale_ratio,
            "samples": report.samples,
            "seed": report.seed,
        });
        let body = serde_json::to_string_pretty(&value).map_err(io)?;
        save_text(path, &(body + "\n"))?;
    }
    Ok(())
}

pub fn errormap(cfg: &PipelineConfig, reference: &Path, recon: &Path, d_max: Option<f64>, out: &Path) -> Result<()> {
    let reference = load_mesh(reference)?;
    let recon = load_mesh(recon)?;
    let colored = error_colormap(&reference, &recon, d_max.unwrap_or(cfg.d_max))?;
    save_mesh(&out.join("errormap.ply"), &colored)
}

#[allow(clippy::too_many_arguments)]
pub fn pipeline(
    cfg: &PipelineConfig,
    command: &str,
    crown: Option<&Path>,
    full: &Path,
    model: &Path,
    reference: Option<&Path>,
    baseline: bool,
    out: &Path,
) -> Result<()> {
    let (net, latents) = load_model(model)?;
    let init = mean_latent(&latents, &net);
    let mut inputs = vec![
        RunInput::from_file("full", full)?,
        RunInput::from_file("model", model)?,
    ];
    let full_mesh = load_mesh(full)?;
    let reference_mesh = match reference {
        Some(path) => {
            inputs.push(RunInput::from_file("reference", path)?);
            Some(load_mesh(path)?)
        }
        None => None,
    };
    let result = if baseline {
        run_cbct_only(&full_mesh, &net, &init, cfg, reference_mesh.as_ref())?
    } else {
        let crown = crown.ok_or_else(|| PipelineError::Config("--crown is required unless --baseline".into()))?;
        inputs.insert(0, RunInput::from_file("crown", crown)?);
        let crown_mesh = load_mesh(crown)?;
        run_pipeline(&crown_mesh, &full_mesh, &net, &init, cfg, reference_mesh.as_ref())?
    };
    write_run_dir(out, command, &result, cfg, &inputs)?;
    print!("{}", result.report_text());
    Ok(())
}

pub fn bench(cfg: &PipelineConfig, model: Option<&Path>, out: &Path) -> Result<()> {
    let (net, latents) = match model {
        Some(path) => load_model(path)?,
        None => {
            let m = train_on_family(cfg)?;
            write_model(&out.join("model.ifsd"), &m).map_err(io)?;
            write_manifest(&out.join("model_manifest.txt"), &m).map_err(io)?;
            (m.net, m.latents)
        }
    };
    let init = mean_latent(&latents, &net);
    let mut cases = Vec::with_capacity(cfg.cohort_size);
    let mut rows = String::from(
        "seed\trot_err_deg\ttrans_err_mm\tbaseline_crown_cd\tfused_crown_cd\tbaseline_cd\tfused_cd\tbaseline_hd95\tfused_hd95\tbaseline_scale\tfused_scale\n",
    );
    for seed in 0..cfg.cohort_size as u64 {
        let c = evaluate_case(seed, &net, &init, cfg)?;
        let _ = writeln!(
            rows,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            c.seed,
            c.registration_error.0,
            c.registration_error.1,
            c.baseline_crown.cd_l1_one_sided,
            c.fused_crown.cd_l1_one_sided,
            c.baseline_reference.cd_l1_one_sided,
            c.fused_reference.cd_l1_one_sided,
            c.baseline_reference.hd95_one_sided,
            c.fused_reference.hd95_one_sided,
            c.baseline_reference.scale_ratio,
            c.fused_reference.scale_ratio,
        );
        cases.push(c);
    }
    let table = CohortSummary { cases }.table();
    save_text(&out.join("cases.tsv"), &rows)?;
    save_text(&out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}
