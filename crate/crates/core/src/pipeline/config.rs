//! Flat `key=value` configuration with dotted section prefixes.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are applied in
//! order on top of the defaults; setting `icp.levelN.voxel` also resets that
//! level's `max_distance` to twice the voxel size.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::extraction::DEFAULT_RESOLUTION;
use crate::fusion::FusionParams;
use crate::implicit::{FitConfig, SamplingConfig, SignMode, TrainConfig};
use crate::metrics::{DEFAULT_D_MAX, DEFAULT_SAMPLES};
use crate::registration::{default_schedule, IcpScheduleLevel, RansacParams};

use super::synth::SynthSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacSettings {
    pub sample_size: usize,
    pub max_iterations: usize,
    pub edge_similarity: f64,
    /// Inlier threshold as a multiple of the coarsest ICP voxel.
    pub threshold_factor: f64,
}

impl Default for RansacSettings {
    fn default() -> Self {
        let p = RansacParams::for_voxel(1.0, 0);
        Self {
            sample_size: p.sample_size,
            max_iterations: p.max_iterations,
            edge_similarity: p.edge_similarity,
            threshold_factor: p.distance_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ransac: RansacSettings,
    pub icp: Vec<IcpScheduleLevel>,
    pub fusion: FusionParams,
    /// Supervision drawn from the fitting target.
    pub sampling: SamplingConfig,
    pub sign_mode: SignMode,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub extract_resolution: usize,
    pub metric_samples: usize,
    pub d_max: f64,
    pub synth: SynthSettings,
    /// Number of shapes used by `train-sdf` when training on the synthetic family.
    pub train_shapes: usize,
    /// Number of held-out teeth in a cohort run.
    pub cohort_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ransac: RansacSettings::default(),
            icp: default_schedule(),
            fusion: FusionParams::default(),
            sampling: SamplingConfig::default(),
            sign_mode: SignMode::Pseudonormal,
            train: TrainConfig::default(),
            fit: FitConfig::default(),
            extract_resolution: DEFAULT_RESOLUTION,
            metric_samples: DEFAULT_SAMPLES,
            d_max: DEFAULT_D_MAX,
            synth: SynthSettings::default(),
            train_shapes: 24,
            cohort_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("bad value {value:?} for {key}: {e}"))
}

fn parse_skip(value: &str) -> Result<Option<usize>, String> {
    if value == "none" {
        Ok(None)
    } else {
        parse("network.skip_layer", value).map(Some)
    }
}

impl PipelineConfig {
    /// Sets every stage seed to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.fit.seed = seed;
        self
    }

    pub fn ransac_params(&self) -> RansacParams {
        let coarse = self.icp.first().map_or(1.0, |l| l.voxel);
        RansacParams {
            sample_size: self.ransac.sample_size,
            max_iterations: self.ransac.max_iterations,
            distance_threshold: self.ransac.threshold_factor * coarse,
            edge_similarity: self.ransac.edge_similarity,
            seed: self.seed,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|message| ConfigError { line: 0, message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.icp.is_empty() {
            return Err("at least one ICP level is required".into());
        }
        for l in &self.icp {
            l.validate().map_err(|e| e.to_string())?;
        }
        self.ransac_params().validate().map_err(|e| e.to_string())?;
        self.fusion.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        self.fit.validate().map_err(|e| e.to_string())?;
        if self.extract_resolution < 2 || self.metric_samples == 0 || !(self.d_max > 0.0) {
            return Err("resolution, metric sample count and d_max must be positive".into());
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if let Some(rest) = key
            .strip_prefix("icp.level")
            .filter(|r| r.starts_with(|c: char| c.is_ascii_digit()))
        {
            let (idx, field) = rest
                .split_once('.')
                .ok_or_else(|| format!("unknown key {key}"))?;
            let idx: usize = parse(key, idx)?;
            if idx >= self.icp.len() {
                return Err(format!("{key}: only {} ICP levels configured", self.icp.len()));
            }
            let level = &mut self.icp[idx];
            match field {
                "voxel" => {
                    level.voxel = parse(key, value)?;
                    level.max_distance = 2.0 * level.voxel;
                }
                "max_distance" => level.max_distance = parse(key, value)?,
                "max_iterations" => level.max_iterations = parse(key, value)?,
                _ => return Err(format!("unknown key {key}")),
            }
            return Ok(());
        }
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "ransac.sample_size" => self.ransac.sample_size = parse(key, v)?,
            "ransac.max_iterations" => self.ransac.max_iterations = parse(key, v)?,
            "ransac.edge_similarity" => self.ransac.edge_similarity = parse(key, v)?,
            "ransac.threshold_factor" => self.ransac.threshold_factor = parse(key, v)?,
            "icp.levels" => {
                let n: usize = parse(key, v)?;
                let last = self.icp.last().copied().unwrap_or_else(|| IcpScheduleLevel::new(1.0));
                self.icp.resize(n, last);
            }
            "fusion.tau" => self.fusion.tau = parse(key, v)?,
            "sampling.n_surface" => self.sampling.n_surface = parse(key, v)?,
            "sampling.n_free" => self.sampling.n_free = parse(key, v)?,
            "sampling.sigma_near" => self.sampling.sigma_near = parse(key, v)?,
            "sampling.sigma_far" => self.sampling.sigma_far = parse(key, v)?,
            "sampling.sign_mode" => self.sign_mode = parse(key, v)?,
            "network.latent_dim" => self.train.shape.latent_dim = parse(key, v)?,
            "network.width" => self.train.shape.width = parse(key, v)?,
            "network.hidden_layers" => self.train.shape.hidden_layers = parse(key, v)?,
            "network.skip_layer" => self.train.shape.skip_layer = parse_skip(v)?,
            "train.sampling.n_surface" => self.train.sampling.n_surface = parse(key, v)?,
            "train.sampling.n_free" => self.train.sampling.n_free = parse(key, v)?,
            "train.sampling.sigma_near" => self.train.sampling.sigma_near = parse(key, v)?,
            "train.sampling.sigma_far" => self.train.sampling.sigma_far = parse(key, v)?,
            "train.clamp" => self.train.clamp = parse(key, v)?,
            "train.latent_reg" => self.train.latent_reg = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.latent_learning_rate" => self.train.latent_learning_rate = parse(key, v)?,
            "train.lr_decay" => self.train.lr_decay = parse(key, v)?,
            "train.lr_decay_every" => self.train.lr_decay_every = parse(key, v)?,
            "train.warmup_steps" => self.train.warmup_steps = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.latent_init_std" => self.train.latent_init_std = parse(key, v)?,
            "train.init_radius" => self.train.init_radius = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.shapes" => self.train_shapes = parse(key, v)?,
            "fit.clamp" => self.fit.clamp = parse(key, v)?,
            "fit.latent_reg" => self.fit.latent_reg = parse(key, v)?,
            "fit.learning_rate" => self.fit.learning_rate = parse(key, v)?,
            "fit.iterations" => self.fit.iterations = parse(key, v)?,
            "fit.batch_size" => self.fit.batch_size = parse(key, v)?,
            "fit.seed" => self.fit.seed = parse(key, v)?,
            "extract.resolution" => self.extract_resolution = parse(key, v)?,
            "metrics.samples" => self.metric_samples = parse(key, v)?,
            "metrics.d_max" => self.d_max = parse(key, v)?,
            "synth.spacing" => self.synth.spacing = parse(key, v)?,
            "synth.decimation" => self.synth.decimation = parse(key, v)?,
            "synth.blur" => self.synth.blur = parse(key, v)?,
            "synth.noise_sigma" => self.synth.noise_sigma = parse(key, v)?,
            "synth.max_rotation_deg" => self.synth.max_rotation_deg = parse(key, v)?,
            "synth.max_translation" => self.synth.max_translation = parse(key, v)?,
            "cohort.size" => self.cohort_size = parse(key, v)?,
            _ => return Err(format!("unknown key {key}")),
        }
        Ok(())
    }

    /// Every setting, in an order that [`PipelineConfig::parse`] reproduces exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        let f = |x: f64| format!("{x:?}");
        kv("seed", self.seed.to_string());
        kv("ransac.sample_size", self.ransac.sample_size.to_string());
        kv("ransac.max_iterations", self.ransac.max_iterations.to_string());
        kv("ransac.edge_similarity", f(self.ransac.edge_similarity));
        kv("ransac.threshold_factor", f(self.ransac.threshold_factor));
        kv("icp.levels", self.icp.len().to_string());
        for (i, l) in self.icp.iter().enumerate() {
            kv(&format!("icp.level{i}.voxel"), f(l.voxel));
            kv(&format!("icp.level{i}.max_distance"), f(l.max_distance));
            kv(&format!("icp.level{i}.max_iterations"), l.max_iterations.to_string());
        }
        kv("fusion.tau", f(self.fusion.tau));
        kv("sampling.n_surface", self.sampling.n_surface.to_string());
        kv("sampling.n_free", self.sampling.n_free.to_string());
        kv("sampling.sigma_near", f(self.sampling.sigma_near));
        kv("sampling.sigma_far", f(self.sampling.sigma_far));
        kv("sampling.sign_mode", self.sign_mode.to_string());
        let t = &self.train;
        kv("network.latent_dim", t.shape.latent_dim.to_string());
        kv("network.width", t.shape.width.to_string());
        kv("network.hidden_layers", t.shape.hidden_layers.to_string());
        kv(
            "network.skip_layer",
            t.shape.skip_layer.map_or("none".into(), |v| v.to_string()),
        );
        kv("train.sampling.n_surface", t.sampling.n_surface.to_string());
        kv("train.sampling.n_free", t.sampling.n_free.to_string());
        kv("train.sampling.sigma_near", f(t.sampling.sigma_near));
        kv("train.sampling.sigma_far", f(t.sampling.sigma_far));
        kv("train.clamp", f(t.clamp));
        kv("train.latent_reg", f(t.latent_reg));
        kv("train.learning_rate", f(t.learning_rate));
        kv("train.latent_learning_rate", f(t.latent_learning_rate));
        kv("train.lr_decay", f(t.lr_decay));
        kv("train.lr_decay_every", t.lr_decay_every.to_string());
        kv("train.warmup_steps", t.warmup_steps.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.latent_init_std", f(t.latent_init_std));
        kv("train.init_radius", f(t.init_radius));
        kv("train.seed", t.seed.to_string());
        kv("train.shapes", self.train_shapes.to_string());
        let fc = &self.fit;
        kv("fit.clamp", f(fc.clamp));
        kv("fit.latent_reg", f(fc.latent_reg));
        kv("fit.learning_rate", f(fc.learning_rate));
        kv("fit.iterations", fc.iterations.to_string());
        kv("fit.batch_size", fc.batch_size.to_string());
        kv("fit.seed", fc.seed.to_string());
        kv("extract.resolution", self.extract_resolution.to_string());
        kv("metrics.samples", self.metric_samples.to_string());
        kv("metrics.d_max", f(self.d_max));
        kv("synth.spacing", f(self.synth.spacing));
        kv("synth.decimation", f(self.synth.decimation));
        kv("synth.blur", f(self.synth.blur));
        kv("synth.noise_sigma", f(self.synth.noise_sigma));
        kv("synth.max_rotation_deg", f(self.synth.max_rotation_deg));
        kv("synth.max_translation", f(self.synth.max_translation));
        kv("cohort.size", self.cohort_size.to_string());
        s
    }

    /// Latent-fit settings with the target sampling of this configuration.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            sampling: self.sampling,
            ..self.fit.clone()
        }
    }
}
