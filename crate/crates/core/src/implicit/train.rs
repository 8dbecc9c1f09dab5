//! Auto-decoder training and latent-code fitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::loss::{loss_and_gradients, Adam};
use super::network::{NetworkShape, SdfNetwork};
use super::{sanitize_samples, ImplicitError, LatentCode, SamplingConfig, SdfModel, SdfSample};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub shape: NetworkShape,
    pub sampling: SamplingConfig,
    pub clamp: f64,
    pub latent_reg: f64,
    pub learning_rate: f64,
    pub latent_learning_rate: f64,
    /// Learning rates are multiplied by `lr_decay` every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Optimizer steps over which step sizes ramp linearly up from zero.
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_init_std: f64,
    /// Radius of the sphere the untrained network represents.
    pub init_radius: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            shape: NetworkShape::default(),
            sampling: SamplingConfig::default(),
            clamp: 0.1,
            latent_reg: 1e-4,
            learning_rate: 1e-3,
            latent_learning_rate: 1e-3,
            lr_decay: 0.5,
            lr_decay_every: 5,
            warmup_steps: 500,
            epochs: 20,
            batch_size: 1024,
            latent_init_std: 0.01,
            init_radius: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ImplicitError> {
        self.shape.validate().map_err(ImplicitError::InvalidConfig)?;
        if !(self.clamp > 0.0) {
            return Err(ImplicitError::InvalidConfig("clamp must be positive".into()));
        }
        if !(self.latent_reg >= 0.0 && self.learning_rate >= 0.0 && self.latent_learning_rate >= 0.0) {
            return Err(ImplicitError::InvalidConfig(
                "weights and learning rates must be non-negative".into(),
            ));
        }
        if self.batch_size == 0 || self.lr_decay_every == 0 {
            return Err(ImplicitError::InvalidConfig("batch size and decay period must be positive".into()));
        }
        Ok(())
    }

    fn rate_at(&self, base: f64, epoch: usize, step: usize) -> f64 {
        let warm = if step < self.warmup_steps {
            (step + 1) as f64 / self.warmup_steps as f64
        } else {
            1.0
        };
        base * warm * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub sampling: SamplingConfig,
    pub clamp: f64,
    pub latent_reg: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Size of the fixed random subset of samples the fit runs on.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            clamp: 0.1,
            latent_reg: 1e-2,
            learning_rate: 5e-3,
            iterations: 400,
            batch_size: 2048,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ImplicitError> {
        if !(self.clamp > 0.0) {
            return Err(ImplicitError::InvalidConfig("clamp must be positive".into()));
        }
        if !(self.latent_reg >= 0.0 && self.learning_rate >= 0.0) || self.batch_size == 0 {
            return Err(ImplicitError::InvalidConfig("invalid fit parameters".into()));
        }
        Ok(())
    }
}

/// Jointly optimizes the network and one latent code per shape.
///
/// Every epoch visits each shape's samples once, in minibatches drawn from a
/// seeded shuffle; the minibatches of all shapes are interleaved.
pub fn train_auto_decoder(shapes: &[Vec<SdfSample>], cfg: &TrainConfig) -> Result<SdfModel, ImplicitError> {
    cfg.validate()?;
    if shapes.len() < 2 {
        return Err(ImplicitError::InvalidConfig("training needs at least two shapes".into()));
    }
    let shapes: Vec<Vec<SdfSample>> = shapes.iter().map(|s| sanitize_samples(s)).collect();
    if shapes.iter().any(|s| s.is_empty()) {
        return Err(ImplicitError::InvalidConfig("a training shape has no samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = SdfNetwork::geometric_init(cfg.shape, cfg.init_radius, cfg.seed);
    let init = Normal::new(0.0, cfg.latent_init_std).map_err(|e| ImplicitError::InvalidConfig(e.to_string()))?;
    let d = cfg.shape.latent_dim;
    let mut latents: Vec<LatentCode> = (0..shapes.len())
        .map(|_| LatentCode((0..d).map(|_| init.sample(&mut rng) as f32).collect()))
        .collect();
    let mut net_opt = Adam::new(net.param_count(), cfg.learning_rate);
    let mut latent_opts: Vec<Adam<f32>> = (0..shapes.len())
        .map(|_| Adam::new(d, cfg.latent_learning_rate))
        .collect();

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut work: Vec<(usize, Vec<usize>)> = Vec::new();
        for (k, samples) in shapes.iter().enumerate() {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                work.push((k, chunk.to_vec()));
            }
        }
        work.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (k, idx) in &work {
            batch.clear();
            batch.extend(idx.iter().map(|&i| shapes[*k][i]));
            let out = loss_and_gradients(&net, &latents[*k].0, &batch, cfg.clamp, cfg.latent_reg, true);
            if !out.loss.is_finite() {
                return Err(ImplicitError::Diverged { iteration: epoch });
            }
            epoch_loss += out.loss;
            net_opt.learning_rate = cfg.rate_at(cfg.learning_rate, epoch, step);
            latent_opts[*k].learning_rate = cfg.rate_at(cfg.latent_learning_rate, epoch, step);
            step += 1;
            net_opt.step(&mut net.params, out.grad_params.as_deref().unwrap());
            latent_opts[*k].step(&mut latents[*k].0, &out.grad_z);
        }
        let mean = epoch_loss / work.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
        if !net.is_finite() {
            return Err(ImplicitError::Diverged { iteration: epoch });
        }
    }
    Ok(SdfModel {
        net,
        latents,
        train: cfg.clone(),
        loss_trace: trace,
    })
}

/// Result of fitting a latent code to one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// The iterate with the lowest loss.
    pub z: LatentCode,
    pub best_loss: f64,
    pub best_iteration: usize,
    /// Loss of every iterate, starting with the initialization.
    pub trace: Vec<f64>,
}

/// Fixed subset of at most `n` samples, in original order.
pub fn sample_subset(samples: &[SdfSample], n: usize, seed: u64) -> Vec<SdfSample> {
    if samples.len() <= n {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| samples[i]).collect()
}

/// Optimizes only the latent code, starting from `init`, with the network frozen.
pub fn optimize_latent(
    net: &SdfNetwork,
    init: &LatentCode,
    samples: &[SdfSample],
    cfg: &FitConfig,
) -> Result<FitResult, ImplicitError> {
    cfg.validate()?;
    if init.dim() != net.latent_dim() {
        return Err(ImplicitError::InvalidConfig(format!(
            "latent has {} entries, network expects {}",
            init.dim(),
            net.latent_dim()
        )));
    }
    let clean = sanitize_samples(samples);
    let subset = sample_subset(&clean, cfg.batch_size, cfg.seed);
    let mut z = init.clone();
    let mut opt = Adam::new(z.dim(), cfg.learning_rate);
    let mut best = (f64::INFINITY, z.clone(), 0);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let out = loss_and_gradients(net, &z.0, &subset, cfg.clamp, cfg.latent_reg, false);
        if !out.loss.is_finite() {
            return Err(ImplicitError::Diverged { iteration: it });
        }
        trace.push(out.loss);
        if out.loss < best.0 {
            best = (out.loss, z.clone(), it);
        }
        if it == cfg.iterations {
            break;
        }
        opt.step(&mut z.0, &out.grad_z);
    }
    Ok(FitResult {
        z: best.1,
        best_loss: best.0,
        best_iteration: best.2,
        trace,
    })
}
