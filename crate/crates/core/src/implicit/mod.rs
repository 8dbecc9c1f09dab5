//! Latent-conditioned signed distance functions: supervision, the network,
//! auto-decoder training, latent fitting and model persistence.

mod io;
mod loss;
mod network;
mod sdf;
mod train;

use nalgebra::Point3;
use thiserror::Error;

use crate::geometry::GeometryError;

pub use io::{
    decode_model, encode_model, manifest_text, read_latent, read_model, write_latent, write_manifest, write_model,
    MODEL_MAGIC, MODEL_VERSION,
};
pub use loss::{loss_and_gradients, Adam, LossOutput, LOSS_CHUNK};
pub use network::{input_rows, ForwardCache, LayerSpec, Mlp, NetworkShape, Real, SdfNetwork};
pub use sdf::{
    normalize_shape, sample_sdf, sanitize_samples, signed_distance, NormalizationInfo, SamplingConfig, SdfOracle,
    SdfSample, SignMode, MAX_SAMPLE_RADIUS, NORMALIZED_MARGIN,
};
pub use train::{optimize_latent, sample_subset, train_auto_decoder, FitConfig, FitResult, TrainConfig};

#[derive(Debug, Error)]
pub enum ImplicitError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mesh is not watertight ({0} boundary edges)")]
    NotWatertight(usize),
    #[error("optimization diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed model data: {0}")]
    Format(String),
}

impl From<std::io::Error> for ImplicitError {
    fn from(e: std::io::Error) -> Self {
        ImplicitError::Io(e.to_string())
    }
}

/// Shape code fed to the decoder alongside each query point.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(pub Vec<f32>);

impl LatentCode {
    pub fn zeros(dim: usize) -> Self {
        LatentCode(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Component-wise mean; `None` for an empty set or mismatched dimensions.
    pub fn mean(codes: &[LatentCode]) -> Option<LatentCode> {
        let d = codes.first()?.dim();
        if codes.iter().any(|c| c.dim() != d) {
            return None;
        }
        let mut acc = vec![0.0f64; d];
        for c in codes {
            for (a, &v) in acc.iter_mut().zip(&c.0) {
                *a += v as f64;
            }
        }
        let n = codes.len() as f64;
        Some(LatentCode(acc.into_iter().map(|v| (v / n) as f32).collect()))
    }
}

/// A decoder with a fixed latent code, evaluated at normalized positions.
#[derive(Debug, Clone, Copy)]
pub struct LatentField<'a> {
    pub net: &'a SdfNetwork,
    pub z: &'a LatentCode,
}

impl<'a> LatentField<'a> {
    pub fn new(net: &'a SdfNetwork, z: &'a LatentCode) -> Self {
        assert_eq!(net.latent_dim(), z.dim(), "latent dimension mismatch");
        Self { net, z }
    }

    pub fn evaluate_points(&self, points: &[Point3<f64>]) -> Vec<f64> {
        let pos: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let input = input_rows(&self.z.0, &pos);
        self.net.forward(&input, pos.len()).into_iter().map(f64::from).collect()
    }
}

/// A trained decoder together with the latent codes of its training shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfModel {
    pub net: SdfNetwork,
    pub latents: Vec<LatentCode>,
    pub train: TrainConfig,
    /// Mean loss per epoch.
    pub loss_trace: Vec<f64>,
}

impl SdfModel {
    pub fn mean_latent(&self) -> LatentCode {
        LatentCode::mean(&self.latents).unwrap_or_else(|| LatentCode::zeros(self.net.latent_dim()))
    }
}
