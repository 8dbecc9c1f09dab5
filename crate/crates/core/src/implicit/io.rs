//! Binary model and latent files.
//!
//! Model layout, all little endian:
//! `b"IFSD"`, `u32` version, `u32` latent_dim, `u32` hidden_layers, `u32` width,
//! `i32` skip layer (`-1` for none), `u64` parameter count, `f32` parameters,
//! `u32` shape count, then `shape count × latent_dim` `f32` latents.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::{ImplicitError, LatentCode, NetworkShape, SdfModel, SdfNetwork};

pub const MODEL_MAGIC: [u8; 4] = *b"IFSD";
pub const MODEL_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ImplicitError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ImplicitError::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ImplicitError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, ImplicitError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ImplicitError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ImplicitError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| ImplicitError::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn encode_model(net: &SdfNetwork, latents: &[LatentCode]) -> Vec<u8> {
    let shape = net.shape();
    let mut out = Vec::with_capacity(32 + 4 * (net.param_count() + latents.len() * shape.latent_dim));
    out.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    put_u32(&mut out, shape.latent_dim as u32);
    put_u32(&mut out, shape.hidden_layers as u32);
    put_u32(&mut out, shape.width as u32);
    out.extend_from_slice(&shape.skip_layer.map_or(-1, |s| s as i32).to_le_bytes());
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    put_f32s(&mut out, &net.params);
    put_u32(&mut out, latents.len() as u32);
    for z in latents {
        assert_eq!(z.dim(), shape.latent_dim);
        put_f32s(&mut out, &z.0);
    }
    out
}

pub fn decode_model(buf: &[u8]) -> Result<(SdfNetwork, Vec<LatentCode>), ImplicitError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(ImplicitError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ImplicitError::Format(format!("unsupported version {version}")));
    }
    let latent_dim = r.u32()? as usize;
    let hidden_layers = r.u32()? as usize;
    let width = r.u32()? as usize;
    let skip = r.i32()?;
    let shape = NetworkShape {
        latent_dim,
        width,
        hidden_layers,
        skip_layer: if skip < 0 { None } else { Some(skip as usize) },
    };
    shape.validate().map_err(ImplicitError::Format)?;
    let count = r.u64()? as usize;
    if count != shape.param_count() {
        return Err(ImplicitError::Format(format!(
            "parameter count {count} does not match architecture ({})",
            shape.param_count()
        )));
    }
    let params = r.f32s(count)?;
    let net = SdfNetwork::from_params(shape, params).map_err(ImplicitError::Format)?;
    let shapes = r.u32()? as usize;
    let mut latents = Vec::with_capacity(shapes.min(1 << 16));
    for _ in 0..shapes {
        latents.push(LatentCode(r.f32s(latent_dim)?));
    }
    if r.pos != buf.len() {
        return Err(ImplicitError::Format("trailing bytes".into()));
    }
    Ok((net, latents))
}

pub fn write_model(path: &Path, model: &SdfModel) -> Result<(), ImplicitError> {
    std::fs::write(path, encode_model(&model.net, &model.latents))?;
    Ok(())
}

/// Reads the decoder and latent table. Training settings live in the manifest.
pub fn read_model(path: &Path) -> Result<(SdfNetwork, Vec<LatentCode>), ImplicitError> {
    decode_model(&std::fs::read(path)?)
}

/// Human-readable `key=value` description of how a model was trained.
pub fn manifest_text(model: &SdfModel) -> String {
    let c = &model.train;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("format", format!("IFSD v{MODEL_VERSION}"));
    kv("seed", c.seed.to_string());
    kv("shapes", model.latents.len().to_string());
    kv("network.latent_dim", c.shape.latent_dim.to_string());
    kv("network.width", c.shape.width.to_string());
    kv("network.hidden_layers", c.shape.hidden_layers.to_string());
    kv(
        "network.skip_layer",
        c.shape.skip_layer.map_or("none".into(), |v| v.to_string()),
    );
    kv("network.params", model.net.param_count().to_string());
    kv("sampling.n_surface", c.sampling.n_surface.to_string());
    kv("sampling.n_free", c.sampling.n_free.to_string());
    kv("sampling.sigma_near", format!("{:?}", c.sampling.sigma_near));
    kv("sampling.sigma_far", format!("{:?}", c.sampling.sigma_far));
    kv("train.clamp", format!("{:?}", c.clamp));
    kv("train.latent_reg", format!("{:?}", c.latent_reg));
    kv("train.learning_rate", format!("{:?}", c.learning_rate));
    kv("train.latent_learning_rate", format!("{:?}", c.latent_learning_rate));
    kv("train.lr_decay", format!("{:?}", c.lr_decay));
    kv("train.lr_decay_every", c.lr_decay_every.to_string());
    kv("train.epochs", c.epochs.to_string());
    kv("train.batch_size", c.batch_size.to_string());
    kv("train.latent_init_std", format!("{:?}", c.latent_init_std));
    kv("train.init_radius", format!("{:?}", c.init_radius));
    for (i, l) in model.loss_trace.iter().enumerate() {
        kv(&format!("loss.{i}"), format!("{l:?}"));
    }
    s
}

pub fn write_manifest(path: &Path, model: &SdfModel) -> Result<(), ImplicitError> {
    std::fs::write(path, manifest_text(model))?;
    Ok(())
}

/// `u32` dimension followed by `f32` entries.
pub fn write_latent(path: &Path, z: &LatentCode) -> Result<(), ImplicitError> {
    let mut out = Vec::with_capacity(4 + 4 * z.dim());
    put_u32(&mut out, z.dim() as u32);
    put_f32s(&mut out, &z.0);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_latent(path: &Path) -> Result<LatentCode, ImplicitError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let d = r.u32()? as usize;
    let z = r.f32s(d)?;
    if r.pos != buf.len() {
        return Err(ImplicitError::Format("trailing bytes".into()));
    }
    Ok(LatentCode(z))
}
