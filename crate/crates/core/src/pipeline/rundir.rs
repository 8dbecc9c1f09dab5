//! Run directory layout and small text formats.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix4;
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PipelineError, PipelineOutput};
use crate::geometry::{write_mesh, RigidTransform};
use crate::implicit::write_latent;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Four rows of the homogeneous matrix, shortest round-trip decimal form.
pub fn transform_to_text(t: &RigidTransform) -> String {
    let m = t.to_homogeneous();
    let mut s = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| format!("{:?}", m[(r, c)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn transform_from_text(text: &str) -> Result<RigidTransform, PipelineError> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| PipelineError::Io(format!("bad number {v:?} in transform"))))
        .collect::<Result<_, _>>()?;
    if values.len() != 16 {
        return Err(PipelineError::Io(format!("transform needs 16 numbers, got {}", values.len())));
    }
    let m = Matrix4::from_row_slice(&values);
    RigidTransform::from_homogeneous(&m).map_err(|e| PipelineError::Io(e.to_string()))
}

/// An input file recorded in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInput {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

impl RunInput {
    pub fn from_file(name: &str, path: &Path) -> Result<Self, PipelineError> {
        Ok(Self {
            name: name.into(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Writes `T.txt`, `H.ply`, `z_star.bin`, `S.ply`, `report.txt` and
/// `manifest.txt`. The baseline run has no transform or proxy, so those two
/// files are omitted for it.
///
/// The manifest is a valid config file: inputs are listed as comments.
pub fn write_run_dir(
    dir: &Path,
    command: &str,
    out: &PipelineOutput,
    cfg: &PipelineConfig,
    inputs: &[RunInput],
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    let io = |e: crate::geometry::GeometryError| PipelineError::Io(e.to_string());
    if out.registration.is_some() {
        write(&dir.join("T.txt"), &transform_to_text(&out.transform))?;
        write_mesh(dir.join("H.ply"), &out.target).map_err(io)?;
    }
    write_latent(&dir.join("z_star.bin"), &out.fit.z).map_err(|e| PipelineError::Io(e.to_string()))?;
    write_mesh(dir.join("S.ply"), out.surface()).map_err(io)?;
    write(&dir.join("report.txt"), &out.report_text())?;
    write(&dir.join("manifest.txt"), &manifest_text(command, cfg, inputs))?;
    Ok(())
}

pub fn manifest_text(command: &str, cfg: &PipelineConfig, inputs: &[RunInput]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# command: {command}");
    for i in inputs {
        let _ = writeln!(s, "# input {}: {} sha256={}", i.name, i.path, i.sha256);
    }
    s.push_str(&cfg.to_text());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn transform_text_is_exact() {
        let t = RigidTransform::from_axis_angle(&Vector3::new(0.3, -1.0, 0.2), 0.7, Vector3::new(1.0 / 3.0, -2.5, 1e-17));
        let back = transform_from_text(&transform_to_text(&t)).unwrap();
        assert_eq!(back.to_homogeneous(), t.to_homogeneous());
        assert!(transform_from_text("1 2 3").is_err());
    }

    #[test]
    fn manifest_parses_as_config() {
        let cfg = PipelineConfig::default().with_seed(5);
        let inputs = [RunInput {
            name: "crown".into(),
            path: "c.ply".into(),
            sha256: sha256_hex(b""),
        }];
        let text = manifest_text("pipeline", &cfg, &inputs);
        assert!(text.contains("# input crown: c.ply sha256=e3b0c442"));
        assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
    }
}
