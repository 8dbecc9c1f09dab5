//! Fuses a high-fidelity partial crown scan with a complete but noisy full-tooth
//! surface into one watertight model.
//!
//! The stages are:
//!
//! - [`registration`]: FPFH + RANSAC coarse alignment, then multi-scale
//!   point-to-plane ICP, mapping the full tooth into the crown frame.
//! - [`fusion`]: root isolation by distance to the crown and a naive union,
//!   the hybrid proxy.
//! - [`implicit`]: an auto-decoder signed-distance network; the proxy is
//!   projected onto the learned shape space by fitting a latent code.
//! - [`extraction`]: marching cubes on the fitted field.
//! - [`metrics`]: one-sided Chamfer-L1, HD95, scale ratio and error maps.
//! - [`pipeline`]: configuration, synthetic teeth, and the end-to-end runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod extraction;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod implicit;
pub mod metrics;
pub mod pipeline;
pub mod registration;

pub use geometry::{GeometryError, PointCloud, RigidTransform, TriMesh};
