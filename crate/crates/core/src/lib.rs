//! Feed-forward 4D Gaussian scene engine for multi-camera driving sequences.
//!
//! Per-pixel Gaussians are built from images, depth and raw attribute maps,
//! given instance velocities, fused across adjacent context frames into
//! time-conditioned segments and splatted on the CPU. The [`photo`] module
//! holds the self-supervised warp loss and image metrics; [`synth`] provides
//! analytic scenes with exact ground truth.

// NaN must fail range checks, so `!(a < b)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod build;
pub mod dynamics;
pub mod error;
pub mod fuse;
pub mod gauss;
pub mod geom;
pub mod io;
pub mod photo;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod sh;
pub mod synth;

pub use error::{Error, Result};
pub use gauss::{Gaussian4D, Scene4D, SceneSegment};
pub use geom::{CameraEntry, CameraRig, EgoPose, Intrinsics, SE3};
pub use raster::{DepthMap, Image, InstanceMask, Raster};
