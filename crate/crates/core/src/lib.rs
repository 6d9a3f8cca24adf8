//! Inverse rendering from a vertically aligned 360° stereo pair.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`stereo`]: vertical block matching and depth by angular triangulation.
//! * [`envlight`]: the per-pixel point-light field and illumination maps
//!   reconstructed at arbitrary 3D points.
//! * [`geometry`]: normals from depth and reflectance initialization.
//! * [`render`]: diffuse shading from illumination maps and mirror probes.
//! * [`refine`]: joint total-variation refinement of reflectance and shading.
//! * [`metrics`]: sMSE, angular error, PSNR and the scale-invariant losses.
//! * [`synth`]: analytic box rooms with exact ground truth.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decompose;
pub mod envlight;
pub mod equirect;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nearest;
pub mod refine;
pub mod render;
pub mod stereo;
pub mod synth;

pub use crate::equirect::{CameraRig, SampleMode, SphereDir, Vec3};
pub use crate::error::{PanoError, Result};
pub use crate::image::{Dims, EquirectImage, Mask};
