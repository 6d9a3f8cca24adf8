//! Surface normals from depth and reflectance initialization.
//!
//! These are classical stand-ins for a learned reflectance/normal model; any
//! such model plugs in through [`IntrinsicEstimator`].

use crate::equirect::{CameraRig, DirectionTable, Vec3};
use crate::error::{PanoError, Result};
use crate::image::{Dims, EquirectImage, Mask};
use crate::nearest::nearest_sources;
use crate::stereo::DepthMap;

/// Relative depth change between a pixel and a stencil neighbor above which
/// the stencil is taken to straddle an occlusion edge.
pub const DEPTH_JUMP: f64 = 0.2;
/// Shading floor used when dividing the image by shading.
pub const SHADING_EPS: f64 = 1e-3;
/// Upper clamp for initialized reflectance.
pub const REFLECTANCE_MAX: f64 = 4.0;

/// Unit normals in the reference frame, oriented toward the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub normals: EquirectImage,
    /// Pixels whose normal came from their own stencil. Others were copied
    /// from the nearest valid pixel.
    pub valid: Mask,
}

impl NormalMap {
    pub fn dims(&self) -> Dims {
        self.normals.dims()
    }

    #[inline]
    pub fn normal(&self, pixel: usize) -> Vec3 {
        let n = self.normals.at(pixel);
        Vec3::new(n[0], n[1], n[2])
    }

    /// Wraps a 3-channel image of unit vectors, all marked valid.
    pub fn from_image(normals: EquirectImage) -> Result<Self> {
        if normals.channels() != 3 {
            return Err(PanoError::domain("normal maps have 3 channels"));
        }
        let valid = Mask::new(normals.dims(), true);
        Ok(NormalMap { normals, valid })
    }
}

/// Per-pixel normals from a dense depth map.
///
/// The 4-neighborhood is lifted to 3D (`depth · ray`); the normal is the
/// normalized cross product of the horizontal and vertical central
/// differences (azimuth wraps, pole rows fall back to one-sided
/// differences), flipped to face the camera. Stencils spanning a relative
/// depth jump above [`DEPTH_JUMP`] are invalid and filled from the nearest
/// valid pixel.
pub fn normals_from_depth(depth: &DepthMap, _rig: &CameraRig) -> Result<NormalMap> {
    let dims = depth.dims();
    if let Some(p) = depth.values.data().iter().position(|&d| !(d > 0.0)) {
        return Err(PanoError::domain(format!(
            "normals need dense positive depth, pixel {p} is {}",
            depth.values.data()[p]
        )));
    }
    let table = DirectionTable::new(dims);
    let pts = depth.points(&table);
    let d = depth.values.data();
    let (h, w) = (dims.height, dims.width);
    let mut normals = vec![0.0; dims.len() * 3];
    let mut valid = vec![false; dims.len()];
    for v in 0..h {
        for u in 0..w {
            let p = v * w + u;
            let left = dims.index(dims.wrap_u(u as isize - 1), v);
            let right = dims.index(dims.wrap_u(u as isize + 1), v);
            let up = dims.index(u, dims.clamp_v(v as isize - 1));
            let down = dims.index(u, dims.clamp_v(v as isize + 1));
            let jump = [left, right, up, down]
                .iter()
                .any(|&q| (d[q] - d[p]).abs() > DEPTH_JUMP * d[p]);
            if jump {
                continue;
            }
            let tu = pts[right] - pts[left];
            let tv = pts[down] - pts[up];
            let mut n = tu.cross(&tv);
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                continue;
            }
            n /= len;
            if n.dot(&pts[p]) > 0.0 {
                n = -n;
            }
            normals[3 * p..3 * p + 3].copy_from_slice(n.as_slice());
            valid[p] = true;
        }
    }
    let src = nearest_sources(&table, &valid)
        .map_err(|_| PanoError::domain("no pixel has a valid normal stencil"))?;
    for (p, &s) in src.iter().enumerate() {
        if s != p {
            let n: [f64; 3] = normals[3 * s..3 * s + 3].try_into().unwrap();
            normals[3 * p..3 * p + 3].copy_from_slice(&n);
        }
    }
    Ok(NormalMap {
        normals: EquirectImage::from_vec(dims, 3, normals)?,
        valid: Mask::from_vec(dims, valid)?,
    })
}

/// `R = I / max(S, SHADING_EPS)` per channel, clamped to `[0, REFLECTANCE_MAX]`.
pub fn reflectance_init(img: &EquirectImage, shading: &EquirectImage) -> Result<EquirectImage> {
    img.same_shape(shading)?;
    let data = img
        .data()
        .iter()
        .zip(shading.data())
        .map(|(&i, &s)| (i / s.max(SHADING_EPS)).clamp(0.0, REFLECTANCE_MAX))
        .collect();
    EquirectImage::from_vec(img.dims(), img.channels(), data)
}

/// Reflectance, normals and (when the estimator produces it) shading for
/// one panorama.
#[derive(Clone, Debug)]
pub struct Intrinsics {
    pub reflectance: EquirectImage,
    pub normals: NormalMap,
    pub shading: Option<EquirectImage>,
}

/// The seam where a reflectance/normal estimator plugs into the pipeline:
/// it sees the reference image and its (dense) depth.
pub trait IntrinsicEstimator {
    fn estimate(&self, image: &EquirectImage, depth: &DepthMap) -> Result<Intrinsics>;
}
