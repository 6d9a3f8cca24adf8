//! Equirectangular conventions.
//!
//! The reference (top) camera sits at the origin with +Y pointing to the
//! zenith. Row `v = 0` is the zenith row and pixel centers sit at integer
//! coordinates, so the polar angle from the zenith and the azimuth of a
//! continuous coordinate `(u, v)` are
//!
//! ```text
//! ϑ(v) = π (v + 0.5) / H
//! φ(u) = 2π (u + 0.5) / W
//! dir  = (sin ϑ cos φ, cos ϑ, sin ϑ sin φ)
//! ```

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{PanoError, Result};
use crate::image::{Dims, EquirectImage};

pub type Vec3 = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Unit direction in the reference camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereDir(Vec3);

impl SphereDir {
    /// Wraps a vector that must already be unit length (within 1e-9).
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(PanoError::domain(format!(
                "direction must be unit length, |d| = {n}"
            )));
        }
        Ok(SphereDir(v))
    }

    /// Normalizes `v`; fails for zero or non-finite vectors.
    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(PanoError::domain(
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(SphereDir(v / n))
    }

    #[inline]
    pub fn vec(&self) -> Vec3 {
        self.0
    }

    /// Polar angle from the zenith.
    #[inline]
    pub fn polar(&self) -> f64 {
        self.0.y.clamp(-1.0, 1.0).acos()
    }

    /// Azimuth in `[0, 2π)`.
    #[inline]
    pub fn azimuth(&self) -> f64 {
        let phi = self.0.z.atan2(self.0.x);
        if phi < 0.0 {
            phi + TAU
        } else {
            phi
        }
    }
}

impl std::ops::Deref for SphereDir {
    type Target = Vec3;

    fn deref(&self) -> &Vec3 {
        &self.0
    }
}

/// Top/bottom stereo rig. The reference is always the top camera; the bottom
/// camera sits at `(0, -baseline, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    baseline: f64,
}

impl CameraRig {
    pub fn new(baseline: f64) -> Result<Self> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(PanoError::domain(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        Ok(CameraRig { baseline })
    }

    #[inline]
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn bottom_center(&self) -> Vec3 {
        Vec3::new(0.0, -self.baseline, 0.0)
    }
}

#[inline]
pub fn polar_of_row(v: f64, height: usize) -> f64 {
    PI * (v + 0.5) / height as f64
}

#[inline]
pub fn azimuth_of_col(u: f64, width: usize) -> f64 {
    TAU * (u + 0.5) / width as f64
}

#[inline]
pub fn dir_from_angles(polar: f64, azimuth: f64) -> Vec3 {
    let (st, ct) = polar.sin_cos();
    let (sp, cp) = azimuth.sin_cos();
    Vec3::new(st * cp, ct, st * sp)
}

/// Continuous pixel coordinate to unit direction. Accepts the full pixel
/// footprint `u ∈ [-0.5, W)`, `v ∈ [-0.5, H - 0.5]`.
pub fn pixel_to_dir(u: f64, v: f64, dims: Dims) -> Result<SphereDir> {
    let (h, w) = (dims.height as f64, dims.width as f64);
    if !(u >= -0.5 && u < w && v >= -0.5 && v <= h - 0.5) {
        return Err(PanoError::domain(format!(
            "pixel ({u}, {v}) outside {dims} image"
        )));
    }
    Ok(SphereDir(dir_from_angles(
        polar_of_row(v, dims.height),
        azimuth_of_col(u, dims.width),
    )))
}

/// Unit direction to continuous pixel coordinate. `u` wraps into `[0, W)`;
/// `v` is clamped to `[0, H - 1]`, so both poles land on the first or last
/// row with an arbitrary column.
pub fn dir_to_pixel(d: &SphereDir, dims: Dims) -> (f64, f64) {
    dir_to_pixel_raw(&d.0, dims)
}

#[inline]
pub(crate) fn dir_to_pixel_raw(d: &Vec3, dims: Dims) -> (f64, f64) {
    let (h, w) = (dims.height as f64, dims.width as f64);
    // atan2 form stays accurate near the poles and accepts unnormalized input.
    let polar = (d.x * d.x + d.z * d.z).sqrt().atan2(d.y);
    let azimuth = d.z.atan2(d.x);
    let v = (polar * h / PI - 0.5).clamp(0.0, h - 1.0);
    let mut u = azimuth * w / TAU - 0.5;
    if u < 0.0 {
        u += w;
    }
    if u >= w {
        u -= w;
    }
    (u, v)
}

/// Nearest pixel index of a (not necessarily normalized) direction.
#[inline]
pub(crate) fn nearest_pixel(d: &Vec3, dims: Dims) -> usize {
    let (u, v) = dir_to_pixel_raw(d, dims);
    let ui = dims.wrap_u(u.round() as isize);
    let vi = dims.clamp_v(v.round() as isize);
    dims.index(ui, vi)
}

/// Solid angle of any pixel in row `v`: `(2π/W)(π/H) sin ϑ(v)`.
pub fn pixel_solid_angle(v: usize, dims: Dims) -> f64 {
    debug_assert!(v < dims.height);
    (TAU / dims.width as f64)
        * (PI / dims.height as f64)
        * polar_of_row(v as f64, dims.height).sin()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Nearest,
    Bilinear,
}

/// Samples `img` at a continuous coordinate. Columns wrap across the azimuth
/// seam, rows clamp at the poles.
pub fn sample(img: &EquirectImage, u: f64, v: f64, mode: SampleMode) -> Vec<f64> {
    let mut out = vec![0.0; img.channels()];
    sample_into(img, u, v, mode, &mut out);
    out
}

pub fn sample_into(img: &EquirectImage, u: f64, v: f64, mode: SampleMode, out: &mut [f64]) {
    let dims = img.dims();
    match mode {
        SampleMode::Nearest => {
            let ui = dims.wrap_u(u.round() as isize);
            let vi = dims.clamp_v(v.round() as isize);
            out.copy_from_slice(img.pixel(ui, vi));
        }
        SampleMode::Bilinear => {
            let v = v.clamp(0.0, (dims.height - 1) as f64);
            let u0 = u.floor();
            let v0 = v.floor();
            let fu = u - u0;
            let fv = v - v0;
            let ua = dims.wrap_u(u0 as isize);
            let ub = dims.wrap_u(u0 as isize + 1);
            let va = v0 as usize;
            let vb = dims.clamp_v(v0 as isize + 1);
            let (p00, p10) = (img.pixel(ua, va), img.pixel(ub, va));
            let (p01, p11) = (img.pixel(ua, vb), img.pixel(ub, vb));
            for c in 0..out.len() {
                let top = p00[c] + fu * (p10[c] - p00[c]);
                let bottom = p01[c] + fu * (p11[c] - p01[c]);
                out[c] = top + fv * (bottom - top);
            }
        }
    }
}

/// Samples along a direction.
pub fn sample_dir(img: &EquirectImage, d: &SphereDir, mode: SampleMode) -> Vec<f64> {
    let (u, v) = dir_to_pixel(d, img.dims());
    sample(img, u, v, mode)
}

/// Pixel-center directions and solid angles of a grid, computed once and
/// shared by the per-pixel kernels.
#[derive(Clone, Debug)]
pub struct DirectionTable {
    dims: Dims,
    dirs: Vec<Vec3>,
    row_solid_angle: Vec<f64>,
    row_polar: Vec<f64>,
}

impl DirectionTable {
    pub fn new(dims: Dims) -> Self {
        let mut dirs = Vec::with_capacity(dims.len());
        for v in 0..dims.height {
            let polar = polar_of_row(v as f64, dims.height);
            for u in 0..dims.width {
                dirs.push(dir_from_angles(polar, azimuth_of_col(u as f64, dims.width)));
            }
        }
        DirectionTable {
            dims,
            dirs,
            row_solid_angle: (0..dims.height)
                .map(|v| pixel_solid_angle(v, dims))
                .collect(),
            row_polar: (0..dims.height)
                .map(|v| polar_of_row(v as f64, dims.height))
                .collect(),
        }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn dir(&self, pixel: usize) -> Vec3 {
        self.dirs[pixel]
    }

    #[inline]
    pub fn dirs(&self) -> &[Vec3] {
        &self.dirs
    }

    #[inline]
    pub fn solid_angle(&self, pixel: usize) -> f64 {
        self.row_solid_angle[pixel / self.dims.width]
    }

    #[inline]
    pub fn row_solid_angle(&self, v: usize) -> f64 {
        self.row_solid_angle[v]
    }

    #[inline]
    pub fn row_polar(&self, v: usize) -> f64 {
        self.row_polar[v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims512() -> Dims {
        Dims::new(512, 1024).unwrap()
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn mid_image_is_horizon_at_pi() {
        let d = pixel_to_dir(511.5, 255.5, dims512()).unwrap();
        assert!(close(d.vec(), Vec3::new(-1.0, 0.0, 0.0), 1e-12));
    }

    #[test]
    fn top_edge_is_zenith() {
        let d = pixel_to_dir(10.0, -0.5, dims512()).unwrap();
        assert!(close(d.vec(), Vec3::new(0.0, 1.0, 0.0), 1e-12));
    }

    #[test]
    fn quarter_pixel_hand_value() {
        let d = pixel_to_dir(255.5, 127.5, dims512()).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!(close(d.vec(), Vec3::new(0.0, h, h), 1e-12));
    }

    #[test]
    fn out_of_range_is_domain_error() {
        assert!(pixel_to_dir(-0.6, 3.0, dims512()).is_err());
        assert!(pixel_to_dir(1024.0, 3.0, dims512()).is_err());
        assert!(pixel_to_dir(3.0, 511.6, dims512()).is_err());
        assert!(pixel_to_dir(f64::NAN, 3.0, dims512()).is_err());
    }

    #[test]
    fn inverse_mapping_examples() {
        let (u, v) = dir_to_pixel(
            &SphereDir::new(Vec3::new(-1.0, 0.0, 0.0)).unwrap(),
            dims512(),
        );
        assert!((u - 511.5).abs() < 1e-9 && (v - 255.5).abs() < 1e-9);
        let (_, v) = dir_to_pixel(&SphereDir::new(Vec3::y()).unwrap(), dims512());
        assert_eq!(v, 0.0);
        let (_, v) = dir_to_pixel(&SphereDir::new(-Vec3::y()).unwrap(), dims512());
        assert_eq!(v, 511.0);
    }

    #[test]
    fn solid_angles_sum_to_sphere() {
        let dims = dims512();
        let total: f64 = (0..dims.height)
            .map(|v| pixel_solid_angle(v, dims) * dims.width as f64)
            .sum();
        assert!((total / (4.0 * PI) - 1.0).abs() < 1e-3);
        let eq = pixel_solid_angle(dims.height / 2 - 1, dims);
        let pole = pixel_solid_angle(0, dims);
        let ratio = polar_of_row(255.0, 512).sin() / polar_of_row(0.0, 512).sin();
        assert!((eq / pole - ratio).abs() < 1e-9);
        for v in 0..dims.height {
            assert!(pixel_solid_angle(v, dims) > 0.0);
            let mirror = pixel_solid_angle(dims.height - 1 - v, dims);
            assert!((pixel_solid_angle(v, dims) - mirror).abs() < 1e-15);
        }
        let big = Dims::with_height(1 << 14).unwrap();
        assert!(pixel_solid_angle(big.height / 2, big) < 1e-7);
    }

    #[test]
    fn sampling_exact_at_centers_and_wraps_seam() {
        let dims = Dims::new(4, 8).unwrap();
        let img = EquirectImage::from_fn(dims, 1, |u, v, p| p[0] = (u + 10 * v) as f64).unwrap();
        for mode in [SampleMode::Nearest, SampleMode::Bilinear] {
            assert_eq!(sample(&img, 3.0, 2.0, mode), vec![23.0]);
        }
        // u = W - 0.25 is three quarters of the way from column 7 to column 0.
        let s = sample(&img, 7.75, 1.0, SampleMode::Bilinear)[0];
        assert!((s - (0.25 * 17.0 + 0.75 * 10.0)).abs() < 1e-12);
        // Rows clamp at the poles.
        assert_eq!(sample(&img, 2.0, -0.4, SampleMode::Bilinear), vec![2.0]);
        assert_eq!(sample(&img, 2.0, 3.4, SampleMode::Bilinear), vec![32.0]);

        let flat = EquirectImage::filled(dims, 3, 0.7).unwrap();
        let s = sample(&flat, 5.3, 1.9, SampleMode::Bilinear);
        assert!(s.iter().all(|&x| (x - 0.7).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn round_trip_and_unit_length(u in 0.0f64..1023.99, v in 0.0f64..511.0) {
            let dims = dims512();
            let d = pixel_to_dir(u, v, dims).unwrap();
            prop_assert!((d.norm() - 1.0).abs() < 1e-9);
            let (u2, v2) = dir_to_pixel(&d, dims);
            let du = (u2 - u).abs().min(1024.0 - (u2 - u).abs());
            prop_assert!(du < 1e-6, "u {} -> {}", u, u2);
            prop_assert!((v2 - v).abs() < 1e-6, "v {} -> {}", v, v2);
        }
    }
}
