//! Raster containers shared by every stage: equirectangular float images
//! and per-pixel boolean masks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{PanoError, Result};

/// Height and width of an equirectangular raster. Always `width == 2 * height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width != 2 * height {
            return Err(PanoError::domain(format!(
                "equirectangular dims must satisfy width == 2*height > 0, got {height}x{width}"
            )));
        }
        Ok(Dims { height, width })
    }

    /// Full-sphere dims for a given number of rows.
    pub fn with_height(height: usize) -> Result<Self> {
        Dims::new(height, 2 * height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Column index with azimuthal wrap.
    #[inline]
    pub fn wrap_u(&self, u: isize) -> usize {
        u.rem_euclid(self.width as isize) as usize
    }

    /// Row index clamped to the image.
    #[inline]
    pub fn clamp_v(&self, v: isize) -> usize {
        v.clamp(0, self.height as isize - 1) as usize
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// H×W×C map of reals in equirectangular projection, row-major and
/// channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct EquirectImage {
    dims: Dims,
    channels: usize,
    data: Vec<f64>,
}

impl EquirectImage {
    pub fn zeros(dims: Dims, channels: usize) -> Result<Self> {
        Self::filled(dims, channels, 0.0)
    }

    pub fn filled(dims: Dims, channels: usize, value: f64) -> Result<Self> {
        check_channels(channels)?;
        Ok(EquirectImage {
            dims,
            channels,
            data: vec![value; dims.len() * channels],
        })
    }

    pub fn from_vec(dims: Dims, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_channels(channels)?;
        if data.len() != dims.len() * channels {
            return Err(PanoError::mismatch(
                format!("{} values for {dims}x{channels}", dims.len() * channels),
                data.len(),
            ));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(PanoError::domain(format!(
                "non-finite value at index {bad}"
            )));
        }
        Ok(EquirectImage {
            dims,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(u, v, out)` for every pixel.
    pub fn from_fn(
        dims: Dims,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut img = Self::zeros(dims, channels)?;
        for v in 0..dims.height {
            for u in 0..dims.width {
                f(u, v, img.pixel_mut(u, v));
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[f64] {
        let i = self.dims.index(u, v) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f64] {
        let i = self.dims.index(u, v) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn at(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, pixel: usize) -> &mut [f64] {
        &mut self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }

    /// Rows as channel-interleaved slices.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dims.width * self.channels)
    }

    pub fn same_shape(&self, other: &EquirectImage) -> Result<()> {
        if self.dims != other.dims || self.channels != other.channels {
            return Err(PanoError::mismatch(
                format!("{}x{}", self.dims, self.channels),
                format!("{}x{}", other.dims, other.channels),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> EquirectImage {
        EquirectImage {
            dims: self.dims,
            channels: self.channels,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_non_negative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    /// Mean over channels.
    pub fn to_gray(&self) -> EquirectImage {
        let c = self.channels as f64;
        EquirectImage {
            dims: self.dims,
            channels: 1,
            data: self
                .data
                .chunks_exact(self.channels)
                .map(|p| p.iter().sum::<f64>() / c)
                .collect(),
        }
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> EquirectImage {
        assert!(c < self.channels);
        EquirectImage {
            dims: self.dims,
            channels: 1,
            data: self
                .data
                .chunks_exact(self.channels)
                .map(|p| p[c])
                .collect(),
        }
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if !(1..=4).contains(&channels) {
        return Err(PanoError::domain(format!(
            "channel count must be in 1..=4, got {channels}"
        )));
    }
    Ok(())
}

/// Per-pixel boolean mask over an equirectangular grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(dims: Dims, value: bool) -> Self {
        Mask {
            dims,
            bits: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(PanoError::mismatch(dims.len(), bits.len()));
        }
        Ok(Mask { dims, bits })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, pixel: usize) -> bool {
        self.bits[pixel]
    }

    #[inline]
    pub fn set(&mut self, pixel: usize, value: bool) {
        self.bits[pixel] = value;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            dims: self.dims,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.dims != dims {
            return Err(PanoError::mismatch(dims, self.dims));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_require_two_to_one() {
        assert!(Dims::new(4, 8).is_ok());
        assert!(Dims::new(4, 7).is_err());
        assert!(Dims::new(0, 0).is_err());
    }

    #[test]
    fn rejects_bad_channel_counts_and_non_finite() {
        let d = Dims::new(1, 2).unwrap();
        assert!(EquirectImage::zeros(d, 0).is_err());
        assert!(EquirectImage::zeros(d, 5).is_err());
        assert!(EquirectImage::from_vec(d, 1, vec![1.0, f64::NAN]).is_err());
        assert!(EquirectImage::from_vec(d, 1, vec![1.0]).is_err());
    }

    #[test]
    fn wrap_and_clamp() {
        let d = Dims::new(4, 8).unwrap();
        assert_eq!(d.wrap_u(-1), 7);
        assert_eq!(d.wrap_u(8), 0);
        assert_eq!(d.clamp_v(-3), 0);
        assert_eq!(d.clamp_v(9), 3);
    }
}
