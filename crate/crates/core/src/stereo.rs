//! Vertical stereo on an equirectangular top/bottom pair.
//!
//! Both cameras share the same azimuth for every scene point, so matching
//! only searches along columns. A point seen at row `v_t` in the top image
//! appears higher (smaller `v`) in the bottom image.
//!
//! Triangulation works with polar angles measured from the nadir (the
//! top→bottom baseline direction), `θ = π − ϑ(v)`. In that frame the angular
//! disparity is `Δθ = θ_b − θ_t = (π/H)(v_t − v_b)` and the distance from the
//! top camera is
//!
//! ```text
//! d_t = b (sin θ_t / tan Δθ + cos θ_t)
//! ```

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equirect::{polar_of_row, CameraRig, DirectionTable, Vec3};
use crate::error::{PanoError, Result};
use crate::image::{Dims, EquirectImage, Mask};
use crate::nearest::nearest_sources;

/// Disparities at or below this many radians are treated as points at infinity.
pub const DISPARITY_EPS: f64 = 1e-6;

/// Angular disparity Δθ in radians for matched rows `v_t` (top) and `v_b`
/// (bottom) of an image with `height` rows.
pub fn angular_disparity(v_t: f64, v_b: f64, height: usize) -> f64 {
    PI / height as f64 * (v_t - v_b)
}

/// Distance from the top camera by triangulation. `theta_t` is the polar
/// angle from the nadir. Returns `None` for points at infinity
/// (`delta <= DISPARITY_EPS`) and for non-positive or non-finite results.
pub fn depth_from_disparity(theta_t: f64, delta: f64, baseline: f64) -> Option<f64> {
    depth_from_disparity_eps(theta_t, delta, baseline, DISPARITY_EPS)
}

pub fn depth_from_disparity_eps(theta_t: f64, delta: f64, baseline: f64, eps: f64) -> Option<f64> {
    if !(delta > eps) || !(baseline > 0.0) {
        return None;
    }
    let d = baseline * (theta_t.sin() / delta.tan() + theta_t.cos());
    (d.is_finite() && d > 0.0).then_some(d)
}

/// Polar angle from the nadir of row `v`, the angle the triangulation uses.
#[inline]
pub fn nadir_angle_of_row(v: f64, height: usize) -> f64 {
    PI - polar_of_row(v, height)
}

/// Per-pixel Δθ in radians with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    pub values: EquirectImage,
    pub valid: Mask,
}

/// Per-pixel distance from the reference camera center in meters. Invalid
/// pixels hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub values: EquirectImage,
    pub valid: Mask,
}

impl DisparityMap {
    pub fn dims(&self) -> Dims {
        self.values.dims()
    }
}

impl DepthMap {
    /// A fully valid depth map. Values must be positive and finite.
    pub fn dense(values: EquirectImage) -> Result<Self> {
        if values.channels() != 1 {
            return Err(PanoError::domain("depth maps have one channel"));
        }
        if let Some(i) = values.data().iter().position(|&d| !(d > 0.0)) {
            return Err(PanoError::domain(format!(
                "non-positive depth at pixel {i}"
            )));
        }
        let valid = Mask::new(values.dims(), true);
        Ok(DepthMap { values, valid })
    }

    pub fn dims(&self) -> Dims {
        self.values.dims()
    }

    pub fn is_dense(&self) -> bool {
        self.valid.count() == self.dims().len()
    }

    #[inline]
    pub fn depth(&self, pixel: usize) -> f64 {
        self.values.data()[pixel]
    }

    /// Copies every invalid pixel from its nearest valid pixel (great-circle
    /// distance). The result is dense; `valid` keeps the original mask.
    pub fn fill_invalid_nearest(&self) -> Result<DepthMap> {
        let table = DirectionTable::new(self.dims());
        let src = nearest_sources(&table, self.valid.bits())
            .map_err(|_| PanoError::domain("depth map has no valid pixel to inpaint from"))?;
        let data = self.values.data();
        let filled: Vec<f64> = src.iter().map(|&s| data[s]).collect();
        Ok(DepthMap {
            values: EquirectImage::from_vec(self.dims(), 1, filled)?,
            valid: self.valid.clone(),
        })
    }

    /// 3D points (depth × ray) in the reference frame.
    pub fn points(&self, table: &DirectionTable) -> Vec<Vec3> {
        debug_assert_eq!(table.dims(), self.dims());
        self.values
            .data()
            .iter()
            .zip(table.dirs())
            .map(|(&d, dir)| dir * d)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchCost {
    Sad,
    Zncc,
}

impl std::str::FromStr for MatchCost {
    type Err = PanoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sad" => Ok(MatchCost::Sad),
            "zncc" => Ok(MatchCost::Zncc),
            _ => Err(PanoError::domain(format!("unknown match cost {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Odd window side in pixels.
    pub window: usize,
    /// Largest row offset searched, in pixels.
    pub max_disparity: usize,
    pub cost: MatchCost,
    /// Parabolic sub-pixel refinement of the winning offset.
    pub subpixel: bool,
    /// Maximum top/bottom disagreement in pixels before a match is dropped.
    pub lr_check_threshold: f64,
    /// Fraction of rows at each pole that is always invalid.
    pub pole_band: f64,
    /// Windows whose intensity standard deviation falls below this are
    /// treated as textureless.
    pub min_texture: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            window: 9,
            max_disparity: 64,
            cost: MatchCost::Zncc,
            subpixel: true,
            lr_check_threshold: 1.0,
            pole_band: 0.05,
            min_texture: 1e-4,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(PanoError::domain(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.max_disparity < 1 {
            return Err(PanoError::domain("max_disparity must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.pole_band) {
            return Err(PanoError::domain("pole_band must be in [0, 0.5)"));
        }
        if !(self.lr_check_threshold >= 0.0) {
            return Err(PanoError::domain("lr_check_threshold must be >= 0"));
        }
        Ok(())
    }
}

/// Horizontal box sum with azimuthal wrap.
fn box_row(src: &[f64], half: usize, out: &mut [f64]) {
    let w = src.len() as isize;
    let at = |i: isize| src[i.rem_euclid(w) as usize];
    let h = half as isize;
    let mut s: f64 = (-h..=h).map(at).sum();
    for u in 0..w {
        out[u as usize] = s;
        s += at(u + 1 + h) - at(u - h);
    }
}

/// Window sums of `x` and `x²` for rows whose window fits vertically.
struct WindowStats {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl WindowStats {
    fn new(img: &[f64], dims: Dims, half: usize) -> Self {
        let (h, w) = (dims.height, dims.width);
        let mut rs = vec![0.0; h * w];
        let mut rq = vec![0.0; h * w];
        let sq: Vec<f64> = img.iter().map(|x| x * x).collect();
        for v in 0..h {
            box_row(&img[v * w..(v + 1) * w], half, &mut rs[v * w..(v + 1) * w]);
            box_row(&sq[v * w..(v + 1) * w], half, &mut rq[v * w..(v + 1) * w]);
        }
        let mut sum = vec![0.0; h * w];
        let mut sum_sq = vec![0.0; h * w];
        for v in half..h.saturating_sub(half) {
            for u in 0..w {
                let (mut a, mut b) = (0.0, 0.0);
                for r in v - half..=v + half {
                    a += rs[r * w + u];
                    b += rq[r * w + u];
                }
                sum[v * w + u] = a;
                sum_sq[v * w + u] = b;
            }
        }
        WindowStats { sum, sum_sq }
    }
}

struct Matcher<'a> {
    top: &'a [f64],
    bottom: &'a [f64],
    dims: Dims,
    half: usize,
    n: f64,
    cfg: &'a MatchConfig,
    stats_top: WindowStats,
    stats_bottom: WindowStats,
}

impl<'a> Matcher<'a> {
    fn new(top: &'a [f64], bottom: &'a [f64], dims: Dims, cfg: &'a MatchConfig) -> Self {
        let half = cfg.window / 2;
        Matcher {
            top,
            bottom,
            dims,
            half,
            n: (cfg.window * cfg.window) as f64,
            cfg,
            stats_top: WindowStats::new(top, dims, half),
            stats_bottom: WindowStats::new(bottom, dims, half),
        }
    }

    fn fits(&self, v: isize) -> bool {
        v >= self.half as isize && v + (self.half as isize) < self.dims.height as isize
    }

    fn textured(&self, stats: &WindowStats, p: usize) -> bool {
        let var = (stats.sum_sq[p] - stats.sum[p] * stats.sum[p] / self.n) / self.n;
        var > self.cfg.min_texture * self.cfg.min_texture
    }

    /// Cost from precomputed window sums; `cross` is Σab (ZNCC) or Σ|a-b| (SAD).
    fn cost_from_sums(&self, p_top: usize, p_bot: usize, cross: f64) -> f64 {
        if !self.textured(&self.stats_top, p_top) || !self.textured(&self.stats_bottom, p_bot) {
            return f64::INFINITY;
        }
        match self.cfg.cost {
            MatchCost::Sad => cross / self.n,
            MatchCost::Zncc => {
                let (st, sb) = (&self.stats_top, &self.stats_bottom);
                let va = st.sum_sq[p_top] - st.sum[p_top] * st.sum[p_top] / self.n;
                let vb = sb.sum_sq[p_bot] - sb.sum[p_bot] * sb.sum[p_bot] / self.n;
                let cov = cross - st.sum[p_top] * sb.sum[p_bot] / self.n;
                1.0 - cov / (va * vb).sqrt()
            }
        }
    }

    /// Cost of matching top pixel (u, v) against bottom pixel (u, v - k),
    /// evaluated directly from the windows.
    fn cost_at(&self, u: usize, v: usize, k: isize) -> f64 {
        let vb = v as isize - k;
        if !self.fits(v as isize) || !self.fits(vb) {
            return f64::INFINITY;
        }
        let (w, half) = (self.dims.width, self.half as isize);
        let mut cross = 0.0;
        for dv in -half..=half {
            let rt = (v as isize + dv) as usize * w;
            let rb = (vb + dv) as usize * w;
            for du in -half..=half {
                let c = self.dims.wrap_u(u as isize + du);
                let (a, b) = (self.top[rt + c], self.bottom[rb + c]);
                cross += match self.cfg.cost {
                    MatchCost::Sad => (a - b).abs(),
                    MatchCost::Zncc => a * b,
                };
            }
        }
        self.cost_from_sums(v * w + u, vb as usize * w + u, cross)
    }

    /// Cost image for offset `k`: entry (u, v) compares top row v with
    /// bottom row v - k.
    fn cost_slice(&self, k: usize, out: &mut [f64]) {
        let (h, w, half) = (self.dims.height, self.dims.width, self.half);
        let mut row_box = vec![0.0; h * w];
        row_box[k * w..]
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(i, out_row)| {
                let r = i + k;
                let a = &self.top[r * w..(r + 1) * w];
                let b = &self.bottom[(r - k) * w..(r - k + 1) * w];
                let prod: Vec<f64> = match self.cfg.cost {
                    MatchCost::Sad => a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect(),
                    MatchCost::Zncc => a.iter().zip(b).map(|(x, y)| x * y).collect(),
                };
                box_row(&prod, half, out_row);
            });
        out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
            if !self.fits(v as isize) || !self.fits(v as isize - k as isize) {
                row.fill(f64::INFINITY);
                return;
            }
            for (u, c) in row.iter_mut().enumerate() {
                let mut cross = 0.0;
                for r in v - half..=v + half {
                    cross += row_box[r * w + u];
                }
                *c = self.cost_from_sums(v * w + u, (v - k) * w + u, cross);
            }
        });
    }
}

/// Winner-take-all vertical matching of `top` against `bottom`, with
/// optional parabolic sub-pixel refinement and a top/bottom consistency
/// check. Rows inside the pole bands and textureless windows are invalid.
pub fn match_vertical(
    top: &EquirectImage,
    bottom: &EquirectImage,
    cfg: &MatchConfig,
) -> Result<DisparityMap> {
    cfg.validate()?;
    top.same_shape(bottom)?;
    let dims = top.dims();
    let (h, w) = (dims.height, dims.width);
    let top_gray = top.to_gray();
    let bottom_gray = bottom.to_gray();
    let m = Matcher::new(top_gray.data(), bottom_gray.data(), dims, cfg);

    let mut best_top = vec![(f64::INFINITY, 0usize); h * w];
    let mut best_bot = vec![(f64::INFINITY, 0usize); h * w];
    let mut slice = vec![0.0; h * w];
    for k in 0..=cfg.max_disparity.min(h.saturating_sub(1)) {
        m.cost_slice(k, &mut slice);
        best_top
            .par_iter_mut()
            .zip(slice.par_iter())
            .for_each(|(b, &c)| {
                if c < b.0 {
                    *b = (c, k);
                }
            });
        // Bottom row vb pairs with top row vb + k.
        let limit = (h - k) * w;
        best_bot[..limit]
            .par_iter_mut()
            .zip(slice[k * w..].par_iter())
            .for_each(|(b, &c)| {
                if c < b.0 {
                    *b = (c, k);
                }
            });
    }

    let band = (cfg.pole_band * h as f64).ceil() as usize;
    let mut values = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    values
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (vals, oks))| {
            if v < band || v >= h - band {
                return;
            }
            for u in 0..w {
                let (cost, k) = best_top[v * w + u];
                if !cost.is_finite() {
                    continue;
                }
                let (_, k_back) = best_bot[(v - k) * w + u];
                if (k as f64 - k_back as f64).abs() > cfg.lr_check_threshold {
                    continue;
                }
                let mut offset = 0.0;
                if cfg.subpixel && k > 0 && k < cfg.max_disparity {
                    let lo = m.cost_at(u, v, k as isize - 1);
                    let hi = m.cost_at(u, v, k as isize + 1);
                    let denom = lo - 2.0 * cost + hi;
                    if lo.is_finite() && hi.is_finite() && denom > 0.0 {
                        offset = (0.5 * (lo - hi) / denom).clamp(-0.5, 0.5);
                    }
                }
                let k_sub = k as f64 + offset;
                vals[u] = angular_disparity(v as f64, v as f64 - k_sub, h);
                oks[u] = true;
            }
        });
    Ok(DisparityMap {
        values: EquirectImage::from_vec(dims, 1, values)?,
        valid: Mask::from_vec(dims, valid)?,
    })
}

/// Triangulates every valid disparity. Pixels at infinity become invalid.
pub fn disparity_to_depth(disp: &DisparityMap, rig: &CameraRig) -> DepthMap {
    let dims = disp.dims();
    let mut values = vec![0.0; dims.len()];
    let mut valid = vec![false; dims.len()];
    for v in 0..dims.height {
        let theta_t = nadir_angle_of_row(v as f64, dims.height);
        for u in 0..dims.width {
            let p = dims.index(u, v);
            if !disp.valid.get(p) {
                continue;
            }
            if let Some(d) = depth_from_disparity(theta_t, disp.values.data()[p], rig.baseline()) {
                values[p] = d;
                valid[p] = true;
            }
        }
    }
    DepthMap {
        values: EquirectImage::from_vec(dims, 1, values).expect("finite depths"),
        valid: Mask::from_vec(dims, valid).expect("matching dims"),
    }
}
